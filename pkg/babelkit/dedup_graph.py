"""Déduplication : hachage exact, MinHash + LSH, graphe des paires, retrait.

1. exact_dedup     empreinte 128 bits du texte normalisé (NFC, espaces réduits)
2. signatures      MinHash sur des 5-grammes de mots, par langue
3. lsh_pairs       paires candidates par bandes, filtrées sur la Jaccard estimée
4. build_clusters  composantes connexes ; on garde le plus petit id par cluster
"""
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence
from pydantic import BaseModel, ConfigDict, Field, model_validator
import hashlib
import logging
import unicodedata

from datasketch import MinHash, MinHashLSH
from joblib import Parallel, delayed
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
import numpy as np

from babelkit.corpus_filter import Document
from babelkit.errors import DedupError

logger = logging.getLogger(__name__)

MERSENNE_PRIME = (1 << 61) - 1


class MinHashParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    shingle_k: int = Field(default=5, ge=1)
    num_perm: int = Field(default=256, ge=2)
    bands: int = Field(default=32, ge=1)
    rows: int = Field(default=8, ge=1)
    jaccard_threshold: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_banding(self):
        if self.bands * self.rows != self.num_perm:
            raise ValueError(f"bands x rows ({self.bands} x {self.rows}) doit valoir num_perm ({self.num_perm})")
        return self


@dataclass(frozen=True)
class CandidatePair:
    id_a: str
    id_b: str
    estimate: float


@dataclass
class DedupReport:
    exact_groups: list[list[str]] = field(default_factory=list)
    candidate_pairs: list[CandidatePair] = field(default_factory=list)
    clusters: list[list[str]] = field(default_factory=list)
    kept: list[str] = field(default_factory=list)
    removed: list[tuple[str, str]] = field(default_factory=list)
    shard_sizes: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["candidate_pairs"] = [[p.id_a, p.id_b, p.estimate] for p in self.candidate_pairs]
        data["removed"] = [list(r) for r in self.removed]
        return data


def normalize_for_hash(text: str) -> str:
    return " ".join(unicodedata.normalize("NFC", text).split())


def content_digest(text: str) -> str:
    return hashlib.blake2b(normalize_for_hash(text).encode("utf-8"), digest_size=16).hexdigest()


def _check_unique_ids(docs: Sequence[Document]) -> None:
    seen, dupes = set(), set()
    for doc in docs:
        (dupes if doc.id in seen else seen).add(doc.id)
    if dupes:
        raise DedupError(f"duplicate ids: {sorted(dupes)[:10]}")


def exact_dedup(docs: Sequence[Document]) -> tuple[list[Document], list[list[str]]]:
    """Le premier document (ordre d'entrée) de chaque groupe survit."""
    _check_unique_ids(docs)
    groups: dict[str, list[str]] = {}
    survivors = []
    for doc in docs:
        digest = content_digest(doc.text)
        if digest in groups:
            groups[digest].append(doc.id)
        else:
            groups[digest] = [doc.id]
            survivors.append(doc)
    return survivors, [ids for ids in groups.values() if len(ids) > 1]


def shingles(text: str, k: int) -> set[str]:
    words = normalize_for_hash(text).split()
    if len(words) < k:
        return set()
    return {" ".join(words[i : i + k]) for i in range(len(words) - k + 1)}


@lru_cache(maxsize=16)
def _permutations(num_perm: int, seed: int) -> np.ndarray:
    # default_rng accepte une graine 64 bits complète, contrairement à RandomState
    rng = np.random.default_rng(seed)
    a = rng.integers(1, MERSENNE_PRIME, size=num_perm, dtype=np.uint64)
    b = rng.integers(0, MERSENNE_PRIME, size=num_perm, dtype=np.uint64)
    return np.array([a, b], dtype=np.uint64)


def minhash_signature(doc: Document, params: MinHashParams) -> MinHash | None:
    """Signature MinHash ; None si le texte a moins de shingle_k mots.

    datasketch stocke num_perm valeurs en uint64, mais chacune est réduite à
    32 bits (max_hash = 2**32 - 1) : la largeur utile est donc de 32 bits.
    """
    grams = shingles(doc.text, params.shingle_k)
    if not grams:
        return None
    signature = MinHash(num_perm=params.num_perm, seed=params.seed, permutations=_permutations(params.num_perm, params.seed))
    signature.update_batch([g.encode("utf-8") for g in sorted(grams)])
    return signature


def signature_match(a: MinHash, b: MinHash) -> float:
    return float(np.count_nonzero(a.hashvalues == b.hashvalues)) / len(a.hashvalues)


def lsh_pairs(signatures: dict[str, MinHash], params: MinHashParams) -> list[CandidatePair]:
    bad = sorted(key for key, sig in signatures.items() if len(sig.hashvalues) != params.num_perm)
    if bad:
        raise DedupError(f"signature length mismatch: {bad[:10]} (num_perm={params.num_perm})")

    index = MinHashLSH(num_perm=params.num_perm, params=(params.bands, params.rows))
    keys = sorted(signatures)
    for key in keys:
        index.insert(key, signatures[key], check_duplication=False)

    candidates = set()
    for key in keys:
        for other in index.query(signatures[key]):
            if other != key:
                candidates.add((min(key, other), max(key, other)))

    pairs = []
    for id_a, id_b in sorted(candidates):
        estimate = signature_match(signatures[id_a], signatures[id_b])
        if estimate >= params.jaccard_threshold:
            pairs.append(CandidatePair(id_a, id_b, estimate))
    return pairs


def build_clusters(pairs: Iterable[CandidatePair | tuple]) -> list[list[str]]:
    """Composantes connexes (taille >= 2) du graphe non orienté des paires."""
    edges = [(p.id_a, p.id_b) if isinstance(p, CandidatePair) else (p[0], p[1]) for p in pairs]
    if not edges:
        return []
    nodes = sorted({n for edge in edges for n in edge})
    position = {n: i for i, n in enumerate(nodes)}
    rows = [position[a] for a, _ in edges]
    cols = [position[b] for _, b in edges]
    graph = coo_matrix((np.ones(len(edges), dtype=np.int8), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, labels = connected_components(graph, directed=False)

    components = defaultdict(list)
    for node, label in zip(nodes, labels):
        components[label].append(node)
    clusters = [sorted(members) for members in components.values() if len(members) > 1]
    return sorted(clusters)


def _shard_signatures(docs: list[Document], params: MinHashParams, threads: int) -> dict[str, MinHash]:
    computed = Parallel(n_jobs=threads, prefer="threads")(delayed(minhash_signature)(doc, params) for doc in docs)
    return {doc.id: sig for doc, sig in zip(docs, computed) if sig is not None}


def dedup(docs: Sequence[Document], params: MinHashParams, threads: int = 1) -> tuple[list[Document], DedupReport]:
    survivors, exact_groups = exact_dedup(docs)
    logger.info("Hachage exact : %d groupes de doublons, %d survivants", len(exact_groups), len(survivors))

    shards: dict[str, list[Document]] = defaultdict(list)
    for doc in survivors:
        shards[doc.lang].append(doc)

    report = DedupReport(exact_groups=exact_groups)
    for lang in sorted(shards):
        shard = shards[lang]
        signatures = _shard_signatures(shard, params, threads)
        pairs = lsh_pairs(signatures, params)
        report.candidate_pairs.extend(pairs)
        report.clusters.extend(build_clusters(pairs))
        report.shard_sizes[lang] = len(shard)
        logger.info("Langue %s : %d documents, %d paires candidates", lang, len(shard), len(pairs))

    representative: dict[str, str] = {}
    for cluster in report.clusters:
        for member in cluster[1:]:
            representative[member] = cluster[0]
    for group in exact_groups:
        keeper = representative.get(group[0], group[0])
        for member in group[1:]:
            representative[member] = keeper

    report.candidate_pairs.sort(key=lambda p: (p.id_a, p.id_b))
    report.clusters.sort()
    report.removed = sorted(representative.items())
    kept_docs = [doc for doc in docs if doc.id not in representative]
    report.kept = [doc.id for doc in kept_docs]
    logger.info("Déduplication terminée : %d gardés, %d retirés", len(report.kept), len(report.removed))
    return kept_docs, report
