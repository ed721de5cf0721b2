from itertools import combinations

import numpy as np
import pytest

from conftest import make_doc

from babelkit.dedup_graph import (
    CandidatePair,
    MinHashParams,
    build_clusters,
    dedup,
    exact_dedup,
    lsh_pairs,
    minhash_signature,
    shingles,
    signature_match,
)
from babelkit.errors import DedupError

PARAMS = MinHashParams(seed=42)


def _jaccard(a: set, b: set) -> float:
    return len(a & b) / len(a | b) if a | b else 0.0


def _union_find_clusters(pairs) -> list[list[str]]:
    parent = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        parent[find(a)] = find(b)
    groups = {}
    for node in list(parent):
        groups.setdefault(find(node), []).append(node)
    return sorted(sorted(g) for g in groups.values() if len(g) > 1)


@pytest.fixture(scope="module")
def planted_corpus():
    """120 originaux, 40 quasi-doublons (dernier mot changé), 40 doublons exacts (espaces doublés)."""
    rng = np.random.default_rng(7)
    originals = [[f"w{n}" for n in rng.integers(0, 20_000, size=60)] for _ in range(120)]
    texts = [" ".join(words) for words in originals]
    texts += [" ".join(originals[i][:-1] + [f"edit{i}"]) for i in range(40)]
    texts += ["  ".join(originals[i]) for i in range(40, 80)]
    return [make_doc(f"d{i:03d}", text) for i, text in enumerate(texts)]


def test_exact_groups():
    docs = [make_doc("a", "same text"), make_doc("b", "same text"), make_doc("c", "same text")]
    survivors, groups = exact_dedup(docs)
    assert [d.id for d in survivors] == ["a"]
    assert groups == [["a", "b", "c"]]


def test_whitespace_runs_are_normalized():
    _, groups = exact_dedup([make_doc("a", "one two  three"), make_doc("b", " one   two three\n")])
    assert groups == [["a", "b"]]


def test_distinct_corpus_has_no_groups():
    docs = [make_doc(str(i), f"text {i}") for i in range(5)]
    survivors, groups = exact_dedup(docs)
    assert survivors == docs
    assert groups == []


def test_duplicate_ids_are_rejected():
    with pytest.raises(DedupError, match="duplicate ids"):
        dedup([make_doc("a", "x"), make_doc("a", "y")], PARAMS)


def test_identical_documents_have_identical_signatures():
    a = minhash_signature(make_doc("a", "one two three four five six"), PARAMS)
    b = minhash_signature(make_doc("b", "one two three four five six"), PARAMS)
    assert np.array_equal(a.hashvalues, b.hashvalues)
    assert signature_match(a, b) == 1.0


def test_short_documents_have_no_signature():
    assert shingles("one two three", 5) == set()
    assert minhash_signature(make_doc("a", "one two three"), PARAMS) is None


def _constructed_pair(tag: str, overlap: int, only: int, params: MinHashParams):
    shared = [f"{tag}s{i}" for i in range(overlap)]
    left = shared + [f"{tag}l{i}" for i in range(only)]
    right = shared + [f"{tag}r{i}" for i in range(only)]
    docs = make_doc("l", " ".join(left)), make_doc("r", " ".join(right))
    truth = _jaccard(shingles(docs[0].text, params.shingle_k), shingles(docs[1].text, params.shingle_k))
    return truth, signature_match(minhash_signature(docs[0], params), minhash_signature(docs[1], params))


@pytest.mark.parametrize("overlap, only, expected", [(0, 150, 0.0), (100, 50, 0.5), (200, 0, 1.0)])
def test_estimator_at_constructed_jaccard(overlap, only, expected):
    params = MinHashParams(shingle_k=1, seed=3)
    truth, estimate = _constructed_pair("t", overlap, only, params)
    assert truth == expected
    assert abs(estimate - expected) <= 0.1
    if expected == 0.0:
        assert estimate <= 3 / 256


def test_estimator_mean_over_constructions():
    params = MinHashParams(shingle_k=1, seed=5)
    estimates = [_constructed_pair(f"c{i}_", 100, 50, params)[1] for i in range(50)]
    assert abs(float(np.mean(estimates)) - 0.5) <= 0.05


def test_identical_signatures_are_paired():
    sig = minhash_signature(make_doc("a", "alpha beta gamma delta epsilon zeta"), PARAMS)
    assert lsh_pairs({"b": sig, "a": sig}, PARAMS) == [CandidatePair("a", "b", 1.0)]


def test_signature_length_mismatch():
    sig = minhash_signature(make_doc("a", "alpha beta gamma delta epsilon zeta"), PARAMS)
    with pytest.raises(DedupError, match="signature length mismatch"):
        lsh_pairs({"a": sig}, MinHashParams(num_perm=128, bands=16, rows=8))


def test_banding_must_cover_signature():
    with pytest.raises(ValueError):
        MinHashParams(num_perm=256, bands=30, rows=8)


@pytest.mark.parametrize(
    "pairs, expected",
    [
        ([("a", "b"), ("b", "c")], [["a", "b", "c"]]),
        ([], []),
        ([("a", "b"), ("c", "d")], [["a", "b"], ["c", "d"]]),
    ],
)
def test_clusters(pairs, expected):
    assert build_clusters(pairs) == expected


def test_clusters_match_union_find_on_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        nodes = [f"n{i:02d}" for i in range(30)]
        pairs = [tuple(rng.choice(nodes, size=2, replace=False)) for _ in range(int(rng.integers(0, 25)))]
        assert build_clusters(pairs) == _union_find_clusters(pairs)


def test_exact_only_corpus():
    docs = [make_doc("a", "one two three four five six"), make_doc("b", "one two three four five six")]
    kept, report = dedup(docs, PARAMS)
    assert [d.id for d in kept] == ["a"]
    assert report.candidate_pairs == []
    assert report.removed == [("b", "a")]


def test_planted_corpus_matches_oracles(planted_corpus):
    kept, report = dedup(planted_corpus, PARAMS, threads=2)

    # hachage exact : le premier texte normalisé rencontré survit
    seen, survivors = set(), []
    for doc in planted_corpus:
        key = " ".join(doc.text.split())
        if key not in seen:
            seen.add(key)
            survivors.append(doc)
    assert report.exact_groups == [[f"d{i:03d}", f"d{i + 120:03d}"] for i in range(40, 80)]

    grams = {doc.id: shingles(doc.text, PARAMS.shingle_k) for doc in survivors}
    truth = {
        (a, b) for a, b in combinations(sorted(grams), 2) if _jaccard(grams[a], grams[b]) >= PARAMS.jaccard_threshold
    }
    assert len(truth) == 40
    retained = {(p.id_a, p.id_b) for p in report.candidate_pairs}
    assert len(retained & truth) / len(truth) >= 0.95
    assert len(retained & truth) / len(retained) >= 0.90

    assert report.clusters == _union_find_clusters(retained)
    assert len(kept) + len(report.removed) == len(planted_corpus)
    assert {d.id for d in kept}.isdisjoint(dict(report.removed))
    assert report.shard_sizes == {"en": len(survivors)}


def test_dedup_is_deterministic(planted_corpus):
    _, first = dedup(planted_corpus, PARAMS, threads=1)
    _, second = dedup(planted_corpus, PARAMS, threads=4)
    assert first.to_dict() == second.to_dict()


def test_languages_are_deduplicated_separately():
    text = "one two three four five six seven"
    docs = [make_doc("a", text), make_doc("b", text + " eight", lang="fr")]
    kept, report = dedup(docs, PARAMS)
    assert len(kept) == 2
    assert report.shard_sizes == {"en": 1, "fr": 1}
