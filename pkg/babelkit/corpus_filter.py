"""Filtres de nettoyage : règles de normalisation et seuil de score qualité."""
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping
from pydantic import BaseModel, ConfigDict, Field, field_validator
import logging
import unicodedata

from joblib import Parallel, delayed

from babelkit.errors import CorpusFormatError
from babelkit.languages import UNDETERMINED, is_known_language

logger = logging.getLogger(__name__)

CATEGORIES = ("web", "news", "wiki", "textbook", "other")


def _check_utf8(text: str) -> str:
    try:
        text.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise ValueError(f"invalid UTF-8: {exc.reason} à la position {exc.start}") from None
    return text


class Document(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    text: str
    lang: str
    source: str = "web"
    score: float | None = Field(default=None, ge=0.0, le=1.0)
    tokens: int | None = Field(default=None, ge=0)

    @field_validator("text")
    @classmethod
    def text_is_utf8(cls, value: str) -> str:
        return _check_utf8(value)

    @field_validator("lang")
    @classmethod
    def lang_in_registry(cls, value: str) -> str:
        if value != UNDETERMINED and not is_known_language(value):
            raise ValueError(f"unknown language: {value!r} (registre ou 'und')")
        return value

    @property
    def category(self) -> str:
        return self.source if self.source in CATEGORIES else "other"


class FilterRules(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_chars: int = Field(default=100, ge=0)
    max_digit_ratio: float = Field(default=0.3, ge=0.0, le=1.0)


class RejectReason(str, Enum):
    TOO_SHORT = "TooShort"
    TOO_MANY_DIGITS = "TooManyDigits"
    UNSCORED = "Unscored"
    LOW_SCORE = "LowScore"


@dataclass(frozen=True)
class Rejection:
    id: str
    reason: RejectReason
    detail: str = ""

    def to_dict(self) -> dict:
        return {"id": self.id, "reason": self.reason.value, "detail": self.detail}


@dataclass(frozen=True)
class FilterResult:
    reason: RejectReason | None = None
    detail: str = ""

    @property
    def kept(self) -> bool:
        return self.reason is None


KEEP = FilterResult()


def measure_text(text: str) -> tuple[int, int]:
    """(longueur, chiffres) en scalaires Unicode après NFC et trim."""
    normalized = unicodedata.normalize("NFC", text).strip()
    return len(normalized), sum(ch.isdecimal() for ch in normalized)


def normalize_filter(doc: Document, rules: FilterRules) -> FilterResult:
    try:
        _check_utf8(doc.text)
    except ValueError as exc:
        raise CorpusFormatError(f"{exc} (document {doc.id})") from None
    length, digits = measure_text(doc.text)
    if length == 0 or length < rules.min_chars:
        return FilterResult(RejectReason.TOO_SHORT, f"{length} caractères < {rules.min_chars}")
    ratio = digits / length
    if ratio > rules.max_digit_ratio:
        return FilterResult(RejectReason.TOO_MANY_DIGITS, f"{ratio:.4f} de chiffres > {rules.max_digit_ratio}")
    return KEEP


@dataclass
class GateResult:
    kept: list[Document] = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)
    counts: Counter = field(default_factory=Counter)


def score_gate(docs: Iterable[Document], threshold: float, sidecar: Mapping[str, float] | None = None) -> GateResult:
    """Garde un document si score >= seuil ; le score du document prime sur le sidecar."""
    sidecar = sidecar or {}
    result = GateResult()
    for doc in docs:
        score = doc.score if doc.score is not None else sidecar.get(doc.id)
        if score is None:
            result.rejections.append(Rejection(doc.id, RejectReason.UNSCORED, "aucun score"))
            result.counts[RejectReason.UNSCORED.value] += 1
        elif score < threshold:
            result.rejections.append(Rejection(doc.id, RejectReason.LOW_SCORE, f"{score} < {threshold}"))
            result.counts[RejectReason.LOW_SCORE.value] += 1
        else:
            result.kept.append(doc)
            result.counts["kept"] += 1
    return result


def _filter_batch(batch: list[Document], rules: FilterRules) -> list[FilterResult]:
    return [normalize_filter(doc, rules) for doc in batch]


def clean_corpus(
    docs: list[Document],
    rules: FilterRules,
    threshold: float | None = None,
    sidecar: Mapping[str, float] | None = None,
    threads: int = 1,
    batch_size: int = 1000,
) -> GateResult:
    """Règles puis (optionnellement) seuil de score ; journal de rejet trié par id."""
    batches = [docs[i : i + batch_size] for i in range(0, len(docs), batch_size)]
    verdicts = Parallel(n_jobs=threads, prefer="threads")(delayed(_filter_batch)(b, rules) for b in batches)

    result = GateResult()
    survivors = []
    for doc, verdict in zip(docs, (v for batch in verdicts for v in batch)):
        if verdict.kept:
            survivors.append(doc)
        else:
            result.rejections.append(Rejection(doc.id, verdict.reason, verdict.detail))
            result.counts[verdict.reason.value] += 1

    if threshold is None:
        result.kept = survivors
        result.counts["kept"] = len(survivors)
    else:
        gated = score_gate(survivors, threshold, sidecar)
        result.kept = gated.kept
        result.rejections.extend(gated.rejections)
        result.counts.update(gated.counts)

    result.rejections.sort(key=lambda r: r.id)
    logger.info("%d documents traités, %d gardés, %d rejetés", len(docs), len(result.kept), len(result.rejections))
    return result
