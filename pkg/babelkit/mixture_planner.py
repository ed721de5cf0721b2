"""Planification du mélange multilingue.

Stage 1 : répartition max-min équitable (water-filling) entre langues, puis au
prorata des disponibilités entre catégories. Stage 2 : même base, pondérée par
les boosts basse ressource / manuels, plafonnée par la disponibilité avec
redistribution jusqu'au point fixe. Calculs exacts en fractions, arrondi par
plus grands restes (langues puis catégories).
"""
from collections import defaultdict
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Iterable
import json
import logging
import math
import zlib

from joblib import Parallel, delayed
import numpy as np
import pandas as pd

from babelkit.corpus_filter import CATEGORIES, Document
from babelkit.errors import MixtureError
from babelkit.languages import ResourceClass, classify_resource

logger = logging.getLogger(__name__)

Cell = tuple[str, str]
UNITS = ("words", "chars")
BUDGET_SUFFIXES = {"": 1, "K": 10**3, "M": 10**6, "B": 10**9, "T": 10**12}


def parse_budget(raw: str | int) -> int:
    """'1.5B' -> 1_500_000_000 ; le résultat doit être un entier > 0."""
    if isinstance(raw, int):
        value = raw
    else:
        text = raw.strip().upper()
        suffix = text[-1] if text and text[-1] in BUDGET_SUFFIXES else ""
        number = text[: len(text) - len(suffix)]
        try:
            scaled = Decimal(number) * BUDGET_SUFFIXES[suffix]
        except InvalidOperation:
            raise MixtureError(f"budget illisible: {raw!r}") from None
        if not scaled.is_finite() or scaled != scaled.to_integral_value():
            raise MixtureError(f"le budget doit être un nombre entier de tokens, reçu: {raw!r}")
        value = int(scaled)
    if value <= 0:
        raise MixtureError(f"le budget doit être > 0, reçu: {raw!r}")
    return value


def document_tokens(doc: Document, unit: str = "words") -> int:
    if doc.tokens is not None:
        return doc.tokens
    if unit == "words":
        return len(doc.text.split())
    if unit == "chars":
        return len(doc.text)
    raise MixtureError(f"unité inconnue: {unit} (attendu {UNITS})")


@dataclass
class CorpusStats:
    counts: dict[Cell, int]
    unit: str = "words"

    def __post_init__(self):
        for (lang, category), value in self.counts.items():
            if category not in CATEGORIES:
                raise MixtureError(f"catégorie inconnue: {category} (attendu {CATEGORIES})")
            if not isinstance(value, int) or value < 0:
                raise MixtureError(f"disponibilité invalide pour ({lang}, {category}): {value}")

    def languages(self) -> list[str]:
        return sorted({lang for lang, _ in self.counts})

    def language_totals(self) -> dict[str, int]:
        totals = defaultdict(int)
        for (lang, _), value in self.counts.items():
            totals[lang] += value
        return dict(totals)

    @classmethod
    def from_documents(cls, docs: Iterable[Document], unit: str = "words") -> "CorpusStats":
        records = [{"lang": d.lang, "category": d.category, "tokens": document_tokens(d, unit)} for d in docs]
        if not records:
            return cls(counts={}, unit=unit)
        df = pd.DataFrame.from_records(records)
        grouped = df.groupby(["lang", "category"], sort=True)["tokens"].sum()
        return cls(counts={(lang, cat): int(v) for (lang, cat), v in grouped.items()}, unit=unit)

    def to_dict(self) -> dict:
        nested = defaultdict(dict)
        for (lang, category), value in sorted(self.counts.items()):
            nested[lang][category] = value
        return {"unit": self.unit, "counts": dict(nested)}

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusStats":
        if not isinstance(data, dict) or not isinstance(data.get("counts"), dict):
            raise MixtureError("stats invalides: objet {'unit', 'counts': {lang: {catégorie: tokens}}} attendu")
        counts = {}
        for lang, per_category in data["counts"].items():
            if not isinstance(per_category, dict):
                raise MixtureError(f"stats invalides pour {lang}")
            for category, value in per_category.items():
                counts[(lang, category)] = value
        return cls(counts=counts, unit=data.get("unit", "words"))

    def to_frame(self) -> pd.DataFrame:
        return _cells_frame(self.counts, "available")


@dataclass
class MixturePlan:
    stage: int
    budget: int
    allocations: dict[Cell, int]
    params: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.allocations.values())

    def language_totals(self) -> dict[str, int]:
        totals = defaultdict(int)
        for (lang, _), value in self.allocations.items():
            totals[lang] += value
        return dict(sorted(totals.items()))

    def to_dict(self) -> dict:
        nested = defaultdict(dict)
        for (lang, category), value in sorted(self.allocations.items()):
            nested[lang][category] = value
        return {
            "stage": self.stage,
            "budget": self.budget,
            "total": self.total,
            "params": self.params,
            "language_totals": self.language_totals(),
            "allocations": dict(nested),
        }

    def to_frame(self) -> pd.DataFrame:
        return _cells_frame(self.allocations, "tokens")


def _cells_frame(cells: dict[Cell, int], column: str) -> pd.DataFrame:
    df = pd.DataFrame(
        [{"lang": lang, "category": cat, column: value} for (lang, cat), value in sorted(cells.items())],
        columns=["lang", "category", column],
    )
    return df.pivot_table(index="lang", columns="category", values=column, aggfunc="sum", fill_value=0)


def water_fill(available: dict[str, int], total: Fraction) -> dict[str, Fraction]:
    """s_i = min(a_i, c) avec c tel que sum(s_i) = total (total <= sum(a_i))."""
    remaining = Fraction(total)
    order = sorted(available, key=lambda lang: (available[lang], lang))
    allocation = {}
    for index, lang in enumerate(order):
        level = remaining / (len(order) - index)
        if available[lang] <= level:
            allocation[lang] = Fraction(available[lang])
            remaining -= available[lang]
        else:
            for rest in order[index:]:
                allocation[rest] = level
            break
    return allocation


def _largest_remainder(quotas: dict, total: int) -> dict:
    floors = {key: math.floor(q) for key, q in quotas.items()}
    missing = total - sum(floors.values())
    by_remainder = sorted(quotas, key=lambda key: (-(quotas[key] - floors[key]), key))
    for key in by_remainder[:missing]:
        floors[key] += 1
    return floors


def _round_cells(real: dict[Cell, Fraction]) -> dict[Cell, int]:
    """Arrondi exact en somme : d'abord les totaux par langue, puis les catégories."""
    per_lang: dict[str, dict[Cell, Fraction]] = defaultdict(dict)
    for cell, value in real.items():
        per_lang[cell[0]][cell] = value
    target = sum(real.values())
    lang_totals = _largest_remainder({lang: sum(cells.values()) for lang, cells in per_lang.items()}, int(target))
    rounded = {}
    for lang, cells in per_lang.items():
        rounded.update(_largest_remainder(cells, lang_totals[lang]))
    return rounded


def _check_budget(stats: CorpusStats, budget: int) -> Fraction:
    if budget <= 0:
        raise MixtureError(f"le budget doit être > 0, reçu: {budget}")
    supply = sum(stats.counts.values())
    if supply == 0:
        raise MixtureError("all availabilities zero: aucune donnée à répartir")
    return Fraction(min(budget, supply))


def _stage1_real(stats: CorpusStats, budget: int) -> dict[Cell, Fraction]:
    target = _check_budget(stats, budget)
    lang_available = stats.language_totals()
    lang_share = water_fill(lang_available, target)
    real = {}
    for (lang, category), available in stats.counts.items():
        total = lang_available[lang]
        real[(lang, category)] = lang_share[lang] * available / total if total else Fraction(0)
    return real


def stage1_allocation(stats: CorpusStats, budget: int) -> MixturePlan:
    allocations = _round_cells(_stage1_real(stats, budget))
    logger.info("Stage 1 : %d tokens répartis sur %d langues", sum(allocations.values()), len(stats.languages()))
    return MixturePlan(stage=1, budget=budget, allocations=allocations)


def _cap_and_redistribute(weights: dict[Cell, Fraction], available: dict[Cell, int], target: Fraction) -> dict[Cell, Fraction]:
    fixed: dict[Cell, Fraction] = {}
    free = {cell for cell, w in weights.items() if w > 0}
    allocation: dict[Cell, Fraction] = {}
    while free:
        remaining = target - sum(fixed.values())
        mass = sum(weights[cell] for cell in free)
        allocation = {cell: remaining * weights[cell] / mass for cell in free}
        over = [cell for cell in free if allocation[cell] > available[cell]]
        if not over:
            break
        for cell in over:
            fixed[cell] = Fraction(available[cell])
            free.discard(cell)
        allocation = {}
    result = {cell: Fraction(0) for cell in weights}
    result.update(fixed)
    result.update(allocation)
    return result


def stage2_allocation(
    stats: CorpusStats,
    budget: int,
    low_boost: float = 2.0,
    textbook_boost: float = 2.0,
) -> MixturePlan:
    for name, boost in (("low_boost", low_boost), ("textbook_boost", textbook_boost)):
        if not math.isfinite(boost):
            raise MixtureError(f"{name} doit être fini, reçu: {boost}")
        if boost < 1:
            raise MixtureError(f"{name} doit être >= 1, reçu: {boost}")

    base = _stage1_real(stats, budget)
    low, textbook = Fraction(low_boost), Fraction(textbook_boost)
    weights = {}
    for (lang, category), share in base.items():
        weight = share
        if low != 1 and classify_resource(lang) is ResourceClass.LOW:
            weight *= low
        if category == "textbook":
            weight *= textbook
        weights[(lang, category)] = weight

    real = _cap_and_redistribute(weights, stats.counts, sum(base.values()))
    allocations = _round_cells(real)
    logger.info("Stage 2 : %d tokens (low_boost=%s, textbook_boost=%s)", sum(allocations.values()), low_boost, textbook_boost)
    return MixturePlan(
        stage=2,
        budget=budget,
        allocations=allocations,
        params={"low_boost": low_boost, "textbook_boost": textbook_boost},
    )


def build_index(docs: Iterable[Document], unit: str = "words") -> dict[Cell, list[tuple[str, int]]]:
    index = defaultdict(list)
    for doc in docs:
        index[(doc.lang, doc.category)].append((doc.id, document_tokens(doc, unit)))
    return dict(index)


def _cell_rng(seed: int, cell: Cell) -> np.random.Generator:
    lang, category = cell
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(lang.encode("utf-8")), zlib.crc32(category.encode("utf-8"))])
    )


def _sample_cell(cell: Cell, allocation: int, entries: list[tuple[str, int]], seed: int) -> tuple[list[str], int]:
    if allocation == 0:
        return [], 0
    entries = sorted(entries)
    order = _cell_rng(seed, cell).permutation(len(entries))
    chosen, total = [], 0
    for position in order:
        if total >= allocation:
            break
        doc_id, tokens = entries[position]
        chosen.append(doc_id)
        total += tokens
    if total < allocation:
        logger.warning("Cellule %s : %d tokens disponibles pour %d alloués", cell, total, allocation)
    return chosen, total


def sample_manifest(
    plan: MixturePlan,
    index: dict[Cell, list[tuple[str, int]]],
    seed: int = 0,
    threads: int = 1,
) -> dict:
    """Sélection graine-déterministe par cellule jusqu'à atteindre l'allocation."""
    missing = sorted(cell for cell, value in plan.allocations.items() if value > 0 and not index.get(cell))
    if missing:
        raise MixtureError(f"index missing plan cell: {missing}")

    cells = sorted(plan.allocations)
    results = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_sample_cell)(cell, plan.allocations[cell], index.get(cell, []), seed) for cell in cells
    )
    manifest = defaultdict(dict)
    totals = defaultdict(dict)
    for (lang, category), (ids, total) in zip(cells, results):
        manifest[lang][category] = ids
        totals[lang][category] = total
    return {"stage": plan.stage, "seed": seed, "documents": dict(manifest), "tokens": dict(totals)}


def load_stats(path) -> CorpusStats:
    with open(path, encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise MixtureError(f"stats illisibles: {path}: {exc}") from exc
    return CorpusStats.from_dict(data)
