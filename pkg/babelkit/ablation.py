"""Grille d'ablation des initialisations d'extension.

Position (among_layers / after_model) x initialisation (copie, copie + bruit
gaussien pour chaque moyenne), plus la cellule zéros. On mesure l'écart des
logits par rapport au modèle non étendu.
"""
from pathlib import Path
from typing import Any, Sequence
import logging

from joblib import Parallel, delayed
from scipy.stats import binomtest
from sklearn.model_selection import ParameterGrid

from babelkit.checkpoint_store import Checkpoint
from babelkit.handlers.datahandler import write_json
from babelkit.layer_surgery import ExtensionPlan, InitKind, Strategy, apply_extension, plan_extension
from babelkit.reference_model import DEFAULT_MAX_CONTEXT, deviation_between, forward

logger = logging.getLogger(__name__)

DEFAULT_MEANS = (0.01, 0.0001)


class AblationGrid:
    def __init__(
        self,
        k: int,
        means: Sequence[float] = DEFAULT_MEANS,
        seeds: Sequence[int] = tuple(range(20)),
        threads: int = 1,
        max_context: int = DEFAULT_MAX_CONTEXT,
    ):
        if not seeds:
            raise ValueError("au moins une graine est nécessaire")
        if any(m <= 0 for m in means):
            raise ValueError(f"les moyennes de bruit doivent être > 0, reçu: {list(means)}")
        self.k = k
        self.means = [float(m) for m in means]
        self.seeds = [int(s) for s in seeds]
        self.threads = threads
        self.max_context = max_context
        self.report: dict[str, Any] = {}

    def param_grid(self) -> list[dict]:
        return list(
            ParameterGrid(
                [
                    {"strategy": [Strategy.AMONG_LAYERS, Strategy.AFTER_MODEL], "noise_mean": [None, *self.means]},
                    {"strategy": [Strategy.AMONG_LAYERS], "init": [InitKind.ZEROS]},
                ]
            )
        )

    def _plan(self, ckpt: Checkpoint, cell: dict, seed: int) -> ExtensionPlan:
        init = cell.get("init")
        noise_mean = cell.get("noise_mean")
        if init is None:
            init = InitKind.DUPLICATE if noise_mean is None else InitKind.DUPLICATE_NOISE
        if cell["strategy"] is Strategy.AMONG_LAYERS:
            return plan_extension(ckpt.config, self.k, init=init, noise_mean=noise_mean, seed=seed)
        return ExtensionPlan(strategy=Strategy.AFTER_MODEL, count=self.k, init=init, noise_mean=noise_mean, seed=seed)

    def _evaluate(self, ckpt, base_logits, prompts, cell, seed):
        extended, _ = apply_extension(ckpt, self._plan(ckpt, cell, seed))
        logits = [forward(extended, p, self.max_context) for p in prompts]
        return deviation_between(base_logits, logits)

    def run(self, ckpt: Checkpoint, prompts: list[list[int]]) -> dict[str, Any]:
        if not prompts:
            raise ValueError("au moins un prompt est nécessaire")
        logger.info("Lancement de la grille d'ablation (k=%d, %d graines, %d prompts)", self.k, len(self.seeds), len(prompts))
        base_logits = [forward(ckpt, p, self.max_context) for p in prompts]

        cells = self.param_grid()
        # seules les cellules bruitées dépendent de la graine
        jobs = []
        for index, cell in enumerate(cells):
            seeds = self.seeds if cell.get("noise_mean") is not None else [self.seeds[0]]
            jobs.extend((index, seed) for seed in seeds)
        results = Parallel(n_jobs=self.threads, prefer="threads")(
            delayed(self._evaluate)(ckpt, base_logits, prompts, cells[index], seed) for index, seed in jobs
        )

        by_cell: dict[int, list] = {}
        for (index, seed), stats in zip(jobs, results):
            by_cell.setdefault(index, []).append((seed, stats))

        report_cells = []
        for index, cell in enumerate(cells):
            runs = by_cell[index]
            noisy = cell.get("noise_mean") is not None
            init = cell.get("init", InitKind.DUPLICATE_NOISE if noisy else InitKind.DUPLICATE)
            entry = {
                "strategy": cell["strategy"].value,
                "init": init.value,
                "noise_mean": cell.get("noise_mean"),
                "mean_abs": sum(s.mean_abs for _, s in runs) / len(runs),
                "max_abs": max(s.max_abs for _, s in runs),
            }
            if noisy:
                entry["per_seed"] = [{"seed": seed, "mean_abs": s.mean_abs, "max_abs": s.max_abs} for seed, s in runs]
            else:
                entry["per_prompt"] = runs[0][1].per_prompt
            report_cells.append(entry)

        self.report = {
            "k": self.k,
            "num_layers": ckpt.config.num_layers,
            "means": self.means,
            "seeds": self.seeds,
            "num_prompts": len(prompts),
            "cells": report_cells,
            "noise_ordering": self._noise_ordering(report_cells),
        }
        self._log_summary()
        return self.report

    def _noise_ordering(self, cells: list[dict]) -> list[dict]:
        """Test du signe : le bruit fort dévie-t-il plus que le faible, graine par graine ?"""
        if len(self.means) < 2:
            return []
        high, low = max(self.means), min(self.means)
        ordering = []
        for strategy in (Strategy.AMONG_LAYERS, Strategy.AFTER_MODEL):
            per_seed = {}
            for cell in cells:
                if cell["strategy"] == strategy.value and cell["noise_mean"] in (high, low):
                    per_seed[cell["noise_mean"]] = {r["seed"]: r["mean_abs"] for r in cell["per_seed"]}
            wins = sum(per_seed[high][s] > per_seed[low][s] for s in self.seeds)
            p_value = binomtest(wins, len(self.seeds), 0.5, alternative="greater").pvalue
            ordering.append(
                {
                    "strategy": strategy.value,
                    "high_mean": high,
                    "low_mean": low,
                    "seeds_high_deviates_more": int(wins),
                    "num_seeds": len(self.seeds),
                    "sign_test_p_value": float(p_value),
                }
            )
        return ordering

    def _log_summary(self) -> None:
        logger.info("--- Résultats de la grille d'ablation ---")
        for cell in self.report["cells"]:
            logger.info(
                "%-13s %-16s mean=%-8s |dlogit| moyen=%.6g max=%.6g",
                cell["strategy"],
                cell["init"],
                cell["noise_mean"],
                cell["mean_abs"],
                cell["max_abs"],
            )

    def save(self, path: str | Path) -> Path:
        if not self.report:
            raise ValueError("La grille n'a pas été exécutée.")
        path = write_json(path, self.report)
        logger.info("Rapport d'ablation sauvegardé ici : %s", path)
        return path

    def plot(self, path: str | Path) -> Path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        if not self.report:
            raise ValueError("La grille n'a pas été exécutée.")
        labels = [
            f"{c['strategy']}\n{c['init']}" + (f"\nμ={c['noise_mean']}" if c["noise_mean"] is not None else "")
            for c in self.report["cells"]
        ]
        values = [c["mean_abs"] for c in self.report["cells"]]
        fig, ax = plt.subplots(figsize=(max(6, len(values) * 1.4), 4))
        ax.bar(range(len(values)), values, color="steelblue")
        ax.set_xticks(range(len(values)), labels, fontsize=7)
        ax.set_yscale("symlog", linthresh=1e-6)
        ax.set_ylabel("|Δ logit| moyen")
        ax.set_title(f"Ablation de l'extension (k={self.report['k']})")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        return path


def ablation_grid(
    ckpt: Checkpoint,
    k: int,
    means: Sequence[float],
    seeds: Sequence[int],
    prompts: list[list[int]],
    threads: int = 1,
) -> dict[str, Any]:
    return AblationGrid(k=k, means=means, seeds=seeds, threads=threads).run(ckpt, prompts)
