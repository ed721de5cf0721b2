import argparse
import logging

from babelkit.commands import RunRecorder, print_table
from babelkit.config import Settings
from babelkit.errors import MixtureError
from babelkit.handlers.datahandler import CorpusHandler, write_json
from babelkit.mixture_planner import (
    UNITS,
    build_index,
    load_stats,
    parse_budget,
    sample_manifest,
    stage1_allocation,
    stage2_allocation,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("mix", help="Plan de mélange des données de pré-entraînement")
    parser.add_argument("--stats", required=True, help="CorpusStats JSON (sortie de 'stats')")
    parser.add_argument("output", help="MixturePlan JSON")
    parser.add_argument("--stage", type=int, choices=(1, 2), default=1)
    parser.add_argument("--budget", required=True, help="Budget en tokens, ex. 150, 2.5M, 1B")
    parser.add_argument("--low-boost", type=float, default=2.0)
    parser.add_argument("--textbook-boost", type=float, default=2.0)
    parser.add_argument("--corpus", help="Corpus JSONL : écrit aussi <output>.manifest.json")
    parser.add_argument("--unit", choices=UNITS, default=None, help="Unité de comptage (défaut : celle des stats)")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--pretty", action="store_true", help="Affiche un tableau lisible")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("mix", settings)
    seed = settings.seed if args.seed is None else args.seed
    stats = load_stats(args.stats)
    budget = parse_budget(args.budget)
    unit = args.unit or stats.unit
    if unit not in UNITS:
        raise MixtureError(f"unité inconnue: {unit} (attendu {UNITS})")
    if args.stage == 1:
        plan = stage1_allocation(stats, budget)
    else:
        plan = stage2_allocation(stats, budget, low_boost=args.low_boost, textbook_boost=args.textbook_boost)
    if plan.total < budget:
        logger.warning("Budget %d supérieur aux données disponibles : %d tokens planifiés", budget, plan.total)
    write_json(args.output, plan.to_dict())
    if args.pretty:
        print_table(plan.to_frame())

    manifest_path = None
    if args.corpus:
        docs = CorpusHandler(args.corpus).read()
        manifest = sample_manifest(plan, build_index(docs, unit), seed=seed, threads=settings.threads)
        manifest_path = write_json(f"{args.output}.manifest.json", manifest)

    parameters = {"stage": args.stage, "budget": budget, "unit": unit}
    if args.stage == 2:
        parameters.update({"low_boost": args.low_boost, "textbook_boost": args.textbook_boost})
    recorder.write(
        args.output,
        parameters=parameters,
        inputs={"stats": args.stats, "corpus": args.corpus},
        outputs={"plan": args.output, "manifest": manifest_path},
        seed=seed,
    )
    return 0
