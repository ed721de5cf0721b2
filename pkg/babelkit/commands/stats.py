import argparse
import logging

from babelkit.commands import RunRecorder, print_table
from babelkit.config import Settings
from babelkit.handlers.datahandler import CorpusHandler, write_json
from babelkit.languages import UNDETERMINED
from babelkit.mixture_planner import UNITS, CorpusStats

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("stats", help="Tokens disponibles par (langue, catégorie)")
    parser.add_argument("input", help="Corpus JSONL")
    parser.add_argument("output", help="CorpusStats JSON")
    parser.add_argument("--unit", choices=UNITS, default="words", help="Unité de comptage quand 'tokens' est absent")
    parser.add_argument("--strict", action="store_true", help="Arrête à la première ligne malformée")
    parser.add_argument("--pretty", action="store_true", help="Affiche un tableau lisible")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("stats", settings)
    handler = CorpusHandler(args.input, strict=args.strict)
    docs = handler.read()
    known = [doc for doc in docs if doc.lang != UNDETERMINED]
    if len(known) < len(docs):
        logger.warning("%d documents de langue indéterminée exclus", len(docs) - len(known))

    stats = CorpusStats.from_documents(known, unit=args.unit)
    write_json(args.output, stats.to_dict())
    if args.pretty:
        print_table(stats.to_frame())

    recorder.write(
        args.output,
        parameters={"unit": args.unit, "strict": args.strict, "skipped_lines": len(handler.skipped)},
        inputs={"corpus": args.input},
        outputs={"stats": args.output},
    )
    return 0
