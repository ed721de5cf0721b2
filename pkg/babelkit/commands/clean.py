import argparse
import logging

from babelkit.commands import RunRecorder
from babelkit.config import Settings
from babelkit.corpus_filter import FilterRules, clean_corpus
from babelkit.handlers.datahandler import CorpusHandler, ScoreSidecarHandler, write_jsonl

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    defaults = FilterRules()
    parser = subparsers.add_parser("clean", help="Filtre un corpus JSONL (longueur, chiffres, score qualité)")
    parser.add_argument("input", help="Corpus JSONL d'entrée")
    parser.add_argument("output", help="Corpus JSONL nettoyé")
    parser.add_argument("--min-chars", type=int, default=defaults.min_chars)
    parser.add_argument("--max-digit-ratio", type=float, default=defaults.max_digit_ratio)
    parser.add_argument("--threshold", type=float, default=None, help="Score qualité minimal (désactivé par défaut)")
    parser.add_argument("--scores", help="Sidecar JSONL {id, score}")
    parser.add_argument("--rejected", help="Journal des rejets (défaut : <output>.rejected.jsonl)")
    parser.add_argument("--strict", action="store_true", help="Arrête à la première ligne malformée")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("clean", settings)
    rules = FilterRules(min_chars=args.min_chars, max_digit_ratio=args.max_digit_ratio)
    handler = CorpusHandler(args.input, strict=args.strict)
    docs = handler.read()
    sidecar = ScoreSidecarHandler(args.scores).read() if args.scores else None
    if args.scores and args.threshold is None:
        logger.warning("--scores ignoré : le filtre de score ne tourne qu'avec --threshold")

    result = clean_corpus(docs, rules, threshold=args.threshold, sidecar=sidecar, threads=settings.threads)
    rejected_path = args.rejected or f"{args.output}.rejected.jsonl"
    write_jsonl(args.output, result.kept)
    write_jsonl(rejected_path, (r.to_dict() for r in result.rejections))
    for reason, count in sorted(result.counts.items()):
        logger.info("%-16s %d", reason, count)

    recorder.write(
        args.output,
        parameters={
            **rules.model_dump(),
            "threshold": args.threshold,
            "strict": args.strict,
            "skipped_lines": len(handler.skipped),
            "counts": dict(sorted(result.counts.items())),
        },
        inputs={"corpus": args.input, "scores": args.scores},
        outputs={"corpus": args.output, "rejected": rejected_path},
    )
    return 0
