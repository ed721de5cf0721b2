import argparse

from babelkit.commands import RunRecorder
from babelkit.config import Settings
from babelkit.dedup_graph import MinHashParams, dedup
from babelkit.handlers.datahandler import CorpusHandler, write_json, write_jsonl, write_tsv


def register(subparsers) -> None:
    defaults = MinHashParams()
    parser = subparsers.add_parser("dedup", help="Déduplication exacte puis MinHash-LSH par langue")
    parser.add_argument("input", help="Corpus JSONL d'entrée")
    parser.add_argument("output", help="Corpus JSONL dédupliqué")
    parser.add_argument("--report", help="Rapport JSON (défaut : <output>.dedup.json)")
    parser.add_argument("--pairs-tsv", help="Paires candidates retenues, une par ligne")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--shingle-k", type=int, default=defaults.shingle_k)
    parser.add_argument("--num-perm", type=int, default=defaults.num_perm)
    parser.add_argument("--bands", type=int, default=defaults.bands)
    parser.add_argument("--rows", type=int, default=defaults.rows)
    parser.add_argument("--threshold", type=float, default=defaults.jaccard_threshold)
    parser.add_argument("--strict", action="store_true", help="Arrête à la première ligne malformée")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("dedup", settings)
    params = MinHashParams(
        shingle_k=args.shingle_k,
        num_perm=args.num_perm,
        bands=args.bands,
        rows=args.rows,
        jaccard_threshold=args.threshold,
        seed=settings.seed if args.seed is None else args.seed,
    )
    handler = CorpusHandler(args.input, strict=args.strict)
    docs = handler.read()

    kept, report = dedup(docs, params, threads=settings.threads)
    report_path = args.report or f"{args.output}.dedup.json"
    write_jsonl(args.output, kept)
    write_json(report_path, report.to_dict())
    if args.pairs_tsv:
        write_tsv(args.pairs_tsv, ((p.id_a, p.id_b, f"{p.estimate:.6f}") for p in report.candidate_pairs))

    recorder.write(
        args.output,
        parameters={**params.model_dump(), "strict": args.strict, "skipped_lines": len(handler.skipped)},
        inputs={"corpus": args.input},
        outputs={"corpus": args.output, "report": report_path, "pairs": args.pairs_tsv},
        seed=params.seed,
    )
    return 0
