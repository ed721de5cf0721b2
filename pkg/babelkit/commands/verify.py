import argparse
import logging
from pathlib import Path

import numpy as np

from babelkit.ablation import DEFAULT_MEANS, AblationGrid
from babelkit.checkpoint_store import load_checkpoint
from babelkit.commands import RunRecorder
from babelkit.config import Settings
from babelkit.errors import ForwardError, PlanError, VerificationFailure
from babelkit.handlers.datahandler import dumps_json, read_json, write_json
from babelkit.reference_model import compare_outputs

logger = logging.getLogger(__name__)

MODES = ("identity", "deviation", "grid")


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="Compare les logits d'un modèle de base et d'un modèle étendu")
    parser.add_argument("--base", required=True, help="Checkpoint de base")
    parser.add_argument("--extended", help="Checkpoint étendu (modes identity et deviation)")
    parser.add_argument("--mode", choices=MODES, default="identity")
    parser.add_argument("--prompts", help="Fichier JSON : liste de listes d'identifiants de tokens")
    parser.add_argument("--num-prompts", type=int, default=10)
    parser.add_argument("--prompt-len", type=int, default=16)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--report", help="Rapport JSON")
    parser.add_argument("--plot", help="Graphique PNG de la grille (mode grid)")
    parser.add_argument("--k", type=int, default=2, help="Nombre de couches insérées (mode grid)")
    parser.add_argument("--means", default=",".join(str(m) for m in DEFAULT_MEANS), help="Moyennes du bruit (mode grid)")
    parser.add_argument("--seeds", type=int, default=20, help="Nombre de graines (mode grid)")
    parser.set_defaults(handler=run)


def random_prompts(vocab_size: int, count: int, length: int, seed: int) -> list[list[int]]:
    if count < 1 or length < 1:
        raise ForwardError(f"empty prompt: {count} prompts de longueur {length}")
    rng = np.random.default_rng(seed)
    return rng.integers(0, vocab_size, size=(count, length)).tolist()


def load_prompts(path: str) -> list[list[int]]:
    data = read_json(path)
    if not isinstance(data, list) or not all(isinstance(p, list) for p in data):
        raise ForwardError(f"{path}: liste de listes d'entiers attendue")
    # ni flottant tronqué ni booléen
    bad = [t for p in data for t in p if type(t) is not int]
    if bad:
        raise ForwardError(f"malformed prompts: {path}: identifiants non entiers {bad[:10]}")
    return data


def _parse_means(raw: str) -> list[float]:
    try:
        return [float(m) for m in raw.split(",") if m.strip()]
    except ValueError:
        raise PlanError(f"moyennes illisibles: {raw!r}") from None


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("verify", settings)
    seed = settings.seed if args.seed is None else args.seed
    base = load_checkpoint(args.base)
    if args.prompts:
        prompts = load_prompts(args.prompts)
    else:
        prompts = random_prompts(base.config.vocab_size, args.num_prompts, args.prompt_len, seed)

    parameters = {"mode": args.mode, "num_prompts": len(prompts), "max_context": settings.max_context}
    if args.mode == "grid":
        grid = AblationGrid(
            k=args.k,
            means=_parse_means(args.means),
            seeds=range(seed, seed + args.seeds),
            threads=settings.threads,
            max_context=settings.max_context,
        )
        report = grid.run(base, prompts)
        parameters.update({"k": args.k, "means": grid.means, "seeds": grid.seeds})
        if args.plot:
            grid.plot(args.plot)
    else:
        if not args.extended:
            raise PlanError(f"--extended requis en mode {args.mode}")
        extended = load_checkpoint(args.extended)
        stats = compare_outputs(base, extended, prompts, settings.max_context)
        report = {"mode": args.mode, **stats.to_dict()}

    if args.report and args.mode == "grid":
        grid.save(args.report)
    elif args.report:
        write_json(args.report, report)
    else:
        print(dumps_json(report), end="")

    anchor = args.report or f"{Path(args.extended or args.base)}.verify"
    recorder.write(
        anchor,
        parameters=parameters,
        inputs={"base": args.base, "extended": args.extended, "prompts": args.prompts},
        outputs={"report": args.report, "plot": args.plot},
        seed=seed,
    )

    if args.mode == "identity" and report["max_abs"] != 0.0:
        raise VerificationFailure(
            f"identity violated: max |dlogit| = {report['max_abs']:.6g}, moyenne {report['mean_abs']:.6g}"
        )
    return 0
