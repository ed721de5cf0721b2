import argparse
import json
import logging
from pathlib import Path

from babelkit.checkpoint_store import load_checkpoint, save_checkpoint
from babelkit.commands import RunRecorder
from babelkit.config import Settings
from babelkit.errors import PlanError
from babelkit.handlers.datahandler import dumps_json, write_json
from babelkit.layer_surgery import (
    DEFAULT_NOISE_MEAN,
    ExtensionPlan,
    InitKind,
    Strategy,
    apply_extension,
    count_parameters,
    per_layer_parameters,
    plan_extension,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("extend", help="Insère des couches dans un checkpoint")
    parser.add_argument("ckpt", help="Checkpoint source")
    parser.add_argument("out", nargs="?", help="Checkpoint étendu (absent avec --dry-run)")
    where = parser.add_mutually_exclusive_group(required=True)
    where.add_argument("--positions", help="Indices d'origine séparés par des virgules, ex. 14,16,18")
    where.add_argument("--auto-k", type=int, help="k couches, une toutes les deux dans la seconde moitié")
    where.add_argument("--count", type=int, help="k copies de la dernière couche ajoutées après le modèle")
    where.add_argument("--plan", help="Plan JSON (ExtensionPlan)")
    parser.add_argument("--init", choices=[i.value for i in InitKind], default=InitKind.DUPLICATE_NOISE.value)
    parser.add_argument("--noise-mean", type=float, default=DEFAULT_NOISE_MEAN)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--record", help="SurgeryRecord JSON (défaut : <out>.surgery.json)")
    parser.add_argument("--dry-run", action="store_true", help="Affiche le plan sans rien écrire")
    parser.set_defaults(handler=run)


def _parse_positions(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError:
        raise PlanError(f"positions illisibles: {raw!r}") from None


def build_plan(args: argparse.Namespace, config, seed: int) -> ExtensionPlan:
    if args.plan:
        return ExtensionPlan.model_validate_json(Path(args.plan).read_text(encoding="utf-8"))
    init = InitKind(args.init)
    noise_mean = args.noise_mean if init is InitKind.DUPLICATE_NOISE else None
    if args.auto_k is not None:
        return plan_extension(config, args.auto_k, init=init, noise_mean=noise_mean, seed=seed)
    if args.count is not None:
        return ExtensionPlan(strategy=Strategy.AFTER_MODEL, count=args.count, init=init, noise_mean=noise_mean, seed=seed)
    return ExtensionPlan(positions=_parse_positions(args.positions), init=init, noise_mean=noise_mean, seed=seed)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("extend", settings)
    seed = settings.seed if args.seed is None else args.seed
    ckpt = load_checkpoint(args.ckpt)
    plan = build_plan(args, ckpt.config, seed)
    plan.check_against(ckpt.config)

    if args.dry_run:
        new_layers = ckpt.config.num_layers + plan.num_new_layers
        print(
            dumps_json(
                {
                    "plan": plan.model_dump(mode="json"),
                    "old_num_layers": ckpt.config.num_layers,
                    "new_num_layers": new_layers,
                    "params_before": count_parameters(ckpt.config),
                    "params_after": count_parameters(ckpt.config.model_copy(update={"num_layers": new_layers})),
                    "per_layer_parameters": per_layer_parameters(ckpt.config),
                }
            ),
            end="",
        )
        return 0

    if not args.out:
        raise PlanError("chemin de sortie manquant (ou utiliser --dry-run)")
    extended, record = apply_extension(ckpt, plan, threads=settings.threads)
    save_checkpoint(extended, args.out)
    record_path = args.record or f"{args.out}.surgery.json"
    write_json(record_path, record.model_dump(mode="json"))
    logger.info("Couches insérées (source -> nouvel indice) : %s", json.dumps(record.inserted))

    recorder.write(
        args.out,
        parameters={"plan": plan.model_dump(mode="json")},
        inputs={"checkpoint": args.ckpt, "plan": args.plan},
        outputs={"checkpoint": args.out, "record": record_path},
        seed=plan.seed,
    )
    return 0
