import argparse

from babelkit.checkpoint_store import DTYPE_WIDTHS, ModelConfig, save_checkpoint
from babelkit.commands import RunRecorder
from babelkit.config import Settings
from babelkit.reference_model import make_toy_checkpoint


def register(subparsers) -> None:
    parser = subparsers.add_parser("toy", help="Génère un checkpoint jouet déterministe")
    parser.add_argument("out", help="Chemin du checkpoint (.safetensors)")
    parser.add_argument("--layers", type=int, default=8)
    parser.add_argument("--hidden", type=int, default=32)
    parser.add_argument("--heads", type=int, default=4)
    parser.add_argument("--kv-heads", type=int, default=2)
    parser.add_argument("--intermediate", type=int, default=64)
    parser.add_argument("--vocab", type=int, default=64)
    parser.add_argument("--rms-norm-eps", type=float, default=1e-6)
    parser.add_argument("--rope-theta", type=float, default=10000.0)
    parser.add_argument("--dtype", choices=sorted(DTYPE_WIDTHS), default="F32")
    parser.add_argument("--seed", type=int, default=None)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("toy", settings)
    seed = settings.seed if args.seed is None else args.seed
    config = ModelConfig(
        num_layers=args.layers,
        hidden_size=args.hidden,
        num_attention_heads=args.heads,
        num_kv_heads=args.kv_heads,
        intermediate_size=args.intermediate,
        vocab_size=args.vocab,
        rms_norm_eps=args.rms_norm_eps,
        rope_theta=args.rope_theta,
    )
    ckpt = make_toy_checkpoint(config, seed, dtype=args.dtype)
    save_checkpoint(ckpt, args.out)
    recorder.write(
        args.out,
        parameters={"config": config.model_dump(), "dtype": args.dtype},
        inputs={},
        outputs={"checkpoint": args.out},
        seed=seed,
    )
    return 0
