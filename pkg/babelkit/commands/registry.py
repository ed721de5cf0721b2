import argparse

import pandas as pd

from babelkit.commands import RunRecorder, print_table
from babelkit.config import Settings
from babelkit.handlers.datahandler import dumps_json, write_json
from babelkit.languages import export_registry


def register(subparsers) -> None:
    parser = subparsers.add_parser("registry", help="Exporte le registre des langues")
    parser.add_argument("output", nargs="?", help="Fichier JSON (sinon sortie standard)")
    parser.add_argument("--pretty", action="store_true", help="Affiche un tableau lisible")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, settings: Settings) -> int:
    recorder = RunRecorder("registry", settings)
    registry = export_registry()
    if args.pretty:
        print_table(pd.DataFrame(registry["languages"]).set_index("code"))
    elif not args.output:
        print(dumps_json(registry), end="")
    if args.output:
        write_json(args.output, registry)
        recorder.write(args.output, parameters={}, inputs={}, outputs={"registry": args.output})
    return 0
