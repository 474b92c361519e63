"""Command line interface: ``rvclt run|validate|preset``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PRESETS_ORDER, InvalidConfig, config_from_dict, emit_preset, parse_toml
from .errors import ConfigurationError


def _load(path: str, args) -> object:
    raw = parse_toml(Path(path).read_text(encoding="utf-8"))
    if getattr(args, "seed", None) is not None:
        raw["master_seed"] = args.seed
    if getattr(args, "replicates", None) is not None:
        raw["replicates"] = args.replicates
    if getattr(args, "out", None) is not None:
        raw["outputs"] = args.out
    return config_from_dict(raw)


def _add_overrides(p):
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--replicates", type=int, help="override replicates")
    p.add_argument("--out", help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rvclt", description="Monte Carlo checks of Gaussian CLTs with tail index 2.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--threads", type=int, help="worker threads (default: RVCLT_THREADS or CPU count)")
    _add_overrides(run)

    val = sub.add_parser("validate", help="check a config and list every violation")
    val.add_argument("config")
    _add_overrides(val)

    preset = sub.add_parser("preset", help="list or emit preset configs")
    psub = preset.add_subparsers(dest="preset_command", required=True)
    psub.add_parser("list", help="list preset names")
    emit = psub.add_parser("emit", help="print a ready-to-run config")
    emit.add_argument("name")
    emit.add_argument("-o", "--output", help="write to this file instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "preset":
            if args.preset_command == "list":
                for name in PRESETS_ORDER:
                    if name != "Custom":
                        print(name)
                return 0
            text = emit_preset(args.name)
            if args.output:
                Path(args.output).write_text(text, encoding="utf-8")
            else:
                sys.stdout.write(text)
            return 0

        config = _load(args.config, args)
        if args.command == "validate":
            print(f"ok: preset {config.preset}, model {config.model.get('variant')}, n_grid {config.n_grid}")
            return 0

        from .experiment import run_experiment

        manifest = run_experiment(config, threads=args.threads)
        for a in manifest.assertions:
            status = "PASS" if a["passed"] else "FAIL"
            print(f"{status} {a['name']} n={a['n']} value={a['value']:.6g} threshold={a['threshold']}")
        if manifest.failed_stage:
            print(f"error: {manifest.error}", file=sys.stderr)
            return 2
        print(f"outputs written to {config.outputs}")
        return manifest.exit_code
    except InvalidConfig as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return 2
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
