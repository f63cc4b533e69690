"""Command line entry point.

Subcommands::

    multibc run --config CFG --out DIR [--workers N] [--seed-override S]
    multibc emit-plotdata --config CFG --out DIR
    multibc validate --config CFG [--seed-override S]
    multibc list-experiments

Exit codes: 0 on success; 2 for schema violations (the message names the
offending key) and for config/result mismatches; 3 for numeric or
precision failures, with context.  Progress and diagnostics go to
stderr; stdout carries one machine-readable JSON document (or TSV for
list-experiments).  MULTIBC_WORKERS sets the default worker count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import KIND_SUMMARIES, KINDS, ConfigError, load_config
from .diophantine import ResourceBudgetError
from .indep import UnderpoweredError
from .precision import PrecisionError
from .runner import MANIFEST_NAME, read_manifest, run_experiment

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3

_NUMERIC_ERRORS = (
    PrecisionError,
    ResourceBudgetError,
    UnderpoweredError,
    FloatingPointError,
    OverflowError,
    ZeroDivisionError,
    ValueError,  # guard rails inside estimators (sample floors, budgets)
)


def _err(msg: str) -> None:
    print(f"multibc: {msg}", file=sys.stderr)


def _default_workers(flag: int | None) -> int:
    if flag is not None:
        return flag
    env = os.environ.get("MULTIBC_WORKERS", "").strip()
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError("MULTIBC_WORKERS", f"not an integer: {env!r}") from None
        if value < 1:
            raise ConfigError("MULTIBC_WORKERS", "must be >= 1")
        return value
    return 1


def _cmd_validate(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed_override)
    print(json.dumps({"ok": True, "kind": cfg.kind, "name": cfg.name, "config_hash": cfg.hash}))
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed_override)
    workers = _default_workers(args.workers)
    manifest = run_experiment(cfg, args.out, workers=workers)
    print(json.dumps(manifest, sort_keys=True))
    return EXIT_OK


def _cmd_emit_plotdata(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed_override)
    out = Path(args.out)
    try:
        manifest = read_manifest(out)
    except FileNotFoundError:
        raise ConfigError(
            "<results>", f"no {MANIFEST_NAME} in {out}; run the config first"
        ) from None
    if manifest.get("kind") != cfg.kind:
        raise ConfigError(
            "kind",
            f"result directory holds kind {manifest.get('kind')!r}, config is {cfg.kind!r}",
        )
    if manifest.get("config_hash") != cfg.hash:
        raise ConfigError(
            "<results>",
            "result directory was produced by a different effective config "
            f"(hash {manifest.get('config_hash', '')[:12]} != {cfg.hash[:12]})",
        )
    curves_name = manifest["files"]["curves"]["name"]
    with open(out / curves_name, "r", encoding="utf-8") as fh:
        curves = json.load(fh)
    written = []
    for name, curve in sorted(curves.items()):
        safe = "".join(c if c.isalnum() or c in "-_." else "-" for c in name)
        path = out / f"plot_{safe}.dat"
        lines = [
            f"# experiment: {manifest['experiment']}",
            f"# kind: {manifest['kind']}",
            f"# config_hash: {manifest['config_hash']}",
            f"# curve: {name}",
            f"# columns: x={curve['xlabel']} y={curve['ylabel']} yerr",
        ]
        yerr = curve["yerr"] or [0.0] * len(curve["x"])
        for x, y, e in zip(curve["x"], curve["y"], yerr):
            lines.append(f"{x} {y} {e}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path.name)
    print(json.dumps({"out": str(out), "files": written}))
    return EXIT_OK


def _cmd_list(_args) -> int:
    for kind in KINDS:
        print(f"{kind}\t{KIND_SUMMARIES[kind]}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="multibc", description=__doc__.split("\n")[0])
    sub = top.add_subparsers(dest="command", required=True)

    def common(p, out_required: bool):
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--seed-override",
            type=int,
            default=None,
            help="replace the config seed (changes the content hash)",
        )

    p_run = sub.add_parser("run", help="validate, execute, write results atomically")
    common(p_run, out_required=True)
    p_run.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes (default: MULTIBC_WORKERS or 1); results do not depend on it",
    )
    p_run.set_defaults(fn=_cmd_run)

    p_emit = sub.add_parser(
        "emit-plotdata", help="project finished results to columnar plot files"
    )
    common(p_emit, out_required=True)
    p_emit.set_defaults(fn=_cmd_emit_plotdata)

    p_val = sub.add_parser("validate", help="check a config and print its content hash")
    common(p_val, out_required=False)
    p_val.set_defaults(fn=_cmd_validate)

    p_list = sub.add_parser("list-experiments", help="list experiment kinds")
    p_list.set_defaults(fn=_cmd_list)
    return top


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        _err(f"config error at {exc.path}: {exc}")
        return EXIT_SCHEMA
    except _NUMERIC_ERRORS as exc:
        _err(f"numeric failure ({type(exc).__name__}): {exc}")
        return EXIT_NUMERIC
    except KeyboardInterrupt:
        _err("interrupted")
        return 130


if __name__ == "__main__":
    raise SystemExit(main())
