"""Command-line experiment runner.

    semdisentangle train      --config run.yaml --out runs/a
    semdisentangle split      --config run.yaml --out runs/a
    semdisentangle build-lang --config run.yaml --out runs/a
    semdisentangle sweep      --config run.yaml --out runs/sweep

``split`` and ``build-lang`` read the checkpoint that ``train`` left in the
output directory unless ``--checkpoint`` names another one. Exit status is
0 on success, 1 for invalid configuration or inputs, 2 for failures while
running.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import yaml

from . import config as C
from . import contrastive, pipeline, semlang, simkpi
from .datagen import RecordFormatError
from .numcore import DomainError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class InvalidInput(Exception):
    pass


def _fmt(x):
    return f"{x:.9g}"


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_train(cfg, args):
    out = Path(cfg["out"])
    data = pipeline.load_data(cfg)
    state, history = pipeline.fit(data, cfg)
    pipeline.save_state(state, out)
    contrastive.write_metrics_csv(history, out / "metrics.csv")
    _write(out / "metrics.json", json.dumps([asdict(m) for m in history], indent=1))
    last = history[-1] if history else None
    msg = f"trained {len(history)} epochs on {len(data)} records"
    if last:
        msg += f"; final L_T {_fmt(last.L_T)}"
    return msg


def _checkpoint(cfg, args, data):
    src = args.checkpoint or cfg["out"]
    try:
        state = pipeline.load_state(src)
        pipeline.check_compatible(state, data, cfg)
    except (OSError, ValueError) as exc:
        raise InvalidInput(f"checkpoint {src}: {exc}") from exc
    return state


def cmd_split(cfg, args):
    data = pipeline.load_data(cfg)
    state = _checkpoint(cfg, args, data)
    report = pipeline.split(pipeline.assign(data, state, cfg), cfg)
    _write(Path(cfg["out"]) / "split.json", report.to_json())
    return (f"{len(report.learnable_ids)} learnable, {len(report.memorizable_ids)} memorizable "
            f"(theta_conf {_fmt(report.threshold)})")


def cmd_build_lang(cfg, args):
    data = pipeline.load_data(cfg)
    state = _checkpoint(cfg, args, data)
    A = pipeline.assign(data, state, cfg)
    report = pipeline.split(A, cfg)
    lang = pipeline.language(data, report, state, cfg)
    out = Path(cfg["out"])
    _write(out / "language.json", lang.to_json())
    pre = pipeline.initial_params(cfg, data.dim)
    cx = semlang.language_complexity(lang, A, pre, state.kappa, C.complexity_config(cfg))
    kpis = pipeline.evaluate_all(data, state, cfg, list(simkpi.SCHEMES))
    summary = {
        "entries": len(lang),
        "avg_repr_len_bits": semlang.representation_length_bits(lang.code_matrix()) if len(lang) else None,
        "complexity_nats": cx.total,
        "cross_entropy_nats": cx.cross_entropy,
        "kl_nats": cx.kl,
        "offending_index": cx.offending_index,
        "kpis": [asdict(k) for k in kpis],
    }
    _write(out / "language_summary.json", json.dumps(summary, indent=1))
    simkpi.write_kpis(kpis, out / "kpis.csv")
    return f"language with {len(lang)} entries, complexity {_fmt(cx.total)} nats"


def cmd_sweep(cfg, args):
    if cfg["data.kind"] != "mixture":
        raise C.ConfigError("data.kind", "sweeps generate synthetic mixtures; set data.kind=mixture")
    out = Path(cfg["out"])
    records = simkpi.run_sweep(cfg["sweep.complexities"], cfg["sweep.schemes"], cfg)
    simkpi.write_kpis(records, out / "kpis.csv", out / "kpis.json")
    return f"{len(records)} KPI rows"


COMMANDS = {
    "train": cmd_train,
    "split": cmd_split,
    "build-lang": cmd_build_lang,
    "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="semdisentangle", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML run configuration")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key; repeatable")
        if name in ("split", "build-lang"):
            s.add_argument("--checkpoint", help="directory holding a trained checkpoint")
    return p


def resolve_config(args):
    overrides = C.parse_overrides(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    return C.load_config(args.config, overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        _write(out / f"{args.command}.config.yaml", C.dump(cfg))
        msg = COMMANDS[args.command](cfg, args)
    except (C.ConfigError, InvalidInput, RecordFormatError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(msg)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
