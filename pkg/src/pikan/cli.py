"""Command-line runner: ``pikan train | compare | export-reference | check``.

Any config key can be overridden with ``--key value`` (dashes or underscores);
values are parsed as YAML scalars or flow lists, e.g. ``--widths [2,10,10,1]``.
Run directories go under ``$PIKAN_OUTPUT_ROOT`` (default ``runs``) unless the
config names an ``output_dir``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from pikan import _accel, approximator, pde
from pikan.config import (ConfigError, ExperimentConfig, from_dict, load_config,
                          write_resolved)
from pikan.trainer import HISTORY_COLUMNS, TrainingAborted, train

log = logging.getLogger("pikan")

OUTPUT_ROOT_ENV = "PIKAN_OUTPUT_ROOT"
COMPARE_COLUMNS = ("label", "problem", "seed", "n_params", "best_l2", "best_epoch", "final_l2",
                   "run_dir")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


class HistoryWriter:
    """Appends rows to history.csv and flushes each one (crash-safe)."""

    def __init__(self, path: Path):
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(HISTORY_COLUMNS) + "\n")
        self._fh.flush()

    def __call__(self, row: dict) -> None:
        self._fh.write(",".join(_fmt(row[c]) for c in HISTORY_COLUMNS) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def build_problem(cfg: ExperimentConfig) -> pde.Problem:
    return pde.get_problem(cfg.problem)


def build_net(cfg: ExperimentConfig, problem: pde.Problem):
    net = approximator.build_network(cfg.model, cfg.widths, cfg.grid_size, cfg.order,
                                     problem.lo, problem.hi)
    return approximator.init_params(net, cfg.seed)


def default_run_dir(cfg: ExperimentConfig) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    label = cfg.run_label().replace(" ", "_")
    return root / f"{cfg.problem}_{label}_seed{cfg.seed}_{cfg.config_hash()[:10]}"


def run_experiment(cfg: ExperimentConfig, run_dir: str | os.PathLike | None = None) -> dict:
    """Train one configuration and write every artifact; returns the summary."""
    out = Path(run_dir or cfg.output_dir or default_run_dir(cfg))
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out / "config.json")
    problem = build_problem(cfg)
    net = build_net(cfg, problem)
    X, truth = problem.reference(cfg.eval_grid)
    writer = HistoryWriter(out / "history.csv")
    try:
        rec = train(problem, net, cfg, validation=(X, truth), on_row=writer)
    finally:
        writer.close()
    approximator.save_params(net, out / "params.bin")
    net.set_theta(rec.best_theta)
    approximator.save_params(net, out / "best_params.bin")
    pred = net.predict(X)
    names = problem.coords
    pde.write_grid_csv(out / "exact.csv", X, truth, names + ("u",))
    pde.write_grid_csv(out / "pred.csv", X, pred, names + ("u",))
    pde.write_grid_csv(out / "abs_error.csv", X, np.abs(pred - truth), names + ("abs_error",))
    summary = {
        "label": cfg.run_label(),
        "problem": cfg.problem,
        "model": cfg.model,
        "weighting": cfg.weighting,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "n_params": approximator.param_count(net),
        "initial_l2": rec.initial_l2,
        "best_l2": rec.best_l2,
        "best_epoch": rec.best_epoch,
        "final_l2": rec.final_l2,
        "log_sigma": dict(zip(problem.tasks, rec.log_sigma.tolist())),
        "wall_time_s": rec.wall_time,
        "backend": _accel.backend(),
        "config_hash": cfg.config_hash(),
        "run_dir": str(out),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def compare(configs: Sequence[ExperimentConfig], table_path=None) -> list[dict]:
    """Run each config in turn; rows sorted by best relative L2."""
    problems = {c.problem for c in configs}
    grids = {tuple(c.eval_grid) if c.eval_grid else None for c in configs}
    if len(problems) > 1:
        raise ConfigError(f"mismatched problems in comparison: {sorted(problems)}", "problem")
    if len(grids) > 1:
        raise ConfigError("mismatched evaluation grids in comparison", "eval_grid")
    rows = [run_experiment(c) for c in configs]
    rows.sort(key=lambda r: (r["best_l2"], r["label"], r["seed"]))
    if table_path is not None:
        with open(table_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARE_COLUMNS)
            for r in rows:
                w.writerow([_fmt(r[c]) for c in COMPARE_COLUMNS])
    return rows


def export_reference(problem: str, grid, path) -> Path:
    prob = pde.get_problem(problem)
    X, u = prob.reference(grid)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pde.write_grid_csv(path, X, u, prob.coords + ("u",))
    return path


def format_table(rows: list[dict]) -> str:
    head = f"{'method':<14}{'params':>9}{'best L2':>13}{'best epoch':>12}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['label']:<14}{r['n_params']:>9d}{r['best_l2']:>13.3e}"
                     f"{r['best_epoch']:>12d}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# argument handling


def parse_overrides(extra: Sequence[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
        else:
            raw = next(it, None)
            if raw is None:
                raise ConfigError(f"missing value for --{key}", key.replace("-", "_"))
        try:
            val = yaml.safe_load(raw)
        except yaml.YAMLError:
            val = raw
        out[key.replace("-", "_")] = val
    return out


def _config(path, overrides) -> ExperimentConfig:
    if path is None:
        return from_dict(overrides)
    return load_config(path, overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pikan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", help="YAML/JSON config file")

    c = sub.add_parser("compare", help="run several configs and tabulate best errors")
    c.add_argument("configs", nargs="+", help="config files")
    c.add_argument("--table", help="write the comparison table here (CSV)")

    e = sub.add_parser("export-reference", help="write the ground-truth grid as CSV")
    e.add_argument("--problem", required=True)
    e.add_argument("--grid", type=int, nargs=2, metavar=("N0", "N1"))
    e.add_argument("--out", required=True)

    sub.add_parser("check", help="run the quick self-checks")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb != "train" and args.verb != "compare" and extra:
            parser.error(f"unrecognized arguments: {' '.join(extra)}")
        overrides = parse_overrides(extra)
        if args.verb == "train":
            cfg = _config(args.config, overrides)
            print(json.dumps(cfg.to_dict(), sort_keys=True))
            summary = run_experiment(cfg)
            print(f"{summary['label']}: best relative L2 {summary['best_l2']:.4e} "
                  f"at epoch {summary['best_epoch']} -> {summary['run_dir']}")
        elif args.verb == "compare":
            cfgs = [load_config(p, overrides) for p in args.configs]
            rows = compare(cfgs, args.table)
            print(format_table(rows))
        elif args.verb == "export-reference":
            path = export_reference(args.problem, args.grid, args.out)
            print(path)
        elif args.verb == "check":
            from pikan.selfcheck import run_checks
            return 0 if run_checks() else 1
    except ConfigError as exc:
        print(f"pikan: config error: {exc}", file=sys.stderr)
        return 2
    except TrainingAborted as exc:
        print(f"pikan: training aborted at {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"pikan: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
