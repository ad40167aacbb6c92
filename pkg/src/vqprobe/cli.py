"""Command-line front end.

    vqprobe gen SPEC.json --out STORE
    vqprobe train STORE [--config CFG.json] [--seed N] --out DIR
    vqprobe diagnose STORE CHECKPOINT INTERVENTIONS.json [--unit video|token] --out DIR
    vqprobe ablate STORE GRID.json --out DIR
    vqprobe plot (train_log.csv | stage1_report.json) --out DIR

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 diagnosis
ran but at least one pass criterion failed.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import stats
from .latent_store import StoreError, load_store, save_store
from .plots import report_figures, training_figures
from .probe import FrozenProbe
from .report import (
    Intervention,
    UnknownConditionError,
    checkpoint_dict,
    diagnose,
    dumps,
    load_checkpoint,
)
from .synth import SynthSpec, SynthSpecError, generate
from .trainer import ConfigError, TrainConfig, TrainLog, ablation_grid, run_stage_a

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FAILED = 0, 1, 2, 3
UNIT_FLAGS = {"video": stats.VIDEO_MODE, "token": stats.TOKEN}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _read_json(path) -> object:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {p}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _load_store(path):
    try:
        return load_store(path)
    except FileNotFoundError as exc:
        raise DataError(f"store not found: {exc.filename}") from exc
    except StoreError as exc:
        raise DataError(str(exc)) from exc


def _config(path, seed) -> TrainConfig:
    doc = _read_json(path) if path else {}
    if not isinstance(doc, dict):
        raise UsageError("train config must be a JSON object")
    if seed is not None:
        doc = {**doc, "seed": seed}
    try:
        return TrainConfig.from_dict(doc)
    except (ConfigError, TypeError) as exc:
        raise UsageError(f"invalid train config: {exc}") from exc


def cmd_gen(spec_path, out, seed=None) -> int:
    doc = _read_json(spec_path)
    if seed is not None:
        doc["seed"] = seed
    try:
        spec = SynthSpec.from_dict(doc)
        header, batch = generate(spec)
    except (SynthSpecError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid synth spec: {exc}") from exc
    save_store(header, batch, out)
    norms = np.linalg.norm(batch.data.astype(np.float64), axis=1)
    print(f"wrote {header.count} tokens x {header.dim} dims, {len(header.videos)} videos "
          f"({', '.join(header.conditions)})")
    print(f"token norm mean {norms.mean():.4f} std {norms.std():.4f} "
          f"range [{norms.min():.4f}, {norms.max():.4f}]")
    return EXIT_OK


def cmd_train(store, config_path, out, seed=None) -> int:
    config = _config(config_path, seed)
    header, batch = _load_store(store)
    if header.count == 0:
        raise DataError("store is empty")
    params, codebook, tlog = run_stage_a(batch, config)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoint.json").write_text(
        dumps(checkpoint_dict(params, codebook, config.to_dict(), tlog.summary), digits=None)
    )
    (out / "train_log.csv").write_text(tlog.to_csv())
    (out / "train_summary.json").write_text(dumps({**tlog.summary, "resets": tlog.resets}))
    s = tlog.summary
    print(f"{config.steps} steps: commit loss {s['final_commit_loss']:.3g}, "
          f"perplexity {s['final_perplexity']:.3f}, active ratio {s['active_ratio']:.3f}, "
          f"convergence {s['convergence']}")
    return EXIT_OK


def cmd_diagnose(store, checkpoint, interventions_path, out, unit="video", seed=0) -> int:
    try:
        interventions = Intervention.parse_list(_read_json(interventions_path))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"invalid interventions spec: missing {exc}") from exc
    ck = _read_json(checkpoint)
    try:
        params, codebook, summary = load_checkpoint(ck)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid checkpoint: {exc}") from exc
    header, batch = _load_store(store)
    if params.dim != header.dim:
        raise DataError(f"checkpoint expects dim {params.dim}, store has {header.dim}")
    try:
        report, dictionary = diagnose(header, batch, FrozenProbe(params, codebook), interventions,
                                      summary, unit=UNIT_FLAGS[unit], seed=seed)
    except UnknownConditionError as exc:
        raise UsageError(exc.args[0]) from exc
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stage1_report.json").write_text(dumps(report))
    (out / "aim_dictionary.json").write_text(dumps(dictionary))
    for row in report["pass_table"]:
        mark = "PASS" if row["pass"] else "FAIL"
        print(f"{mark}  {row['criterion']}: {row['value']:.4g} {row['comparison']} {row['threshold']:g}")
    print("overall:", "PASS" if report["pass"] else "FAIL")
    return EXIT_OK if report["pass"] else EXIT_FAILED


def _grid_configs(doc) -> list[TrainConfig]:
    if isinstance(doc, list):
        base, rows = {}, doc
    elif isinstance(doc, dict):
        base, rows = doc.get("base", {}), doc.get("rows", [])
    else:
        raise UsageError("grid must be a list of configs or {base, rows}")
    if not rows:
        raise UsageError("ablation grid has no rows")
    configs = []
    for i, row in enumerate(rows):
        # rows share the base seed unless they set one, so arms differ only in their knobs
        merged = {**base, **row}
        try:
            configs.append(TrainConfig.from_dict(merged))
        except (ConfigError, TypeError) as exc:
            raise UsageError(f"grid row {i}: {exc}") from exc
    return configs


def cmd_ablate(store, grid_path, out) -> int:
    configs = _grid_configs(_read_json(grid_path))
    _, batch = _load_store(store)
    rows = ablation_grid(batch, configs)
    out = Path(out)
    target = out if out.suffix == ".csv" else out / "ablation.csv"
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma", "beta", "seed", "active_ratio", "perplexity", "outcome"])
        for r in rows:
            w.writerow([f"{r['gamma']:.9g}", f"{r['beta']:.9g}", r["seed"],
                        f"{r['active_ratio']:.9g}", f"{r['perplexity']:.9g}", r["outcome"]])
            print(f"gamma={r['gamma']:g} beta={r['beta']:g}: active {r['active_ratio']:.3f}, "
                  f"perplexity {r['perplexity']:.3f} -> {r['outcome']}")
    return EXIT_OK


def cmd_plot(source, out, K=8) -> int:
    src = Path(source)
    if not src.exists():
        raise DataError(f"no such file: {src}")
    if src.suffix == ".json":
        figures = report_figures(_read_json(src))
    else:
        tlog = TrainLog.from_csv(src.read_text())
        if not tlog.records:
            raise DataError(f"{src}: no training records")
        figures = training_figures(tlog.column("step"), tlog.column("commit_loss"),
                                   tlog.column("perplexity"), K=K)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name, svg in figures.items():
        (out / name).write_text(svg)
        print(out / name)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vqprobe", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic latent store")
    g.add_argument("spec")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train projection + codebook")
    t.add_argument("store")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)

    d = sub.add_parser("diagnose", help="run H1/H2/codebook diagnostics")
    d.add_argument("store")
    d.add_argument("checkpoint")
    d.add_argument("interventions")
    d.add_argument("--unit", choices=sorted(UNIT_FLAGS), default="video")
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)

    a = sub.add_parser("ablate", help="train a grid of (gamma, beta) configs")
    a.add_argument("store")
    a.add_argument("grid")
    a.add_argument("--out", required=True)

    pl = sub.add_parser("plot", help="render SVG figures from a training CSV or report")
    pl.add_argument("source")
    pl.add_argument("--K", type=int, default=8)
    pl.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            return cmd_gen(args.spec, args.out, args.seed)
        if args.command == "train":
            return cmd_train(args.store, args.config, args.out, args.seed)
        if args.command == "diagnose":
            return cmd_diagnose(args.store, args.checkpoint, args.interventions, args.out,
                                args.unit, args.seed)
        if args.command == "ablate":
            return cmd_ablate(args.store, args.grid, args.out)
        return cmd_plot(args.source, args.out, args.K)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
