"""Command-line entry point: ``longal {synth,run,eval,sweep,report}``.

Exit codes: 0 success, 2 invalid parameters or config, 3 missing files / IO
failure, 4 runtime abort (every repeat hit a non-finite loss). Machine-readable
summaries go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .data import SynthParams, dataset_digest, generate_synthetic, load_dataset, preprocess_dataset, save_dataset
from .data.split import split_patients
from .errors import ConfigError, CorruptCheckpoint, DatasetFormatError, GeometryError, LongalError
from .learner import load_learner, save_learner
from .loop import ExperimentLog, resume, run_al_loop
from .metrics import evaluate_testset, export_selection_distribution

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_ABORT = 0, 2, 3, 4
SWEEP_COLUMNS = [
    "strategy",
    "budget",
    "repeat",
    "labeled_count",
    "final_dice",
    "final_recall",
    "final_precision",
    "highest_dice",
    "status",
]

log = logging.getLogger("longal")


class _Fail(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _range_arg(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.split(",")]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected N or MIN,MAX, got {text!r}")
    return parts[0], parts[1]


def _hw_arg(text: str) -> tuple[int, int]:
    parts = [int(p) for p in text.lower().replace("x", ",").split(",")]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected N or HxW, got {text!r}")
    return parts[0], parts[1]


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _fmt(x) -> str:
    return "" if x is None else f"{x:.4f}"


# ------------------------------------------------------------------- datasets
def _load_dataset(path):
    if path is None:
        raise _Fail(EXIT_USAGE, "no dataset given (config key 'dataset' or --dataset)")
    if not Path(path).exists():
        raise _Fail(EXIT_IO, f"dataset {path} does not exist")
    try:
        return load_dataset(path)
    except (DatasetFormatError, LongalError) as exc:
        raise _Fail(EXIT_IO, f"cannot load dataset {path}: {exc}") from exc


def _prepare(run: RunConfig, dataset_path=None):
    raw = _load_dataset(dataset_path or run.dataset)
    data = preprocess_dataset(raw, run.target_hw) if run.target_hw else raw
    train, val, test = split_patients(data, run.split, run.split_seed)
    return raw, train, val, test


def _load_run_config(path, overrides):
    if not Path(path).exists():
        raise _Fail(EXIT_IO, f"config {path} does not exist")
    try:
        return load_config(path, overrides)
    except ConfigError as exc:
        raise _Fail(EXIT_USAGE, f"config error: {exc}") from exc


# ------------------------------------------------------------------- commands
def cmd_synth(args) -> int:
    h, w = args.hw
    p = SynthParams(
        n_patients=args.patients,
        timepoints_per_patient=args.timepoints,
        h=h,
        w=w,
        c=args.slices,
        lesion_count_range=args.lesions,
        lesion_diameter_range=args.diameter,
        noise_sigma=args.noise,
        misalignment_px=args.misalign,
        seed=args.seed,
    )
    try:
        d = generate_synthetic(p)
    except (ValueError, GeometryError) as exc:
        raise _Fail(EXIT_USAGE, f"invalid synthesis parameters: {exc}") from exc
    try:
        save_dataset(d, args.out)
    except OSError as exc:
        raise _Fail(EXIT_IO, f"cannot write {args.out}: {exc}") from exc
    _emit({"patients": len(d.patients), "pairs": d.n_pairs(), "out": str(args.out)})
    return EXIT_OK


def _write_run_outputs(out: Path, run: RunConfig, elog: ExperimentLog, raw, train, learner_holder) -> None:
    elog.to_csv(out / "log.csv")
    elog.selections_csv(out / "selections.csv")
    for rep in elog.repeats:
        export_selection_distribution(elog, train, out / f"selection_distribution_r{rep}.csv", repeat=rep)
    manifest = {
        "version": __version__,
        "run": run.to_dict(),
        "seeds": elog.seeds,
        "dataset_sha256": dataset_digest(raw),
        "pool_size": train.n_pairs(),
        "summary": elog.summary(),
        "failures": elog.failures,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if learner_holder:
        save_learner(learner_holder[-1], out / "model.ckpt")


def cmd_run(args) -> int:
    run = _load_run_config(args.config, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw, train, val, test = _prepare(run)
    state = None
    state_path = out / "state.ckpt"
    if args.resume:
        if not state_path.exists():
            raise _Fail(EXIT_IO, f"no checkpoint at {state_path}")
        try:
            state = resume(state_path)
        except CorruptCheckpoint as exc:
            raise _Fail(EXIT_IO, f"corrupt checkpoint: {exc}") from exc
    models = [state["learner"]] if state and state["learner"] is not None else []

    def keep(rep, it, model):
        models[:] = [model]

    try:
        elog = run_al_loop(
            run.experiment,
            train,
            val,
            test,
            checkpoint_path=state_path,
            resume_state=state,
            stop_after=args.stop_after,
            on_model=keep,
        )
    except (ValueError, LongalError) as exc:
        raise _Fail(EXIT_USAGE, f"cannot run experiment: {exc}") from exc
    _write_run_outputs(out, run, elog, raw, train, models)
    if not elog.records and elog.failures:
        log.error("every repeat aborted")
        return EXIT_ABORT
    _emit({"out": str(out), "iterations": len(elog.records), **elog.summary()["mean"]})
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise _Fail(EXIT_IO, f"checkpoint {ckpt} does not exist")
    try:
        model = load_learner(ckpt)
    except CorruptCheckpoint as exc:
        raise _Fail(EXIT_IO, f"corrupt checkpoint: {exc}") from exc
    if args.config:
        run = _load_run_config(args.config, args.set)
        _, train, val, test = _prepare(run, args.dataset)
        target = {"train": train, "val": val, "test": test}[args.split]
    else:
        target = _load_dataset(args.dataset)
    d, r, p = evaluate_testset(model, target, args.threshold, args.average)
    _emit({"dice": round(d, 4), "recall": round(r, 4), "precision": round(p, 4)})
    return EXIT_OK


def _parse_budget(text: str):
    return float(text) if any(ch in text for ch in ".eE") else int(text)


def cmd_sweep(args) -> int:
    run = _load_run_config(args.config, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    raw, train, val, test = _prepare(run)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    budgets = [_parse_budget(b.strip()) for b in args.budgets.split(",") if b.strip()]
    rows = []
    for name in strategies:
        for budget in budgets:
            cell = f"{name}_{budget}"
            try:
                exp = replace(run.experiment, budget=budget, strategy=replace(run.experiment.strategy, name=name))
                elog = run_al_loop(exp, train, val, test)
                cell_dir = out / "cells" / cell
                cell_dir.mkdir(parents=True, exist_ok=True)
                elog.to_csv(cell_dir / "log.csv")
                elog.selections_csv(cell_dir / "selections.csv")
                summ = elog.summary()
                for r in summ["repeats"]:
                    rows.append(
                        [name, budget, r["repeat"], r["labeled_count"], _fmt(r["final_dice"]), _fmt(r["final_recall"]),
                         _fmt(r["final_precision"]), _fmt(r["highest_dice"]), "ok"]
                    )
                for f in elog.failures:
                    rows.append([name, budget, f["repeat"], "", "", "", "", "", "failed"])
                if summ["mean"]:
                    m = summ["mean"]
                    rows.append(
                        [name, budget, "mean", summ["repeats"][-1]["labeled_count"], _fmt(m["final_dice"]),
                         _fmt(m["final_recall"]), _fmt(m["final_precision"]), _fmt(m["highest_dice"]), "ok"]
                    )
            except (ValueError, LongalError) as exc:
                log.error("sweep cell %s failed: %s", cell, exc)
                rows.append([name, budget, "", "", "", "", "", "", "failed"])
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    _emit({"out": str(out / "sweep.csv"), "rows": len(rows)})
    return EXIT_OK


def _read_log(path: Path) -> list[dict]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.run_dirs]
    logs = {}
    for d in dirs:
        f = d / "log.csv"
        if not f.exists():
            raise _Fail(EXIT_IO, f"{d} has no log.csv")
        logs[d.name if d.name not in logs else str(d)] = _read_log(f)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    table, curve = [], []
    for name, rows in logs.items():
        rows = [r for r in rows if r["dice"] != ""]
        per_repeat = {}
        for r in rows:
            per_repeat.setdefault(r["repeat"], []).append(r)
        finals, bests = [], []
        for rep, rr in sorted(per_repeat.items(), key=lambda kv: int(kv[0])):
            final = rr[-1]
            best = max(float(x["dice"]) for x in rr)
            vals = [float(final[k]) for k in ("dice", "recall", "precision")]
            finals.append(vals)
            bests.append(best)
            table.append([name, rep, final["labeled_count"], *(_fmt(v) for v in vals), _fmt(best)])
        if finals:
            mean = np.mean(finals, axis=0)
            table.append([name, "mean", per_repeat[max(per_repeat, key=int)][-1]["labeled_count"],
                          *(_fmt(v) for v in mean), _fmt(float(np.mean(bests)))])
        by_iter = {}
        for r in rows:
            by_iter.setdefault(int(r["iteration"]), []).append(r)
        for it in sorted(by_iter):
            rr = by_iter[it]
            curve.append([name, it, rr[0]["labeled_count"],
                          *(_fmt(float(np.mean([float(x[k]) for x in rr]))) for k in ("dice", "recall", "precision")),
                          len(rr)])
    with (out / "report.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "repeat", "labeled_count", "final_dice", "final_recall", "final_precision", "highest_dice"])
        w.writerows(table)
    with (out / "learning_curve.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "iteration", "labeled_count", "mean_dice", "mean_recall", "mean_precision", "n_repeats"])
        w.writerows(curve)
    _emit({"report": str(out / "report.csv"), "learning_curve": str(out / "learning_curve.csv"), "runs": len(logs)})
    return EXIT_OK


# ---------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="longal", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic longitudinal dataset")
    s.add_argument("--patients", type=int, default=6)
    s.add_argument("--timepoints", type=int, default=3)
    s.add_argument("--hw", type=_hw_arg, default=(64, 64), help="slice size, N or HxW")
    s.add_argument("--slices", type=int, default=6)
    s.add_argument("--lesions", type=_range_arg, default=(1, 3), help="lesions per timepoint, N or MIN,MAX")
    s.add_argument("--diameter", type=_range_arg, default=(3, 10), help="lesion diameter in voxels, MIN,MAX")
    s.add_argument("--noise", type=float, default=0.02, help="Gaussian noise sigma")
    s.add_argument("--misalign", type=int, default=1, help="max follow-up translation in pixels")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    def config_args(p):
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    r = sub.add_parser("run", help="run the active-learning loop")
    config_args(r)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--resume", action="store_true", help="continue from OUT/state.ckpt")
    r.add_argument("--stop-after", type=int, default=None, help="stop after N trained iterations")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate a saved model")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", default=None, help="dataset directory (whole dataset unless --config)")
    e.add_argument("--config", default=None, help="reproduce the run's preprocessing and split")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--threshold", type=float, default=0.5)
    e.add_argument("--average", choices=("micro", "macro"), default="micro")
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="strategy x budget grid with shared seeds")
    config_args(w)
    w.add_argument("--strategies", required=True, help="comma-separated strategy names")
    w.add_argument("--budgets", required=True, help="comma-separated budgets (fractions or counts)")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="merge run logs into comparison and learning-curve tables")
    p.add_argument("run_dirs", nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report" and not args.run_dirs:
        print("report: no run directories given", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
