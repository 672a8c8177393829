"""Command-line pipeline: prepare-data, synth, train, sweep, evaluate, plot, report.

Every command writes into an output directory together with a
``manifest.json`` listing the config, input hashes, outputs and timings.
Relative output paths are resolved against ``SMPRIV_OUTPUT_ROOT`` when it is
set; ``SMPRIV_PARALLEL`` sets the default worker count of ``sweep``.

Exit codes: 0 success, 2 input error, 3 numeric failure, 4 internal error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

from .data import (DataFormatError, SynthParams, load_raw_csv, read_dataset_csv, read_split_manifest,
                   resample_hourly, split_dataset, split_from_manifest, synthesize_dataset, window_days,
                   write_dataset_csv, write_split_manifest)
from .nets import CheckpointError
from .training import (TrainingDiverged, derive_seed, export_loss_curves, load_training_checkpoint,
                       read_loss_curves, run_training, sweep_lambda, tail_variance)
from .types import ConfigError, ExperimentConfig

logger = logging.getLogger("smpriv")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_INTERNAL = 0, 2, 3, 4
DATASET_FILE, SPLIT_FILE, MANIFEST_FILE = "dataset.csv", "split.json", "manifest.json"


class InputError(Exception):
    """Bad user input: missing files, unparseable CSVs, invalid flags."""


def _version() -> str:
    try:
        return metadata.version("smpriv")
    except metadata.PackageNotFoundError:
        return "unknown"


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    tool_version: str = field(default_factory=_version)

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = file_sha256(path)

    def add_output(self, path: str | Path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / MANIFEST_FILE
        self.outputs.append(str(path))
        missing = [p for p in self.outputs[:-1] if not Path(p).exists()]
        if missing:
            raise RuntimeError(f"manifest lists missing outputs: {missing}")
        path.write_text(json.dumps(asdict(self), indent=1, sort_keys=True) + "\n")
        return path


def _out_dir(path: str) -> Path:
    p = Path(path)
    root = os.environ.get("SMPRIV_OUTPUT_ROOT")
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _existing(path: str | Path) -> Path:
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such file: {p}")
    return p


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _load_split(data_dir: str | Path):
    d = _existing(data_dir)
    ds, sp = _existing(d / DATASET_FILE), _existing(d / SPLIT_FILE)
    return split_from_manifest(read_dataset_csv(ds), read_split_manifest(sp)), [ds, sp]


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(_existing(args.config)) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k) for k in ("method", "si_case", "lam", "epochs") if getattr(args, k, None) is not None}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    return cfg.replace(**overrides)


# --------------------------------------------------------------------------
# commands

def cmd_prepare_data(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args.out)
    seqs = []
    for raw in args.raw:
        raw = _existing(raw)
        hourly = resample_hourly(load_raw_csv(raw))
        seqs += window_days(hourly, args.seq_len, house_id=args.house_id or raw.stem)
    split = split_dataset(seqs, args.seed or 0)
    man = RunManifest("prepare-data", {"seed": args.seed or 0, "seq_len": args.seq_len})
    for raw in args.raw:
        man.add_input(raw)
    write_dataset_csv(seqs, man.add_output(out / DATASET_FILE))
    write_split_manifest(split, man.add_output(out / SPLIT_FILE))
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(out)
    print(f"{len(seqs)} day sequences -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args.out)
    seed = args.seed or 0
    params = SynthParams.default(args.days, rng_seed=seed, si_informative=not args.no_si,
                                 noise_std=args.noise_std, persistence=args.persistence)
    seqs = synthesize_dataset(params)
    split = split_dataset(seqs, derive_seed(seed, 1))
    man = RunManifest("synth", {"days": args.days, "seed": seed, "noise_std": args.noise_std,
                                "persistence": args.persistence, "si_informative": not args.no_si})
    write_dataset_csv(seqs, man.add_output(out / DATASET_FILE))
    write_split_manifest(split, man.add_output(out / SPLIT_FILE))
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(out)
    print(f"{len(seqs)} synthetic days -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    split, inputs = _load_split(args.data)
    out = _out_dir(args.out)
    ckpt = out / "checkpoint.pt"
    state = None
    if args.resume:
        state, cfg = load_training_checkpoint(_existing(args.resume))
        if args.epochs is not None:
            cfg = cfg.replace(epochs=args.epochs)
        inputs.append(Path(args.resume))
    else:
        cfg = _load_config(args)
    man = RunManifest("train", cfg.to_dict())
    for p in inputs:
        man.add_input(p)
    res = run_training(cfg, split, state=state, checkpoint_path=ckpt, checkpoint_every=args.checkpoint_every)
    man.add_output(ckpt)
    export_loss_curves(res.history, man.add_output(out / "loss.csv"))
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(out)
    print(f"trained {res.history[-1].epoch} epochs -> {ckpt}")
    return EXIT_OK


def _lam_tag(lam: float) -> str:
    return repr(float(lam)).replace(".", "p")


def cmd_sweep(args) -> int:
    from .evaluation import (assemble_tradeoff, evaluate_release, raw_attack_data, si_only_baseline,
                             write_tradeoff_csv)
    t0 = time.perf_counter()
    split, inputs = _load_split(args.data)
    out = _out_dir(args.out)
    base = _load_config(args)
    workers = args.parallel if args.parallel is not None else int(os.environ.get("SMPRIV_PARALLEL", "1"))
    man = RunManifest("sweep", {"base": base.to_dict(), "lambdas": args.lambdas, "methods": args.methods,
                                "cases": args.cases})
    for p in inputs:
        man.add_input(p)
    entries, baselines, index_rows = [], {}, []
    for ci, case in enumerate(args.cases):
        if case != "1":
            raw = raw_attack_data(split, case)
            baselines[case] = si_only_baseline(raw["train"], raw["validation"], raw["test"], case, base,
                                               seed=derive_seed(base.rng_seed, 1000 + ci)).balanced_accuracy
        for mi, method in enumerate(args.methods):
            cfg = base.replace(method=method, si_case=case)
            group_seed = derive_seed(base.rng_seed, 100 * ci + mi)
            runs = sweep_lambda(cfg.replace(rng_seed=group_seed), args.lambdas, split, workers=workers)
            for run in runs:
                tag = f"{method}_case{case.replace('*', 'star')}_lam{_lam_tag(run.lam)}_{run.index}"
                row = {"method": method, "si_case": case, "lam": run.lam}
                if not run.ok:
                    logger.error("%s failed: %s", tag, run.error)
                    entries.append({**row, "status": "failed"})
                    index_rows.append([method, case, repr(run.lam), run.seed, "", "failed"])
                    continue
                ev = evaluate_release(run.result, split, seed=derive_seed(run.seed, 1))
                loss_path = man.add_output(out / f"loss_{tag}.csv")
                export_loss_curves(run.result.history, loss_path)
                entries.append({**row, "ne2": ev.ne2, "attacker_bacc": ev.attack.balanced_accuracy})
                index_rows.append([method, case, repr(run.lam), run.seed, loss_path.name, "ok"])
    points = assemble_tradeoff(entries, baselines)
    write_tradeoff_csv(points, man.add_output(out / "tradeoff.csv"))
    with man.add_output(out / "runs.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "si_case", "lambda", "seed", "loss_csv", "status"])
        w.writerows(index_rows)
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(out)
    n_failed = sum(p.status != "ok" for p in points)
    print(f"{len(points)} trade-off points ({n_failed} failed) -> {out / 'tradeoff.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import evaluate_release, raw_attack_data, si_only_baseline
    from .training import TrainResult
    t0 = time.perf_counter()
    split, inputs = _load_split(args.data)
    out = _out_dir(args.out)
    state, cfg = load_training_checkpoint(_existing(args.checkpoint))
    inputs.append(Path(args.checkpoint))
    seed = args.seed if args.seed is not None else cfg.rng_seed
    res = TrainResult(cfg, state.releaser, state.adversary, state.history, state)
    ev = evaluate_release(res, split, seed=derive_seed(seed, 1))
    report = {"method": cfg.method, "si_case": cfg.si_case, "lambda": cfg.lam, "ne2": ev.ne2,
              "attack": json.loads(ev.attack.to_json()), "si_only_baseline": None}
    if cfg.si_case != "1":
        raw = raw_attack_data(split, cfg.si_case)
        report["si_only_baseline"] = si_only_baseline(raw["train"], raw["validation"], raw["test"], cfg.si_case,
                                                      cfg, seed=derive_seed(seed, 2)).balanced_accuracy
    man = RunManifest("evaluate", cfg.to_dict())
    for p in inputs:
        man.add_input(p)
    path = man.add_output(out / "evaluation.json")
    path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(out)
    print(f"NE2 {ev.ne2:.4f}  attacker balanced accuracy {ev.attack.balanced_accuracy:.4f}")
    return EXIT_OK


def cmd_plot(args) -> int:
    from . import plotting
    from .evaluation import read_tradeoff_csv
    t0 = time.perf_counter()
    out = _out_dir(args.out)
    man = RunManifest("plot", {})
    try:
        points = read_tradeoff_csv(_existing(args.tradeoff))
    except (ValueError, KeyError) as exc:
        raise InputError(f"{args.tradeoff}: {exc}") from None
    if not points:
        raise InputError(f"{args.tradeoff}: no trade-off rows")
    man.add_input(args.tradeoff)
    plotting.plot_tradeoff(points, man.add_output(out / "tradeoff.svg"))
    if args.loss:
        curves = {}
        for p in args.loss:
            man.add_input(p)
            try:
                curves[Path(p).stem] = read_loss_curves(_existing(p))
            except (ValueError, KeyError) as exc:
                raise InputError(f"{p}: {exc}") from None
        plotting.plot_loss_curves(curves, man.add_output(out / "loss.svg"))
    man.timings["total_s"] = time.perf_counter() - t0
    man.write(out)
    print(f"figures -> {out}")
    return EXIT_OK


def loss_variance_table(sweep_dir: str | Path, window: int = 20) -> list[dict]:
    """Tail variance of each loss term per run listed in a sweep's ``runs.csv``."""
    d = _existing(sweep_dir)
    rows = []
    with _existing(d / "runs.csv").open(newline="") as fh:
        for r in csv.DictReader(fh):
            if r["status"] != "ok":
                continue
            curves = read_loss_curves(d / r["loss_csv"])
            rows.append({"method": r["method"], "si_case": r["si_case"], "lambda": float(r["lambda"]),
                         **{f"var_{k}": tail_variance(curves[k], window)
                            for k in ("releaser_total", "privacy_term", "adversary_loss")}})
    return sorted(rows, key=lambda r: (r["method"], r["si_case"], r["lambda"]))


def cmd_report(args) -> int:
    t0 = time.perf_counter()
    rows = loss_variance_table(args.sweep_dir, args.window)
    if not rows:
        raise InputError(f"{args.sweep_dir}: no successful runs to report")
    cols = list(rows[0])
    print(f"loss variance over the last {args.window} epochs")
    print("  ".join(f"{c:>20}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>20.6g}" if isinstance(r[c], float) else f"{r[c]:>20}" for c in cols))
    if args.out:
        out = _out_dir(args.out)
        man = RunManifest("report", {"window": args.window})
        man.add_input(Path(args.sweep_dir) / "runs.csv")
        with man.add_output(out / "loss_variance.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            w.writerows([[repr(v) if isinstance(v, float) else v for v in r.values()] for r in rows])
        man.timings["total_s"] = time.perf_counter() - t0
        man.write(out)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="single source of randomness; sub-seeds are derived")
    common.add_argument("-v", "--verbose", action="store_true")

    cfg_flags = argparse.ArgumentParser(add_help=False)
    cfg_flags.add_argument("--config", help="ExperimentConfig JSON (defaults if omitted)")
    cfg_flags.add_argument("--method", choices=["CAL", "DI"])
    cfg_flags.add_argument("--si-case", dest="si_case", choices=["1", "2", "3", "2*"])
    cfg_flags.add_argument("--epochs", type=int)

    p = argparse.ArgumentParser(prog="smpriv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=_version())
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("prepare-data", parents=[common], help="raw meter CSV(s) -> day sequences + split")
    s.add_argument("raw", nargs="+", help="CSV with columns timestamp,power,occupancy")
    s.add_argument("--out", required=True)
    s.add_argument("--house-id", default=None)
    s.add_argument("--seq-len", type=int, default=24)
    s.set_defaults(func=cmd_prepare_data)

    s = sub.add_parser("synth", parents=[common], help="synthetic occupancy/load dataset")
    s.add_argument("--days", type=int, default=400)
    s.add_argument("--noise-std", type=float, default=SynthParams.noise_std)
    s.add_argument("--persistence", type=float, default=0.5)
    s.add_argument("--no-si", action="store_true", help="make occupancy independent of the calendar")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common, cfg_flags], help="train one releaser")
    s.add_argument("--data", required=True, help="directory written by synth or prepare-data")
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--resume", help="training checkpoint to continue from")
    s.add_argument("--checkpoint-every", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", parents=[common, cfg_flags], help="lambda grid x methods x SI cases")
    s.add_argument("--data", required=True)
    s.add_argument("--lambdas", type=_float_list, required=True, help="e.g. 0.5,1,2,4,8")
    s.add_argument("--methods", type=_str_list, default=["CAL", "DI"])
    s.add_argument("--cases", type=_str_list, default=["1"])
    s.add_argument("--parallel", type=int, default=None, help="worker processes (env SMPRIV_PARALLEL)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("evaluate", parents=[common], help="attack a trained releaser")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("plot", parents=[common], help="trade-off and loss-curve figures (SVG)")
    s.add_argument("--tradeoff", required=True)
    s.add_argument("--loss", nargs="*", default=[])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot)

    s = sub.add_parser("report", parents=[common], help="tail loss variance per run of a sweep")
    s.add_argument("sweep_dir")
    s.add_argument("--window", type=int, default=20)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "methods", None):
        bad = [m for m in args.methods if m.upper() not in ("CAL", "DI")]
        if bad:
            parser.error(f"unknown method(s) {bad}")
        args.methods = [m.upper() for m in args.methods]
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError, DataFormatError, ConfigError, CheckpointError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
