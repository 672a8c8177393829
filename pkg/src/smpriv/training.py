"""Alternating adversarial training of the releaser, the lambda sweep and loss-curve export.

One training iteration runs ``k`` adversary updates, each on a freshly sampled
minibatch, followed by one releaser update; an epoch is ``ceil(N_train / B)``
iterations.  Both networks use RMSprop.  Seed noise is redrawn for every
minibatch.  All randomness after initialisation comes from one
``torch.Generator`` seeded from ``cfg.rng_seed``.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .data import DatasetSplit, NormStats, normalize, stack_sequences
from .nets import AdversaryNet, ReleaserNet, init_networks, load_checkpoint, save_checkpoint, shift_labels
from .objectives import LossReport, adversary_loss, cal_releaser_loss, di_releaser_loss
from .types import ExperimentConfig, LoadSequence, validate_config

logger = logging.getLogger(__name__)

DTYPE = torch.float32


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, phase: str):
        super().__init__(f"non-finite loss at epoch {epoch} during {phase} phase")
        self.epoch = epoch
        self.phase = phase


@dataclass
class Tensors:
    """Model-ready arrays for one partition: normalised ``y``, labels ``x``, SI ``s``."""

    y: torch.Tensor
    x: torch.Tensor
    s: torch.Tensor

    @classmethod
    def build(cls, seqs: Sequence[LoadSequence], stats: NormStats, si_case: str, dtype=DTYPE) -> "Tensors":
        y, x, s = stack_sequences(seqs, si_case)
        return cls(torch.as_tensor(normalize(y, stats), dtype=dtype),
                   torch.as_tensor(x, dtype=dtype),
                   torch.as_tensor(s, dtype=dtype))

    def __len__(self) -> int:
        return self.y.shape[0]

    def take(self, idx: torch.Tensor) -> "Tensors":
        return Tensors(self.y[idx], self.x[idx], self.s[idx])


@dataclass
class EpochRecord:
    epoch: int
    releaser: LossReport
    adversary_loss: float
    val_releaser_total: float
    val_distortion: float
    val_adversary_loss: float


@dataclass
class TrainState:
    releaser: ReleaserNet
    adversary: AdversaryNet
    releaser_opt: torch.optim.Optimizer
    adversary_opt: torch.optim.Optimizer
    generator: torch.Generator
    epoch: int = 0
    history: list[EpochRecord] = field(default_factory=list)
    best_val: float = math.inf
    best_epoch: int = 0


@dataclass
class TrainResult:
    config: ExperimentConfig
    releaser: ReleaserNet
    adversary: AdversaryNet
    history: list[EpochRecord]
    state: TrainState | None = None


def _rmsprop(params, cfg: ExperimentConfig) -> torch.optim.Optimizer:
    return torch.optim.RMSprop(params, lr=cfg.learning_rate, alpha=cfg.rmsprop_alpha, eps=cfg.rmsprop_eps)


def init_state(cfg: ExperimentConfig, dtype=DTYPE) -> TrainState:
    releaser, adversary = init_networks(cfg, dtype)
    gen = torch.Generator().manual_seed(cfg.rng_seed)
    return TrainState(releaser, adversary, _rmsprop(releaser.parameters(), cfg),
                      _rmsprop(adversary.parameters(), cfg), gen)


def _sample(data: Tensors, cfg: ExperimentConfig, gen: torch.Generator) -> tuple[Tensors, torch.Tensor]:
    n = len(data)
    idx = torch.randperm(n, generator=gen)[:min(cfg.batch_size, n)]
    batch = data.take(idx)
    u = torch.rand((len(idx), batch.y.shape[1], cfg.noise_dim), generator=gen, dtype=batch.y.dtype)
    return batch, u


def _adversary_probs(adversary: AdversaryNet, z, batch: Tensors):
    x_past = shift_labels(batch.x) if adversary.label_feedback else None
    return adversary(z, x_past, batch.s)


def _release(releaser: ReleaserNet, batch: Tensors, u: torch.Tensor) -> torch.Tensor:
    return releaser(batch.x, batch.y, u, batch.s)


def releaser_loss(cfg: ExperimentConfig, releaser: ReleaserNet, z, batch: Tensors, q) -> LossReport:
    params = list(releaser.parameters()) if cfg.ridge_coeff else None
    if cfg.method == "CAL":
        return cal_releaser_loss(z, batch.y, q, batch.x, cfg.lam, cfg.ridge_coeff, params)
    return di_releaser_loss(z, batch.y, q, cfg.lam, cfg.ridge_coeff, params)


def adversary_phase(state: TrainState, data: Tensors, cfg: ExperimentConfig) -> float:
    """``k`` RMSprop steps on the adversary loss with the releaser held fixed.

    Returns the mean adversary loss over the steps.
    """
    losses = []
    for _ in range(cfg.adversary_steps):
        batch, u = _sample(data, cfg, state.generator)
        with torch.no_grad():
            z = _release(state.releaser, batch, u)
        q = _adversary_probs(state.adversary, z, batch)
        if not torch.isfinite(q).all():
            raise TrainingDiverged(state.epoch + 1, "adversary")
        loss = adversary_loss(q, batch.x)
        if not torch.isfinite(loss):
            raise TrainingDiverged(state.epoch + 1, "adversary")
        state.adversary_opt.zero_grad()
        loss.backward()
        state.adversary_opt.step()
        losses.append(loss.item())
    return float(np.mean(losses))


def releaser_phase(state: TrainState, data: Tensors, cfg: ExperimentConfig) -> LossReport:
    """One RMSprop step on the releaser loss; gradients pass through the frozen adversary."""
    batch, u = _sample(data, cfg, state.generator)
    adv_params = list(state.adversary.parameters())
    for p in adv_params:
        p.requires_grad_(False)
    try:
        z = _release(state.releaser, batch, u)
        q = _adversary_probs(state.adversary, z, batch)
        if not (torch.isfinite(z).all() and torch.isfinite(q).all()):
            raise TrainingDiverged(state.epoch + 1, "releaser")
        report = releaser_loss(cfg, state.releaser, z, batch, q)
        if not torch.isfinite(report.total):
            raise TrainingDiverged(state.epoch + 1, "releaser")
        state.releaser_opt.zero_grad()
        report.total.backward()
        state.releaser_opt.step()
    finally:
        for p in adv_params:
            p.requires_grad_(True)
    return report.to_floats()


@torch.no_grad()
def validate(state: TrainState, data: Tensors, cfg: ExperimentConfig) -> tuple[LossReport, float]:
    u = torch.rand((len(data), data.y.shape[1], cfg.noise_dim), generator=state.generator, dtype=data.y.dtype)
    z = _release(state.releaser, data, u)
    q = _adversary_probs(state.adversary, z, data)
    if not (torch.isfinite(z).all() and torch.isfinite(q).all()):
        raise TrainingDiverged(state.epoch + 1, "validation")
    return releaser_loss(cfg, state.releaser, z, data, q).to_floats(), float(adversary_loss(q, data.x))


def _mean_reports(reports: list[LossReport]) -> LossReport:
    return LossReport(*(float(np.mean([getattr(r, f) for r in reports]))
                        for f in ("total", "distortion_term", "privacy_term", "regularization_term")))


def run_training(cfg: ExperimentConfig, split: DatasetSplit, state: TrainState | None = None,
                 checkpoint_path: str | Path | None = None, checkpoint_every: int = 0) -> TrainResult:
    """Train until ``cfg.epochs`` epochs have run in total or validation loss stops improving.

    Passing a ``state`` (e.g. from :func:`load_training_checkpoint`) resumes it,
    continuing the epoch numbering.  Early stopping watches the validation
    releaser loss with ``cfg.patience`` epochs of patience (0 disables it).
    """
    cfg = validate_config(cfg)
    train = Tensors.build(split.train, split.stats, cfg.si_case)
    val = Tensors.build(split.validation or split.train, split.stats, cfg.si_case)
    if state is None:
        state = init_state(cfg)
    n_iter = math.ceil(len(train) / cfg.batch_size)
    while state.epoch < cfg.epochs:
        epoch = state.epoch + 1
        adv_losses, rel_reports = [], []
        state.releaser.train()
        for _ in range(n_iter):
            adv_losses.append(adversary_phase(state, train, cfg))
            rel_reports.append(releaser_phase(state, train, cfg))
        val_report, val_adv = validate(state, val, cfg)
        if not (math.isfinite(val_report.total) and math.isfinite(val_adv)):
            raise TrainingDiverged(epoch, "validation")
        state.history.append(EpochRecord(epoch, _mean_reports(rel_reports), float(np.mean(adv_losses)),
                                         val_report.total, val_report.distortion_term, val_adv))
        state.epoch = epoch
        if val_report.total < state.best_val:
            state.best_val, state.best_epoch = val_report.total, epoch
        if checkpoint_path and checkpoint_every and epoch % checkpoint_every == 0:
            save_training_checkpoint(checkpoint_path, state, cfg)
        if epoch % 25 == 0:
            logger.info("epoch %d releaser %.4f adversary %.4f val %.4f", epoch,
                        state.history[-1].releaser.total, state.history[-1].adversary_loss, val_report.total)
        if cfg.patience and epoch - state.best_epoch >= cfg.patience:
            logger.info("early stop at epoch %d (best %d)", epoch, state.best_epoch)
            break
    if checkpoint_path:
        save_training_checkpoint(checkpoint_path, state, cfg)
    return TrainResult(cfg, state.releaser, state.adversary, state.history, state)


# --------------------------------------------------------------------------
# checkpoints of the full training state

def _history_to_rows(history: list[EpochRecord]) -> list[list[float]]:
    return [[h.epoch, h.releaser.total, h.releaser.distortion_term, h.releaser.privacy_term,
             h.releaser.regularization_term, h.adversary_loss, h.val_releaser_total,
             h.val_distortion, h.val_adversary_loss] for h in history]


def _rows_to_history(rows) -> list[EpochRecord]:
    return [EpochRecord(int(r[0]), LossReport(*map(float, r[1:5])), *map(float, r[5:9])) for r in rows]


def save_training_checkpoint(path: str | Path, state: TrainState, cfg: ExperimentConfig) -> None:
    save_checkpoint(path, {"releaser": state.releaser, "adversary": state.adversary}, cfg,
                    rng_state=state.generator.get_state(),
                    extra={"epoch": state.epoch, "best_val": state.best_val, "best_epoch": state.best_epoch,
                           "history": _history_to_rows(state.history),
                           "releaser_opt": state.releaser_opt.state_dict(),
                           "adversary_opt": state.adversary_opt.state_dict()})


def load_training_checkpoint(path: str | Path, cfg: ExperimentConfig | None = None) -> tuple[TrainState, ExperimentConfig]:
    """Restore a :class:`TrainState`; ``cfg`` may override epochs/patience but not architecture."""
    ck = load_checkpoint(path)
    saved_cfg = ck["config"]
    cfg = cfg or saved_cfg
    releaser, adversary = ck["nets"]["releaser"], ck["nets"]["adversary"]
    fresh_r, fresh_a = init_networks(cfg)
    for name, fresh, got in (("releaser", fresh_r, releaser), ("adversary", fresh_a, adversary)):
        if got.descriptor != fresh.descriptor:
            raise ValueError(f"checkpoint {name} architecture {got.descriptor} does not match config")
    extra = ck["extra"]
    state = TrainState(releaser, adversary, _rmsprop(releaser.parameters(), cfg),
                       _rmsprop(adversary.parameters(), cfg), torch.Generator())
    state.generator.set_state(ck["rng_state"])
    state.releaser_opt.load_state_dict(extra["releaser_opt"])
    state.adversary_opt.load_state_dict(extra["adversary_opt"])
    state.epoch = int(extra["epoch"])
    state.best_val = float(extra["best_val"])
    state.best_epoch = int(extra["best_epoch"])
    state.history = _rows_to_history(extra["history"])
    return state, cfg


# --------------------------------------------------------------------------
# lambda sweep

def derive_seed(base_seed: int, index: int) -> int:
    """Independent, reproducible per-run seed from a base seed and a run index."""
    return int(np.random.SeedSequence([int(base_seed) & 0xFFFFFFFF, int(index)]).generate_state(1)[0])


@dataclass
class SweepRun:
    index: int
    lam: float
    seed: int
    result: TrainResult | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


def _sweep_job(args) -> SweepRun:
    index, lam, seed, cfg, split = args
    try:
        torch.set_num_threads(1)
        res = run_training(cfg.replace(lam=lam, rng_seed=seed), split)
        res.state = None
        return SweepRun(index, lam, seed, res)
    except Exception as exc:  # one failed point must not sink the sweep
        logger.exception("sweep point lambda=%s failed", lam)
        return SweepRun(index, lam, seed, error=f"{type(exc).__name__}: {exc}")


def sweep_lambda(base_cfg: ExperimentConfig, lambdas: Sequence[float], split: DatasetSplit,
                 workers: int = 1, seeds: Sequence[int] | None = None) -> list[SweepRun]:
    """Train one releaser per lambda, each with its own derived seed, results ordered by lambda."""
    if not len(lambdas):
        raise ValueError("lambda grid is empty")
    if seeds is None:
        seeds = [derive_seed(base_cfg.rng_seed, i) for i in range(len(lambdas))]
    if len(seeds) != len(lambdas):
        raise ValueError("need one seed per lambda")
    jobs = [(i, float(lam), int(s), base_cfg, split) for i, (lam, s) in enumerate(zip(lambdas, seeds))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_sweep_job, jobs))
    else:
        runs = [_sweep_job(j) for j in jobs]
    return sorted(runs, key=lambda r: (r.lam, r.index))


# --------------------------------------------------------------------------
# loss curves

LOSS_COLUMNS = ("epoch", "releaser_total", "distortion_term", "privacy_term",
                "regularization_term", "adversary_loss")


def export_loss_curves(history: Sequence[EpochRecord], path: str | Path) -> Path:
    if not history:
        raise ValueError("empty training history")
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOSS_COLUMNS)
        for h in history:
            w.writerow([h.epoch, repr(h.releaser.total), repr(h.releaser.distortion_term),
                        repr(h.releaser.privacy_term), repr(h.releaser.regularization_term),
                        repr(h.adversary_loss)])
    return path


def read_loss_curves(path: str | Path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOSS_COLUMNS:
            raise ValueError(f"{path}: unexpected loss-curve columns {reader.fieldnames}")
        rows = list(reader)
    return {c: np.array([float(r[c]) for r in rows]) for c in LOSS_COLUMNS}


def tail_variance(values: Sequence[float], window: int = 20) -> float:
    """Sample variance of the last ``window`` entries (fewer if the series is shorter)."""
    tail = np.asarray(values, dtype=np.float64)[-window:]
    return float(np.var(tail, ddof=1)) if len(tail) > 1 else 0.0
