"""Attacker training and evaluation, SI-only baselines and trade-off assembly."""
from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

from .data import DatasetSplit, NormStats, denormalize, normalize, stack_sequences
from .nets import AttackerNet, ReleaserNet, make_attacker
from .objectives import adversary_loss, balanced_accuracy, multiclass_balanced_accuracy, ne2
from .training import TrainResult
from .types import ConfusionCounts, ExperimentConfig, LoadSequence, ReleasedSequence, TradeoffPoint

DTYPE = torch.float32


@dataclass
class AttackData:
    """Released load ``z`` (kW), true labels ``x`` and encoded SI ``s`` for N sequences."""

    z: np.ndarray
    x: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.int8)
        self.s = np.asarray(self.s, dtype=np.float64).reshape(len(self.z), -1)
        if self.z.shape != self.x.shape:
            raise ValueError(f"z {self.z.shape} and x {self.x.shape} are not aligned")

    def __len__(self) -> int:
        return len(self.z)

    def tensors(self):
        return (torch.as_tensor(self.z, dtype=DTYPE), torch.as_tensor(self.x, dtype=DTYPE),
                torch.as_tensor(self.s, dtype=DTYPE))

    def without_release(self) -> "AttackData":
        return AttackData(np.zeros_like(self.z), self.x, self.s)


@dataclass(frozen=True)
class AttackReport:
    balanced_accuracy: float
    confusion: ConfusionCounts
    si_case: str
    uses_si: bool
    n_examples: int

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "AttackReport":
        d = json.loads(text)
        d["confusion"] = ConfusionCounts(**d["confusion"])
        return cls(**d)


# --------------------------------------------------------------------------
# release generation

def generate_release_array(releaser: ReleaserNet, seqs: Sequence[LoadSequence], stats: NormStats,
                           cfg: ExperimentConfig, seed: int) -> np.ndarray:
    """Release every sequence with fresh seed noise; returns kW values clipped at zero, shape (N, T)."""
    if not seqs:
        return np.zeros((0, cfg.seq_len))
    y, x, s = stack_sequences(seqs, cfg.si_case)
    gen = torch.Generator().manual_seed(int(seed))
    dtype = next(releaser.parameters()).dtype
    u = torch.rand((len(seqs), y.shape[1], releaser.noise_dim), generator=gen, dtype=dtype)
    with torch.no_grad():
        z = releaser(torch.as_tensor(x, dtype=dtype), torch.as_tensor(normalize(y, stats), dtype=dtype),
                     u, torch.as_tensor(s, dtype=dtype))
    return np.clip(denormalize(z.double().numpy(), stats), 0.0, None)


def generate_release(releaser: ReleaserNet, seqs: Sequence[LoadSequence], stats: NormStats,
                     cfg: ExperimentConfig, seed: int) -> list[ReleasedSequence]:
    return [ReleasedSequence(z) for z in generate_release_array(releaser, seqs, stats, cfg, seed)]


def attack_data(z: np.ndarray, seqs: Sequence[LoadSequence], si_case: str) -> AttackData:
    _, x, s = stack_sequences(seqs, si_case)
    if not seqs:
        return AttackData(np.zeros((0, 0)), np.zeros((0, 0)), s)
    return AttackData(z, x, s)


# --------------------------------------------------------------------------
# attacker

@torch.no_grad()
def predict_proba(attacker: AttackerNet, data: AttackData) -> np.ndarray:
    z, _, s = data.tensors()
    return attacker(z, s).double().numpy()


def evaluate_attacker(attacker: AttackerNet, data: AttackData, si_case: str = "1",
                      threshold: float = 0.5) -> AttackReport:
    """Per-step prediction ``1[q_t >= threshold]``, scored by balanced accuracy over all steps."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty partition")
    pred = (predict_proba(attacker, data) >= threshold).astype(int)
    c = ConfusionCounts.from_labels(data.x, pred)
    return AttackReport(balanced_accuracy(c), c, str(si_case), attacker.side_dim > 0, c.total)


def train_attacker(train: AttackData, val: AttackData, si_case: str, cfg: ExperimentConfig,
                   seed: int = 0) -> AttackerNet:
    """Supervised per-step cross-entropy training with RMSprop.

    The weights with the best validation balanced accuracy are kept; training
    stops after ``cfg.attacker_patience`` epochs without improvement.
    """
    labels = np.unique(train.x)
    if len(labels) < 2:
        raise ValueError("attacker training labels contain a single class")
    net = make_attacker(si_case, cfg, seed)
    z_flat = train.z.ravel()
    with torch.no_grad():
        net.z_mean.fill_(float(z_flat.mean()))
        net.z_std.fill_(float(z_flat.std()) if z_flat.std() > 0 else 1.0)
    opt = torch.optim.RMSprop(net.parameters(), lr=cfg.attacker_learning_rate,
                              alpha=cfg.rmsprop_alpha, eps=cfg.rmsprop_eps)
    gen = torch.Generator().manual_seed(int(seed))
    z, x, s = train.tensors()
    n = len(train)
    val_ok = len(val) > 0 and len(np.unique(val.x)) == 2
    best_score, best_state, best_epoch = -math.inf, None, 0
    for epoch in range(1, cfg.attacker_epochs + 1):
        perm = torch.randperm(n, generator=gen)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss = adversary_loss(net(z[idx], s[idx]), x[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        if not val_ok:
            continue
        score = evaluate_attacker(net, val).balanced_accuracy
        if score > best_score:
            best_score, best_state, best_epoch = score, copy.deepcopy(net.state_dict()), epoch
        elif cfg.attacker_patience and epoch - best_epoch >= cfg.attacker_patience:
            break
    if best_state is not None:
        net.load_state_dict(best_state)
    net.eval()
    return net


def si_only_baseline(train: AttackData, val: AttackData, test: AttackData, si_case: str,
                     cfg: ExperimentConfig, seed: int = 0) -> AttackReport:
    """Attacker trained and tested with the release channel zeroed, i.e. on SI alone."""
    if str(si_case) == "1":
        raise ValueError("case 1 carries no side information")
    net = train_attacker(train.without_release(), val.without_release(), si_case, cfg, seed)
    return evaluate_attacker(net, test.without_release(), si_case)


# --------------------------------------------------------------------------
# per-point evaluation and assembly

@dataclass
class PointEvaluation:
    ne2: float
    attack: AttackReport


def evaluate_release(result: TrainResult, split: DatasetSplit, seed: int = 0,
                     attacker_cfg: ExperimentConfig | None = None) -> PointEvaluation:
    """Release all partitions, train a fresh attacker on train/validation, score it on test."""
    cfg = result.config
    acfg = attacker_cfg or cfg
    parts = {}
    for i, name in enumerate(("train", "validation", "test")):
        seqs = getattr(split, name)
        z = generate_release_array(result.releaser, seqs, split.stats, cfg, seed + 7919 * (i + 1))
        parts[name] = attack_data(z, seqs, cfg.si_case)
    y_test = np.stack([s.y for s in split.test])
    attacker = train_attacker(parts["train"], parts["validation"], cfg.si_case, acfg, seed)
    return PointEvaluation(ne2(parts["test"].z, y_test), evaluate_attacker(attacker, parts["test"], cfg.si_case))


def raw_attack_data(split: DatasetSplit, si_case: str) -> dict[str, AttackData]:
    """Unreleased data wrapped for the attacker (the ``z = y`` passthrough)."""
    out = {}
    for name in ("train", "validation", "test"):
        seqs = getattr(split, name)
        y, _, _ = stack_sequences(seqs, si_case)
        out[name] = attack_data(y, seqs, si_case)
    return out


def assemble_tradeoff(entries: Sequence[dict], baselines: dict[str, float] | None = None) -> list[TradeoffPoint]:
    """Turn per-run dicts (method, si_case, lam, and ne2/attacker_bacc or status) into points.

    ``baselines`` maps an SI case to its SI-only balanced accuracy; case 1 and
    missing cases get NaN.
    """
    baselines = baselines or {}
    points = []
    for e in entries:
        case = str(e["si_case"])
        status = e.get("status", "ok")
        points.append(TradeoffPoint(
            method=e["method"], si_case=case, lam=float(e["lam"]),
            ne2=float(e.get("ne2", math.nan)) if status == "ok" else math.nan,
            attacker_balanced_accuracy=float(e.get("attacker_bacc", math.nan)) if status == "ok" else math.nan,
            si_only_baseline=float(baselines.get(case, math.nan)),
            status=status,
        ))
    return sorted(points, key=lambda p: (p.method, p.si_case, p.lam))


TRADEOFF_COLUMNS = ("method", "si_case", "lambda", "ne2", "attacker_bacc", "si_only_baseline", "status")


def write_tradeoff_csv(points: Sequence[TradeoffPoint], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADEOFF_COLUMNS)
        for p in points:
            w.writerow([p.method, p.si_case, repr(p.lam), repr(p.ne2), repr(p.attacker_balanced_accuracy),
                        repr(p.si_only_baseline), p.status])
    return path


def read_tradeoff_csv(path: str | Path) -> list[TradeoffPoint]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRADEOFF_COLUMNS:
            raise ValueError(f"{path}: unexpected trade-off columns {reader.fieldnames}")
        return [TradeoffPoint(r["method"], r["si_case"], float(r["lambda"]), float(r["ne2"]),
                              float(r["attacker_bacc"]), float(r["si_only_baseline"]), r["status"])
                for r in reader]


# --------------------------------------------------------------------------
# SI predictability

def si_predictability_probe(x, y, side_days, seed: int = 0, test_fraction: float = 0.3) -> float:
    """How well (X^T, Y^T) predict the day of week: held-out mean per-class recall.

    A multinomial logistic regression on the concatenated standardised daily
    label and load vectors.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    days = np.asarray(side_days, dtype=int)
    if len(np.unique(days)) < 2:
        raise ValueError("need at least two distinct days of week")
    feats = np.hstack([x, y])
    f_tr, f_te, d_tr, d_te = train_test_split(feats, days, test_size=test_fraction,
                                              random_state=seed, stratify=days)
    scaler = StandardScaler().fit(f_tr)
    clf = LogisticRegression(max_iter=2000, C=1.0)
    clf.fit(scaler.transform(f_tr), d_tr)
    return multiclass_balanced_accuracy(d_te, clf.predict(scaler.transform(f_te)))
