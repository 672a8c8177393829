"""Causal recurrent networks: releaser, adversary and evaluation attacker.

All three are stacks of unidirectional LSTM layers followed by a per-step
linear head, so the output at step t only depends on inputs at steps <= t.
Tensors are laid out batch-first: ``(batch, T, features)``.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import torch
from torch import nn

from .data import side_info_dim
from .types import ExperimentConfig


class ShapeError(ValueError):
    pass


class _RecurrentNet(nn.Module):
    kind = "base"

    def __init__(self, input_dim: int, hidden: int, layers: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        self.layers = layers
        self.lstm = nn.LSTM(input_dim, hidden, num_layers=layers, batch_first=True)
        self.head = nn.Linear(hidden, 1)

    @property
    def descriptor(self) -> dict:
        return {"kind": self.kind, "input_dim": self.input_dim,
                "hidden": self.hidden, "layers": self.layers}

    def zero_head(self) -> None:
        with torch.no_grad():
            self.head.weight.zero_()
            self.head.bias.zero_()

    def _run(self, w: torch.Tensor) -> torch.Tensor:
        if w.ndim != 3 or w.shape[-1] != self.input_dim:
            raise ShapeError(f"{self.kind}: expected (B, T, {self.input_dim}) input, got {tuple(w.shape)}")
        h, _ = self.lstm(w)
        return self.head(h).squeeze(-1)


def _with_side(parts: list[torch.Tensor], s_vec: torch.Tensor | None) -> torch.Tensor:
    """Concatenate per-step channels ``(B, T)`` with static SI ``(B, dim)`` repeated at every step."""
    B, T = parts[0].shape
    cols = [p.unsqueeze(-1) if p.ndim == 2 else p for p in parts]
    for c in cols:
        if c.shape[:2] != (B, T):
            raise ShapeError(f"inconsistent shapes: {[tuple(p.shape) for p in parts]}")
    if s_vec is not None and s_vec.shape[-1] > 0:
        if s_vec.shape[0] != B:
            raise ShapeError("side-information batch size mismatch")
        cols.append(s_vec.unsqueeze(1).expand(B, T, s_vec.shape[-1]))
    return torch.cat(cols, dim=-1)


class ReleaserNet(_RecurrentNet):
    """Maps per-step ``(x_t, y_t, u_t[, s])`` to a released value ``z_t`` (normalised units)."""

    kind = "releaser"

    def __init__(self, noise_dim: int = 8, side_dim: int = 0, hidden: int = 64, layers: int = 4):
        super().__init__(2 + noise_dim + side_dim, hidden, layers)
        self.noise_dim = noise_dim
        self.side_dim = side_dim

    def forward(self, x, y, u, s_vec=None):
        if u.ndim != 3 or u.shape[-1] != self.noise_dim:
            raise ShapeError(f"seed noise must be (B, T, {self.noise_dim}), got {tuple(u.shape)}")
        if self.side_dim == 0:
            s_vec = None
        return self._run(_with_side([x.to(y.dtype), y, u], s_vec))


class AdversaryNet(_RecurrentNet):
    """Per-step estimate of P(X_t = 1) from the release, SI and optionally true past labels."""

    kind = "adversary"

    def __init__(self, side_dim: int = 0, hidden: int = 32, layers: int = 2, label_feedback: bool = False):
        super().__init__(1 + int(label_feedback) + side_dim, hidden, layers)
        self.side_dim = side_dim
        self.label_feedback = label_feedback

    @property
    def descriptor(self) -> dict:
        return {**super().descriptor, "label_feedback": self.label_feedback}

    def logits(self, z, x_past=None, s_vec=None):
        parts = [z]
        if self.label_feedback:
            if x_past is None:
                raise ShapeError("adversary with label feedback needs x_past")
            parts.append(x_past.to(z.dtype))
        return self._run(_with_side(parts, s_vec if self.side_dim else None))

    def forward(self, z, x_past=None, s_vec=None):
        return torch.sigmoid(self.logits(z, x_past, s_vec))


class AttackerNet(_RecurrentNet):
    """Evaluation-time classifier; sees only the release and side information, never X."""

    kind = "attacker"

    def __init__(self, side_dim: int = 0, hidden: int = 32, layers: int = 3):
        super().__init__(1 + side_dim, hidden, layers)
        self.side_dim = side_dim
        self.register_buffer("z_mean", torch.zeros(()))
        self.register_buffer("z_std", torch.ones(()))

    def logits(self, z, s_vec=None):
        z = (z - self.z_mean) / self.z_std
        return self._run(_with_side([z], s_vec if self.side_dim else None))

    def forward(self, z, s_vec=None):
        return torch.sigmoid(self.logits(z, s_vec))


def shift_labels(x: torch.Tensor) -> torch.Tensor:
    """Past-label channel: ``x_past[t] = x[t-1]`` with the constant 0 at t=0."""
    return torch.cat([torch.zeros_like(x[:, :1]), x[:, :-1]], dim=1)


def releaser_forward(net: ReleaserNet, x, y, u, s_vec=None) -> torch.Tensor:
    return net(x, y, u, s_vec)


def adversary_forward(net: AdversaryNet, z, x_past=None, s_vec=None) -> torch.Tensor:
    return net(z, x_past, s_vec)


def attacker_forward(net: AttackerNet, z, s_vec=None) -> torch.Tensor:
    return net(z, s_vec)


def init_networks(cfg: ExperimentConfig, dtype=torch.float32) -> tuple[ReleaserNet, AdversaryNet]:
    """Build the releaser/adversary pair for ``cfg``; weights depend only on ``cfg.rng_seed``."""
    s_dim = side_info_dim(cfg.si_case)
    gen_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(cfg.rng_seed)
        releaser = ReleaserNet(cfg.noise_dim, s_dim if cfg.si_case == "2*" else 0,
                               cfg.releaser_hidden, cfg.releaser_layers)
        adversary = AdversaryNet(s_dim, cfg.adversary_hidden, cfg.n_adversary_layers,
                                 label_feedback=cfg.adversary_feedback == "labels")
    finally:
        torch.random.set_rng_state(gen_state)
    return releaser.to(dtype), adversary.to(dtype)


def make_attacker(si_case: str, cfg: ExperimentConfig, seed: int, dtype=torch.float32) -> AttackerNet:
    gen_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(seed)
        net = AttackerNet(side_info_dim(si_case), cfg.attacker_hidden, cfg.attacker_layers)
    finally:
        torch.random.set_rng_state(gen_state)
    return net.to(dtype)


# --------------------------------------------------------------------------
# checkpoints

CHECKPOINT_FORMAT = "smpriv-checkpoint-1"


class CheckpointError(ValueError):
    pass


def _net_from_descriptor(desc: dict) -> _RecurrentNet:
    kind = desc["kind"]
    if kind == "releaser":
        return ReleaserNet(desc["noise_dim"], desc["side_dim"], desc["hidden"], desc["layers"])
    if kind == "adversary":
        return AdversaryNet(desc["side_dim"], desc["hidden"], desc["layers"], desc["label_feedback"])
    if kind == "attacker":
        return AttackerNet(desc["side_dim"], desc["hidden"], desc["layers"])
    raise CheckpointError(f"unknown network kind {kind!r}")


def _full_descriptor(net: _RecurrentNet) -> dict:
    desc = dict(net.descriptor)
    for name in ("noise_dim", "side_dim"):
        if hasattr(net, name):
            desc[name] = getattr(net, name)
    return desc


def save_checkpoint(path: str | Path, nets: dict[str, _RecurrentNet], cfg: ExperimentConfig,
                    rng_state: torch.Tensor | None = None, extra: dict | None = None) -> None:
    """Write networks, their architecture descriptors, config and RNG state to ``path``."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": cfg.to_json(),
        "config_hash": cfg.digest(),
        "descriptors": {k: _full_descriptor(n) for k, n in nets.items()},
        "params": {k: {p: t.detach().clone() for p, t in n.state_dict().items()} for k, n in nets.items()},
        "rng_state": rng_state if rng_state is not None else torch.zeros(0, dtype=torch.uint8),
        "extra": extra or {},
    }
    torch.save(payload, Path(path))


def load_checkpoint(path: str | Path, expect: dict[str, dict] | None = None) -> dict:
    """Load a checkpoint; ``expect`` maps net names to descriptors that must match exactly."""
    payload = torch.load(Path(path), weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    cfg = ExperimentConfig.from_json(payload["config"])
    if cfg.digest() != payload["config_hash"]:
        raise CheckpointError(f"{path}: config hash mismatch")
    for name, desc in (expect or {}).items():
        got = payload["descriptors"].get(name)
        if got != desc:
            raise CheckpointError(f"{path}: descriptor mismatch for {name!r}: {got} != {desc}")
    nets = {}
    for name, desc in payload["descriptors"].items():
        net = _net_from_descriptor(desc)
        params = payload["params"][name]
        dtype = next(iter(params.values())).dtype
        net = net.to(dtype)
        net.load_state_dict(params)
        nets[name] = net
    return {"config": cfg, "nets": nets, "rng_state": payload["rng_state"], "extra": payload["extra"]}


def parameter_digest(net: nn.Module) -> str:
    h = hashlib.sha256()
    for name, t in sorted(net.state_dict().items()):
        h.update(name.encode())
        h.update(t.detach().cpu().numpy().tobytes())
    return h.hexdigest()
