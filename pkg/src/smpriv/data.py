"""Smart-meter data ingestion, side-information encoding, splits and a synthetic generator.

Raw files are CSV with header ``timestamp,power,occupancy`` and an optional
leading comment ``# units: W`` (or ``kW``) declaring the power unit.  All
power values are converted to kW on load.
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .types import LoadSequence, SideInfo

logger = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.05
MIN_HOUR_COVERAGE = 0.10


class DataFormatError(ValueError):
    pass


class DataQualityWarning(UserWarning):
    """Rows or windows were dropped; ``count`` says how many."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


@dataclass(frozen=True)
class RawRecord:
    timestamp: dt.datetime
    power: float
    occupancy: int


# --------------------------------------------------------------------------
# ingestion

def _parse_units(line: str) -> str | None:
    body = line.lstrip("#").strip()
    if ":" not in body:
        return None
    key, value = (s.strip() for s in body.split(":", 1))
    if key.lower() != "units":
        return None
    if value.lower() == "w":
        return "W"
    if value.lower() == "kw":
        return "kW"
    raise DataFormatError(f"unsupported power unit {value!r}")


def load_raw_csv(path: str | Path) -> list[RawRecord]:
    """Parse one raw meter file into records ordered by timestamp.

    Malformed rows are skipped and reported through a :class:`DataQualityWarning`;
    more than 5% malformed rows, or no usable rows at all, raise
    :class:`DataFormatError`.  Duplicate timestamps count as malformed.
    """
    path = Path(path)
    units = "kW"
    rows: list[RawRecord] = []
    n_bad = 0
    n_rows = 0
    with path.open(newline="") as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            u = _parse_units(ln)
            if u is not None:
                units = u
        elif ln.strip():
            body.append(ln)
    if not body:
        raise DataFormatError(f"{path}: empty file")
    reader = csv.reader(body)
    header = [h.strip().lower() for h in next(reader)]
    if header != ["timestamp", "power", "occupancy"]:
        raise DataFormatError(f"{path}: expected header 'timestamp,power,occupancy', got {header}")
    scale = 1e-3 if units == "W" else 1.0
    for row in reader:
        n_rows += 1
        try:
            ts = dt.datetime.fromisoformat(row[0].strip())
            power = float(row[1])
            occ = int(row[2])
            if len(row) != 3 or not math.isfinite(power) or power < 0 or occ not in (0, 1):
                raise ValueError
        except (ValueError, IndexError):
            n_bad += 1
            continue
        rows.append(RawRecord(ts.replace(tzinfo=None), power * scale, occ))
    if n_rows == 0 or not rows:
        raise DataFormatError(f"{path}: no data rows")
    rows.sort(key=lambda r: r.timestamp)
    deduped = [rows[0]]
    for r in rows[1:]:
        if r.timestamp == deduped[-1].timestamp:
            n_bad += 1
        else:
            deduped.append(r)
    if n_bad > MAX_MALFORMED_FRACTION * n_rows:
        raise DataFormatError(f"{path}: {n_bad} of {n_rows} rows malformed")
    if n_bad:
        logger.warning("%s: skipped %d malformed rows", path, n_bad)
        warnings.warn(DataQualityWarning(f"{path}: skipped {n_bad} malformed rows", n_bad), stacklevel=2)
    return deduped


def resample_hourly(records: Sequence[RawRecord]) -> list[RawRecord]:
    """Average records into wall-clock hours.

    Power is the arithmetic mean of in-hour samples; occupancy is a majority
    vote with ties resolved as occupied.  An hour holding fewer than 10% of
    the expected samples (expected count inferred from the median sampling
    interval) is a gap and is omitted, which makes its day incomplete.
    """
    if not records:
        return []
    times = np.array([r.timestamp.timestamp() for r in records])
    if np.any(np.diff(times) <= 0):
        raise ValueError("records must be strictly increasing in time")
    step = float(np.median(np.diff(times))) if len(times) > 1 else 3600.0
    expected = max(1.0, 3600.0 / step)

    buckets: dict[dt.datetime, list[RawRecord]] = defaultdict(list)
    for r in records:
        buckets[r.timestamp.replace(minute=0, second=0, microsecond=0)].append(r)
    out = []
    n_gaps = 0
    for hour in sorted(buckets):
        rs = buckets[hour]
        if len(rs) < MIN_HOUR_COVERAGE * expected:
            n_gaps += 1
            continue
        power = sum(r.power for r in rs) / len(rs)
        occupied = sum(r.occupancy for r in rs)
        occ = 1 if 2 * occupied >= len(rs) else 0
        out.append(RawRecord(hour, power, occ))
    if n_gaps:
        warnings.warn(DataQualityWarning(f"{n_gaps} under-sampled hours flagged as gaps", n_gaps), stacklevel=2)
    return out


def window_days(hourly: Sequence[RawRecord], T: int = 24, house_id: str = "") -> list[LoadSequence]:
    """Cut hourly records into midnight-aligned windows of ``T`` hours.

    ``24 % T`` must be zero.  Windows with any missing hour are dropped and
    the drop count is reported through :class:`DataQualityWarning`.
    """
    if T < 1 or 24 % T:
        raise ValueError("T must divide 24")
    by_day: dict[dt.date, dict[int, RawRecord]] = defaultdict(dict)
    for r in hourly:
        by_day[r.timestamp.date()][r.timestamp.hour] = r
    seqs = []
    dropped = 0
    for day in sorted(by_day):
        hours = by_day[day]
        for start in range(0, 24, T):
            window = [hours.get(h) for h in range(start, start + T)]
            if any(w is None for w in window):
                if any(w is not None for w in window):
                    dropped += 1
                continue
            seqs.append(LoadSequence(
                y=[w.power for w in window],
                x=[w.occupancy for w in window],
                side=SideInfo.from_date(day),
                house_id=house_id if T == 24 else f"{house_id}@{start:02d}",
                date=day,
            ))
    if dropped:
        warnings.warn(DataQualityWarning(f"dropped {dropped} incomplete windows", dropped), stacklevel=2)
    return seqs


# --------------------------------------------------------------------------
# splits and normalisation

@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("normalisation std must be > 0 (constant data?)")

    @classmethod
    def from_data(cls, y) -> "NormStats":
        y = np.asarray(y, dtype=np.float64)
        return cls(float(y.mean()), float(y.std()))


def normalize(y, stats: NormStats) -> np.ndarray:
    return (np.asarray(y, dtype=np.float64) - stats.mean) / stats.std


def denormalize(z, stats: NormStats) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * stats.std + stats.mean


@dataclass(frozen=True)
class DatasetSplit:
    train: list[LoadSequence]
    validation: list[LoadSequence]
    test: list[LoadSequence]
    stats: NormStats
    seed: int = 0

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "stats": {"mean": self.stats.mean, "std": self.stats.std},
            "train": [s.seq_id for s in self.train],
            "validation": [s.seq_id for s in self.validation],
            "test": [s.seq_id for s in self.test],
        }


def split_dataset(seqs: Sequence[LoadSequence], seed: int) -> DatasetSplit:
    """Shuffle by ``seed`` and cut test (15%) then validation (10% of the rest), both floored."""
    n = len(seqs)
    if n < 20:
        raise ValueError(f"need at least 20 sequences to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [seqs[i] for i in order]
    n_test = int(math.floor(0.15 * n))
    n_val = int(math.floor(0.10 * (n - n_test)))
    test = shuffled[:n_test]
    val = shuffled[n_test:n_test + n_val]
    train = shuffled[n_test + n_val:]
    stats = NormStats.from_data(np.concatenate([s.y for s in train]))
    return DatasetSplit(train, val, test, stats, seed)


def split_from_manifest(seqs: Sequence[LoadSequence], manifest: dict) -> DatasetSplit:
    by_id = {s.seq_id: s for s in seqs}
    try:
        parts = [[by_id[i] for i in manifest[k]] for k in ("train", "validation", "test")]
    except KeyError as exc:
        raise DataFormatError(f"split manifest references unknown sequence {exc}") from None
    st = manifest["stats"]
    return DatasetSplit(*parts, NormStats(st["mean"], st["std"]), manifest.get("seed", 0))


# --------------------------------------------------------------------------
# side information

def side_info_dim(si_case: str) -> int:
    return {"1": 0, "2": 7, "2*": 7, "3": 19}[str(si_case)]


def encode_side_info(side: SideInfo, si_case: str) -> np.ndarray:
    """One-hot day of week (cases 2, 2*), plus one-hot month (case 3); empty for case 1."""
    si_case = str(si_case)
    vec = np.zeros(side_info_dim(si_case))
    if si_case == "1":
        return vec
    vec[side.day_of_week] = 1.0
    if si_case == "3":
        vec[7 + side.month] = 1.0
    return vec


def stack_sequences(seqs: Sequence[LoadSequence], si_case: str):
    """Return ``(y, x, s)`` arrays of shapes (N, T), (N, T), (N, dim)."""
    if not seqs:
        dim = side_info_dim(si_case)
        return np.zeros((0, 0)), np.zeros((0, 0), dtype=np.int8), np.zeros((0, dim))
    y = np.stack([s.y for s in seqs])
    x = np.stack([s.x for s in seqs])
    s = np.stack([encode_side_info(q.side, si_case) for q in seqs])
    return y, x, s


# --------------------------------------------------------------------------
# synthetic generator

@dataclass(frozen=True, eq=False)
class SynthParams:
    """Parameters of the synthetic occupancy/load generator.

    ``p_on[d, h]`` is P(occupied at hour h | vacant the hour before) on day of
    week d, ``p_off[d, h]`` is P(vacant at h | occupied the hour before).
    Power is ``base_load + day_load_offset[d] + x * occupied_load_mean`` plus
    Gaussian noise, clipped at zero.
    """

    n_days: int = 400
    p_on: np.ndarray = field(default_factory=lambda: np.full((7, 24), 0.2))
    p_off: np.ndarray = field(default_factory=lambda: np.full((7, 24), 0.2))
    base_load: float = 0.3
    occupied_load_mean: float = 1.0
    noise_std: float = 0.2
    rng_seed: int = 0
    day_load_offset: np.ndarray = field(default_factory=lambda: np.zeros(7))
    start_date: dt.date = dt.date(2021, 1, 4)
    house_id: str = "synthetic"

    def __post_init__(self):
        p_on = np.array(self.p_on, dtype=np.float64)
        p_off = np.array(self.p_off, dtype=np.float64)
        off = np.array(self.day_load_offset, dtype=np.float64)
        if p_on.shape != (7, 24) or p_off.shape != (7, 24):
            raise ValueError("transition tables must have shape (7, 24)")
        if off.shape != (7,):
            raise ValueError("day_load_offset must have 7 entries")
        for name, p in (("p_on", p_on), ("p_off", p_off)):
            if np.any(p < 0) or np.any(p > 1):
                raise ValueError(f"{name} probabilities must lie in [0, 1]")
        if not self.noise_std > 0:
            raise ValueError("noise_std must be > 0")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        for name, arr in (("p_on", p_on), ("p_off", p_off), ("day_load_offset", off)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_targets(cls, target, persistence: float = 0.5, **kwargs) -> "SynthParams":
        """Build transition tables whose one-step update is
        ``P(x_t = 1 | x_{t-1}) = persistence * x_{t-1} + (1 - persistence) * target``.
        """
        target = np.broadcast_to(np.asarray(target, dtype=np.float64), (7, 24))
        if not 0 <= persistence < 1:
            raise ValueError("persistence must lie in [0, 1)")
        return cls(p_on=(1 - persistence) * target,
                    p_off=(1 - persistence) * (1 - target), **kwargs)

    @classmethod
    def default(cls, n_days: int = 400, rng_seed: int = 0, *, si_informative: bool = True,
                day_effect: float = 0.3, persistence: float = 0.5, **kwargs) -> "SynthParams":
        """Occupancy whose level depends on the day of week but averages to 0.5 at every hour.

        Mon/Wed/Fri lean occupied, Tue/Thu/Sat lean vacant, Sunday is neutral;
        the lean is strongest at night.  With ``si_informative=False`` the
        target is 0.5 everywhere.
        """
        if si_informative:
            sign = np.array([1, -1, 1, -1, 1, -1, 0], dtype=np.float64)
            hours = np.arange(24)
            shape = 0.75 + 0.25 * np.cos(2 * np.pi * (hours - 3) / 24)
            target = 0.5 + day_effect * sign[:, None] * shape[None, :]
        else:
            target = np.full((7, 24), 0.5)
        return cls.from_targets(target, persistence, n_days=n_days, rng_seed=rng_seed, **kwargs)


def synthesize_dataset(params: SynthParams) -> list[LoadSequence]:
    """Draw ``n_days`` consecutive days from the generator, deterministic in ``rng_seed``.

    The occupancy chain runs continuously across midnight.
    """
    rng = np.random.default_rng(params.rng_seed)
    seqs = []
    d0 = params.start_date.weekday()
    p1 = params.p_on[d0, 0] / max(params.p_on[d0, 0] + params.p_off[d0, 0], 1e-12)
    state = int(rng.random() < p1)
    for i in range(params.n_days):
        date = params.start_date + dt.timedelta(days=i)
        d = date.weekday()
        draws = rng.random(24)
        x = np.empty(24, dtype=np.int8)
        for h in range(24):
            if state:
                state = 0 if draws[h] < params.p_off[d, h] else 1
            else:
                state = 1 if draws[h] < params.p_on[d, h] else 0
            x[h] = state
        y = (params.base_load + params.day_load_offset[d]
             + params.occupied_load_mean * x + params.noise_std * rng.standard_normal(24))
        seqs.append(LoadSequence(np.clip(y, 0.0, None), x, SideInfo.from_date(date),
                                 params.house_id, date))
    return seqs


# --------------------------------------------------------------------------
# serialisation

DATASET_COLUMNS = ("seq_id", "house_id", "date", "t", "y", "x", "day_of_week", "month")


def write_dataset_csv(seqs: Iterable[LoadSequence], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for s in seqs:
            date = s.date.isoformat() if s.date else ""
            for t, (y, x) in enumerate(zip(s.y, s.x)):
                w.writerow([s.seq_id, s.house_id, date, t, repr(float(y)), int(x),
                            s.side.day_of_week, s.side.month])


def read_dataset_csv(path: str | Path) -> list[LoadSequence]:
    groups: dict[str, list[dict]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DATASET_COLUMNS:
            raise DataFormatError(f"{path}: unexpected columns {reader.fieldnames}")
        for row in reader:
            groups.setdefault(row["seq_id"], []).append(row)
    seqs = []
    for rows in groups.values():
        rows.sort(key=lambda r: int(r["t"]))
        first = rows[0]
        seqs.append(LoadSequence(
            y=[float(r["y"]) for r in rows],
            x=[int(r["x"]) for r in rows],
            side=SideInfo(int(first["day_of_week"]), int(first["month"])),
            house_id=first["house_id"],
            date=dt.date.fromisoformat(first["date"]) if first["date"] else None,
        ))
    return seqs


def write_split_manifest(split: DatasetSplit, path: str | Path) -> None:
    Path(path).write_text(json.dumps(split.manifest(), indent=1) + "\n")


def read_split_manifest(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
