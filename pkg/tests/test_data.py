import datetime as dt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from smpriv.data import (DataFormatError, DataQualityWarning, NormStats, RawRecord, SynthParams,
                         denormalize, encode_side_info, load_raw_csv, normalize, read_dataset_csv,
                         resample_hourly, split_dataset, synthesize_dataset, window_days,
                         write_dataset_csv)
from smpriv.types import LoadSequence, SideInfo


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_three_rows_sorted(tmp_path):
    f = _write(tmp_path / "a.csv", ["timestamp,power,occupancy",
                                    "2024-01-01T00:00:02,3.0,1",
                                    "2024-01-01T00:00:00,1.0,0",
                                    "2024-01-01T00:00:01,2.0,1"])
    recs = load_raw_csv(f)
    assert [r.power for r in recs] == [1.0, 2.0, 3.0]
    assert [r.occupancy for r in recs] == [0, 1, 1]


def test_units_header_converts_watts(tmp_path):
    f = _write(tmp_path / "a.csv", ["# units: W", "timestamp,power,occupancy", "2024-01-01T00:00:00,1500,1"])
    assert load_raw_csv(f)[0].power == pytest.approx(1.5)


def test_one_malformed_row_in_hundred(tmp_path):
    t0 = dt.datetime(2024, 1, 1)
    lines = ["timestamp,power,occupancy"]
    for i in range(100):
        power = "abc" if i == 37 else f"{0.1 * i:.3f}"
        lines.append(f"{(t0 + dt.timedelta(seconds=i)).isoformat()},{power},{i % 2}")
    f = _write(tmp_path / "m.csv", lines)

    # independent oracle: count data lines whose power field does not parse
    def parses(s):
        try:
            float(s)
            return True
        except ValueError:
            return False
    data_lines = f.read_text().splitlines()[1:]
    n_bad_oracle = sum(not parses(ln.split(",")[1]) for ln in data_lines)

    with pytest.warns(DataQualityWarning) as rec:
        recs = load_raw_csv(f)
    assert len(recs) == len(data_lines) - n_bad_oracle == 99
    assert rec[0].message.count == n_bad_oracle == 1


def test_empty_file_is_format_error(tmp_path):
    with pytest.raises(DataFormatError):
        load_raw_csv(_write(tmp_path / "e.csv", [""]))
    with pytest.raises(DataFormatError):
        load_raw_csv(_write(tmp_path / "h.csv", ["timestamp,power,occupancy"]))


def test_too_many_malformed_rows(tmp_path):
    lines = ["timestamp,power,occupancy"] + [f"2024-01-01T00:00:{i:02d},x,0" for i in range(10)]
    lines += [f"2024-01-01T00:01:{i:02d},1.0,0" for i in range(10)]
    with pytest.raises(DataFormatError):
        load_raw_csv(_write(tmp_path / "bad.csv", lines))


def test_missing_file():
    with pytest.raises(OSError):
        load_raw_csv("/nonexistent/file.csv")


def _records(start, n, step_s, power, occ):
    return [RawRecord(start + dt.timedelta(seconds=i * step_s),
                      power(i) if callable(power) else power,
                      occ(i) if callable(occ) else occ) for i in range(n)]


def test_resample_constant_hour():
    out = resample_hourly(_records(dt.datetime(2024, 1, 1, 5), 3600, 1, 0.5, 1))
    assert out == [RawRecord(dt.datetime(2024, 1, 1, 5), 0.5, 1)]


def test_resample_mean_of_two():
    recs = [RawRecord(dt.datetime(2024, 1, 1, 5, 0), 1.0, 0), RawRecord(dt.datetime(2024, 1, 1, 5, 30), 3.0, 0)]
    assert resample_hourly(recs)[0].power == 2.0


def test_resample_majority_and_tie():
    recs = _records(dt.datetime(2024, 1, 1, 5), 3600, 1, 1.0, lambda i: 1 if i < 2000 else 0)
    assert resample_hourly(recs)[0].occupancy == 1
    recs = _records(dt.datetime(2024, 1, 1, 5), 3600, 1, 1.0, lambda i: 1 if i < 1600 else 0)
    assert resample_hourly(recs)[0].occupancy == 0
    tie = _records(dt.datetime(2024, 1, 1, 5), 3600, 1, 1.0, lambda i: i % 2)
    assert resample_hourly(tie)[0].occupancy == 1


def test_resample_flags_sparse_hour():
    recs = _records(dt.datetime(2024, 1, 1, 5), 3600, 1, 1.0, 0)
    recs += _records(dt.datetime(2024, 1, 1, 6), 100, 1, 1.0, 0)
    with pytest.warns(DataQualityWarning):
        out = resample_hourly(recs)
    assert [r.timestamp.hour for r in out] == [5]


def _hourly(start, n):
    return [RawRecord(start + dt.timedelta(hours=i), 1.0, i % 2) for i in range(n)]


def test_window_two_days():
    seqs = window_days(_hourly(dt.datetime(2024, 1, 3), 48))
    assert len(seqs) == 2 and all(len(s) == 24 for s in seqs)


def test_window_partial_day_dropped():
    with pytest.warns(DataQualityWarning) as rec:
        seqs = window_days(_hourly(dt.datetime(2024, 1, 3), 40))
    # count oracle: 40 hours starting at midnight = 1 full day + 16 hours
    assert len(seqs) == 40 // 24 == 1
    assert rec[0].message.count == 1


def test_window_side_info_from_calendar():
    seqs = window_days(_hourly(dt.datetime(2024, 1, 3), 24))
    # calendar oracle: 2024-01-01 was a Monday, so the 3rd is the third weekday
    assert (dt.date(2024, 1, 3) - dt.date(2024, 1, 1)).days == 2
    assert seqs[0].side == SideInfo(day_of_week=2, month=0)


def _seqs(n):
    return [LoadSequence(np.full(24, 1.0 + i), np.zeros(24), SideInfo(i % 7, 0), "h",
                         dt.date(2024, 1, 1) + dt.timedelta(days=i)) for i in range(n)]


@pytest.mark.parametrize("n,n_test,n_val,n_train", [(100, 15, 8, 77), (20, 3, 1, 16)])
def test_split_sizes(n, n_test, n_val, n_train):
    sp = split_dataset(_seqs(n), seed=3)
    assert (len(sp.test), len(sp.validation), len(sp.train)) == (n_test, n_val, n_train)
    ids = [s.seq_id for s in sp.train + sp.validation + sp.test]
    assert len(set(ids)) == n


def test_split_deterministic_and_stats_from_train():
    a = split_dataset(_seqs(50), seed=9)
    b = split_dataset(_seqs(50), seed=9)
    assert a.manifest() == b.manifest()
    train_y = np.concatenate([s.y for s in a.train])
    assert a.stats.mean == pytest.approx(train_y.mean())
    assert a.stats.std == pytest.approx(train_y.std())
    assert split_dataset(_seqs(50), seed=10).manifest()["test"] != a.manifest()["test"]


def test_split_too_small():
    with pytest.raises(ValueError):
        split_dataset(_seqs(19), seed=0)


def test_encode_cases():
    wed_march = SideInfo(2, 2)
    assert encode_side_info(wed_march, "1").shape == (0,)
    v2 = encode_side_info(wed_march, "2")
    assert v2.shape == (7,) and v2[2] == 1 and v2.sum() == 1
    assert np.array_equal(encode_side_info(wed_march, "2*"), v2)
    v3 = encode_side_info(wed_march, "3")
    expected = np.zeros(19)
    expected[2] = expected[7 + 2] = 1
    assert np.array_equal(v3, expected)


def test_encode_one_hot_blocks_by_enumeration():
    for d in range(7):
        for m in range(12):
            v = encode_side_info(SideInfo(d, m), "3")
            assert v[:7].sum() == 1 and v[7:].sum() == 1
            assert np.argmax(v[:7]) == d and np.argmax(v[7:]) == m


def test_normalize_arithmetic_and_errors():
    assert np.allclose(normalize([2, 4], NormStats(3, 1)), [-1, 1])
    with pytest.raises(ValueError):
        NormStats.from_data([5.0, 5.0, 5.0])


@given(st.lists(st.floats(0, 1e3), min_size=2, max_size=50))
def test_normalize_round_trip(ys):
    y = np.array(ys)
    if y.std() == 0:
        return
    stats = NormStats.from_data(y)
    assert np.allclose(denormalize(normalize(y, stats), stats), y, atol=1e-9, rtol=0)


def test_synth_deterministic():
    p = SynthParams.default(30, rng_seed=5)
    a, b = synthesize_dataset(p), synthesize_dataset(p)
    assert all(np.array_equal(s.y, t.y) and np.array_equal(s.x, t.x) for s, t in zip(a, b))
    c = synthesize_dataset(SynthParams.default(30, rng_seed=6))
    assert not all(np.array_equal(s.x, t.x) for s, t in zip(a, c))


def test_synth_sequences_valid():
    seqs = synthesize_dataset(SynthParams.default(14))
    assert len(seqs) == 14
    assert [s.side.day_of_week for s in seqs[:7]] == list(range(7))
    for s in seqs:
        assert len(s) == 24 and np.all(s.y >= 0)


def test_synth_no_load_signal():
    p = SynthParams.default(20, occupied_load_mean=0.0, noise_std=1e-6)
    ys = np.concatenate([s.y for s in synthesize_dataset(p)])
    assert np.ptp(ys) < 1e-4


def test_synth_transition_frequencies():
    rng = np.random.default_rng(0)
    p = SynthParams(n_days=10_000, rng_seed=11, p_on=rng.choice([0.1, 0.3, 0.6], (7, 24)),
                    p_off=rng.choice([0.2, 0.5], (7, 24)))
    seqs = synthesize_dataset(p)
    # Monte Carlo oracle: count transitions, pooled over cells sharing a configured probability
    on_num, on_den, off_num, off_den = {}, {}, {}, {}
    prev = None
    for s in seqs:
        d = s.side.day_of_week
        for h, x in enumerate(s.x):
            if prev is not None:
                if prev == 0:
                    k = round(float(p.p_on[d, h]), 6)
                    on_den[k] = on_den.get(k, 0) + 1
                    on_num[k] = on_num.get(k, 0) + int(x == 1)
                else:
                    k = round(float(p.p_off[d, h]), 6)
                    off_den[k] = off_den.get(k, 0) + 1
                    off_num[k] = off_num.get(k, 0) + int(x == 0)
            prev = x
    assert len(on_den) == 3 and len(off_den) == 2
    for num, den in ((on_num, on_den), (off_num, off_den)):
        for k, n in den.items():
            assert abs(num[k] / n - k) <= 0.02, (k, num[k] / n, n)


def test_synth_rejects_bad_params():
    with pytest.raises(ValueError):
        SynthParams(noise_std=0)
    with pytest.raises(ValueError):
        SynthParams(p_on=np.full((7, 24), 1.5))


def test_dataset_csv_round_trip(tmp_path):
    seqs = synthesize_dataset(SynthParams.default(5))
    write_dataset_csv(seqs, tmp_path / "d.csv")
    back = read_dataset_csv(tmp_path / "d.csv")
    for a, b in zip(seqs, back):
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
        assert a.side == b.side and a.date == b.date and a.house_id == b.house_id
