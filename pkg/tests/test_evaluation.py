import math

import numpy as np
import pytest

from oracles import bayes_balanced_accuracy, periodic_marginals
from smpriv.data import SynthParams, split_dataset, synthesize_dataset
from smpriv.evaluation import (AttackData, AttackReport, assemble_tradeoff, evaluate_attacker,
                               evaluate_release, generate_release, generate_release_array, raw_attack_data,
                               read_tradeoff_csv, si_only_baseline, si_predictability_probe, train_attacker,
                               write_tradeoff_csv)
from smpriv.nets import AttackerNet, init_networks
from smpriv.training import run_training
from smpriv.types import ConfusionCounts, ExperimentConfig, ReleasedSequence

SMALL_ATTACKER = dict(attacker_layers=1, attacker_hidden=16, attacker_epochs=60, attacker_patience=15)


@pytest.fixture(scope="module")
def split():
    return split_dataset(synthesize_dataset(SynthParams.default(200, rng_seed=3)), seed=0)


def test_generate_release_shapes_and_determinism(split):
    cfg = ExperimentConfig(releaser_layers=1, releaser_hidden=8)
    rel, _ = init_networks(cfg)
    a = generate_release_array(rel, split.test, split.stats, cfg, seed=4)
    b = generate_release_array(rel, split.test, split.stats, cfg, seed=4)
    c = generate_release_array(rel, split.test, split.stats, cfg, seed=5)
    assert a.shape == (len(split.test), 24)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all(a >= 0)
    rs = generate_release(rel, split.test[:2], split.stats, cfg, seed=4)
    assert all(isinstance(r, ReleasedSequence) for r in rs)
    assert np.array_equal(rs[0].z, a[0])


def test_attacker_on_raw_data_is_strong(split):
    cfg = ExperimentConfig(**SMALL_ATTACKER)
    raw = raw_attack_data(split, "1")
    net = train_attacker(raw["train"], raw["validation"], "1", cfg, seed=0)
    assert evaluate_attacker(net, raw["test"]).balanced_accuracy > 0.9


def test_attacker_on_shuffled_labels_is_chance(split):
    # labels permuted across sequences: the load says nothing about them any more
    cfg = ExperimentConfig(**SMALL_ATTACKER)
    raw = raw_attack_data(split, "1")
    rng = np.random.default_rng(0)

    def shuffled(d):
        return AttackData(d.z, d.x[rng.permutation(len(d))], d.s)
    net = train_attacker(shuffled(raw["train"]), shuffled(raw["validation"]), "1", cfg, seed=0)
    assert abs(evaluate_attacker(net, shuffled(raw["test"])).balanced_accuracy - 0.5) < 0.05


def test_attacker_single_class_rejected(split):
    raw = raw_attack_data(split, "1")
    d = AttackData(raw["train"].z, np.zeros_like(raw["train"].x), raw["train"].s)
    with pytest.raises(ValueError):
        train_attacker(d, raw["validation"], "1", ExperimentConfig(**SMALL_ATTACKER))


def test_evaluate_attacker_hand_confusion():
    # a fixed rule on hand-built data: class 0 gets 8 right of 10, class 1 gets 6 right of 10
    x = np.array([[0] * 10 + [1] * 10], dtype=float)
    pred = np.array([[0] * 8 + [1] * 2 + [0] * 4 + [1] * 6], dtype=float)
    data = AttackData(pred, x, np.zeros((1, 0)))

    class Echo(AttackerNet):  # the "release" already is the prediction
        def forward(self, z, s_vec=None):
            return z.clamp(0, 1)
    echo = Echo(0, hidden=2, layers=1)
    rep = evaluate_attacker(echo, data)
    assert rep.confusion == ConfusionCounts(8, 2, 4, 6)
    assert rep.balanced_accuracy == pytest.approx(0.7, rel=1e-12)
    assert rep.n_examples == 20


def test_attack_report_json_round_trip():
    rep = AttackReport(0.7, ConfusionCounts(8, 2, 4, 6), "3", True, 20)
    back = AttackReport.from_json(rep.to_json())
    assert back == rep


def test_si_only_baseline_near_chance_without_informative_si():
    sp = split_dataset(synthesize_dataset(SynthParams.default(700, rng_seed=8, si_informative=False)), seed=0)
    raw = raw_attack_data(sp, "2")
    rep = si_only_baseline(raw["train"], raw["validation"], raw["test"], "2",
                           ExperimentConfig(**SMALL_ATTACKER), seed=0)
    assert abs(rep.balanced_accuracy - 0.5) <= 0.03


def test_si_only_baseline_reaches_bayes_rate():
    params = SynthParams.default(1000, rng_seed=9)
    bayes = bayes_balanced_accuracy(periodic_marginals(params.p_on, params.p_off))
    assert bayes >= 0.57
    sp = split_dataset(synthesize_dataset(params), seed=0)
    raw = raw_attack_data(sp, "2")
    rep = si_only_baseline(raw["train"], raw["validation"], raw["test"], "2",
                           ExperimentConfig(**SMALL_ATTACKER), seed=0)
    assert abs(rep.balanced_accuracy - bayes) <= 0.03


def test_si_only_baseline_rejects_case_one(split):
    raw = raw_attack_data(split, "1")
    with pytest.raises(ValueError):
        si_only_baseline(raw["train"], raw["validation"], raw["test"], "1", ExperimentConfig())


def test_without_release_zeroes_load(split):
    raw = raw_attack_data(split, "3")
    blind = raw["test"].without_release()
    assert np.all(blind.z == 0)
    assert np.array_equal(blind.s, raw["test"].s) and np.array_equal(blind.x, raw["test"].x)


def test_evaluate_release_end_to_end(split):
    cfg = ExperimentConfig(releaser_layers=1, releaser_hidden=8, adversary_layers=1, adversary_hidden=8,
                           epochs=2, patience=0, **SMALL_ATTACKER, si_case="2")
    res = run_training(cfg, split)
    ev = evaluate_release(res, split, seed=1)
    assert ev.ne2 >= 0 and 0 <= ev.attack.balanced_accuracy <= 1
    assert ev.attack.uses_si and ev.attack.si_case == "2"
    assert ev.attack.n_examples == 24 * len(split.test)


def test_assemble_tradeoff_and_csv(tmp_path):
    entries = [{"method": "DI", "si_case": "3", "lam": 2.0, "ne2": 0.3, "attacker_bacc": 0.6},
               {"method": "DI", "si_case": "1", "lam": 2.0, "ne2": 0.3, "attacker_bacc": 0.55},
               {"method": "CAL", "si_case": "1", "lam": 0.5, "status": "failed"}]
    pts = assemble_tradeoff(entries, {"3": 0.58})
    assert [(p.method, p.si_case) for p in pts] == [("CAL", "1"), ("DI", "1"), ("DI", "3")]
    assert pts[0].status == "failed" and math.isnan(pts[0].ne2)
    assert math.isnan(pts[1].si_only_baseline) and pts[2].si_only_baseline == 0.58
    path = write_tradeoff_csv(pts, tmp_path / "t.csv")
    assert path.read_text().splitlines()[0] == "method,si_case,lambda,ne2,attacker_bacc,si_only_baseline,status"
    back = read_tradeoff_csv(path)
    assert [(p.method, p.lam, p.status) for p in back] == [(p.method, p.lam, p.status) for p in pts]
    assert back[2].attacker_balanced_accuracy == 0.6


def test_probe_chance_without_day_signal():
    seqs = synthesize_dataset(SynthParams.default(1400, rng_seed=2, si_informative=False))
    x = np.stack([s.x for s in seqs])
    y = np.stack([s.y for s in seqs])
    days = [s.side.day_of_week for s in seqs]
    assert abs(si_predictability_probe(x, y, days) - 1 / 7) < 0.05


def test_probe_finds_day_load_offset():
    offset = np.linspace(0, 0.6, 7)
    seqs = synthesize_dataset(SynthParams.default(700, rng_seed=2, si_informative=False, day_load_offset=offset))
    x = np.stack([s.x for s in seqs])
    y = np.stack([s.y for s in seqs])
    days = [s.side.day_of_week for s in seqs]
    assert si_predictability_probe(x, y, days) >= 2 / 7
