"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines
are printed even when output capture is on.
"""

import statistics
import time

import numpy as np
import pytest

from fedgroup import lsh
from fedgroup.cli import main as cli_main
from fedgroup.clustering import purity
from fedgroup.data import DeviceDataset
from fedgroup.nn_core import (Batch, ModelSpec, ModelWeights, forward_loss, gradient,
                              init_weights, local_train)
from fedgroup.orchestrator import (DeviceUpdate, LshConfig, aggregate, group_devices, preprocess,
                                   run_experiment, setup)

from fixtures import GROUP_SWEEP, ORDERING, PURITY, config
from oracles import central_differences, collision_probability, labels_well_separated, relative_errors

SEEDS5 = range(5)
SEEDS10 = range(10)


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, f"criterion {number} ({title}) failed: {detail}"
    return report


def final_accuracies(base, **kw):
    return [run_experiment(config(base, seed=s, **kw))[-1].test_accuracy for s in SEEDS5]


def pct(x):
    return f"{100 * x:.2f}%"


def test_criterion_01_gradient_oracle(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        depth = int(rng.integers(0, 3))
        dims = (int(rng.integers(1, 9)), *(int(rng.integers(1, 9)) for _ in range(depth)),
                int(rng.integers(2, 5)))
        spec = ModelSpec(dims)
        w = ModelWeights(rng.normal(scale=0.7, size=spec.param_count), spec)
        n = int(rng.integers(1, 17))
        b = Batch(rng.normal(size=(n, dims[0])), rng.integers(0, dims[-1], size=n))
        fd = central_differences(lambda p: forward_loss(ModelWeights(p, spec), b)[0],
                                 w.params.copy(), eps=1e-5)
        worst = max(worst, relative_errors(gradient(w, b), fd).max())
    elapsed = time.perf_counter() - t0
    verdict(1, "gradient oracle", worst <= 1e-4 and elapsed < 30,
            f"max relative error {worst:.2e} (limit 1e-4) over 100 instances, {elapsed:.1f}s (limit 30s)")


def test_criterion_02_aggregation_oracle(verdict):
    t0 = time.perf_counter()
    spec = ModelSpec((4, 8, 3))
    rng = np.random.default_rng(7)
    w = init_weights(spec, 7)
    lr, n = 0.1, 12
    xs, ys, updates = [], [], []
    for dev in range(3):
        x, y = rng.normal(size=(n, 4)), rng.integers(0, 3, size=n)
        xs.append(x)
        ys.append(y)
        data = DeviceDataset(dev, x, y, np.arange(n))
        delta = local_train(w, data, epochs=1, lr=lr, batch_size=n, rng=np.random.default_rng(dev))
        updates.append(DeviceUpdate(dev, delta, n))
    federated = aggregate(w, updates).params
    central = w.params - lr * gradient(w, Batch(np.concatenate(xs), np.concatenate(ys)))
    err = float(np.abs(federated - central).max())
    elapsed = time.perf_counter() - t0
    verdict(2, "aggregation oracle", err <= 1e-8 and elapsed < 5,
            f"max abs difference {err:.2e} (limit 1e-8), {elapsed:.2f}s (limit 5s)")


def test_criterion_03_lsh_formula(verdict):
    def one(a, b, r):
        return lsh.LshFamily(np.array([a], dtype=float), np.array([b]), r)

    examples = [
        (one([1.0, 0.0], 0.0, 3.0), [4.5, 7.0], [1]),
        (one([1.0, 1.0], 2.9, 3.0), [-2.0, -2.0], [-1]),  # floor(-0.3667) = -1
        (one([0.5, -2.0], 1.0, 1.0), [0.0, 0.0], [1]),
        (lsh.sample_family(6, 3, 3.0, 0), [0.0, 0.0, 0.0], [0] * 6),
    ]
    exact = all(lsh.hash(fam, np.array(v)).tolist() == want for fam, v, want in examples)
    rng = np.random.default_rng(3)
    shift_ok = 0
    for i in range(1000):
        h, d = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        r = float(rng.uniform(0.1, 10))
        fam = lsh.sample_family(h, d, r, i)
        v = rng.normal(scale=float(rng.uniform(0.1, 100)), size=d)
        moved = lsh.evaluate(fam.a, fam.b + fam.r, fam.r, v)[0]
        shift_ok += np.array_equal(moved, lsh.hash(fam, v) + 1)
    verdict(3, "LSH formula", exact and shift_ok == 1000,
            f"hand examples {'exact' if exact else 'WRONG'}, shift property {shift_ok}/1000")


def test_criterion_04_lsh_sensitivity(verdict):
    t0 = time.perf_counter()
    r, d = 3.0, 8
    grid = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
    rates = [lsh.collision_rate(d, r, m * r, 100_000, seed=i) for i, m in enumerate(grid)]
    monotone = all(b <= a + 0.005 for a, b in zip(rates, rates[1:]))
    at_r = rates[grid.index(1.0)]
    oracle = collision_probability(r, r)
    elapsed = time.perf_counter() - t0
    ok = monotone and abs(at_r - oracle) <= 0.01 and elapsed < 60
    verdict(4, "LSH sensitivity", ok,
            f"rates {[round(x, 4) for x in rates]}, at r {at_r:.4f} vs integral {oracle:.4f} "
            f"(limit 0.01), {elapsed:.1f}s (limit 60s)")


def test_criterion_05_grouping_purity(verdict):
    t0 = time.perf_counter()
    plain, hashed, separated = [], [], 0
    for seed in SEEDS10:
        s = setup(config(PURITY, seed=seed))
        labels = np.array([dev.majority_label() for dev in s.devices])
        feats = np.stack([dev.x.mean(axis=0) for dev in s.devices])
        separated += labels_well_separated(feats, labels)
        plain.append(purity(preprocess(s.devices, s.extractor, 4, "plain", seed=seed), labels))
        g = preprocess(s.devices, s.extractor, 4, "lsh", LshConfig(8, 3.0, seed), seed=seed)
        hashed.append(purity(g, labels))
    n_plain, n_lsh = sum(p == 1.0 for p in plain), sum(p == 1.0 for p in hashed)
    elapsed = time.perf_counter() - t0
    verdict(5, "grouping purity", n_plain >= 9 and n_lsh >= 9 and elapsed < 10,
            f"purity 1.0 on {n_plain}/10 seeds (plain) and {n_lsh}/10 (LSH h=8 r=3), "
            f"labels well separated on {separated}/10, {elapsed:.1f}s (limit 10s)")


def test_criterion_06_skew_ordering(verdict):
    t0 = time.perf_counter()
    med = {case: statistics.median(final_accuracies(ORDERING, strategy="fedavg", case=case))
           for case in ("iid", "case4", "case1")}
    gap = med["iid"] - med["case1"]
    elapsed = time.perf_counter() - t0
    ok = med["iid"] >= med["case4"] >= med["case1"] and gap >= 0.05 and elapsed < 300
    verdict(6, "accuracy falls with skew (FedAvg)", ok,
            f"iid {pct(med['iid'])} >= case4 {pct(med['case4'])} >= case1 {pct(med['case1'])}, "
            f"gap {100 * gap:.2f} points (need 5), {elapsed:.0f}s (limit 300s)")


def test_criterion_07_grouping_beats_random(verdict):
    t0 = time.perf_counter()
    med = {s: statistics.median(final_accuracies(ORDERING, strategy=s, case="case1"))
           for s in ("fedavg", "fldg", "fldg-l")}
    d_fldg = med["fldg"] - med["fedavg"]
    d_lsh = med["fldg-l"] - med["fedavg"]
    d_pair = abs(med["fldg"] - med["fldg-l"])
    elapsed = time.perf_counter() - t0
    ok = d_fldg >= 0.03 and d_lsh >= 0.03 and d_pair <= 0.02 and elapsed < 900
    verdict(7, "FLDG and FLDG-L beat FedAvg on case1", ok,
            f"FedAvg {pct(med['fedavg'])}, FLDG {pct(med['fldg'])} (+{100 * d_fldg:.2f}), "
            f"FLDG-L {pct(med['fldg-l'])} (+{100 * d_lsh:.2f}), FLDG vs FLDG-L "
            f"{100 * d_pair:.2f} points (limit 2), {elapsed:.0f}s (limit 900s)")


def test_criterion_08_group_count_trend(verdict):
    t0 = time.perf_counter()
    med = {k: statistics.median(final_accuracies(GROUP_SWEEP, K=k)) for k in (2, 5, 10)}
    ok = med[2] <= med[5] <= med[10]
    elapsed = time.perf_counter() - t0
    verdict(8, "more groups, higher accuracy at round 30", ok and elapsed < 600,
            f"K=2 {pct(med[2])}, K=5 {pct(med[5])}, K=10 {pct(med[10])}, {elapsed:.0f}s (limit 600s)")


def test_criterion_09_output_dimension_trend(verdict):
    med = {}
    for h in (1, 2, 5, 8):
        scores = []
        for seed in SEEDS10:
            s = setup(config(ORDERING, case="case1", seed=seed))
            labels = np.array([dev.majority_label() for dev in s.devices])
            # h=1 is below the ceil(log_3 5) = 2 bound, so skip the guard here
            g = preprocess(s.devices, s.extractor, 5, "lsh", LshConfig(h, 3.0, seed), seed=seed,
                           enforce_bound=False)
            scores.append(purity(g, labels))
        med[h] = statistics.median(scores)
    ok = med[1] <= med[2] <= med[5] <= med[8]
    verdict(9, "purity grows with hash count h", ok,
            ", ".join(f"h={h} {med[h]:.3f}" for h in med))


def test_criterion_10_determinism(verdict, tmp_path, monkeypatch):
    mismatches = []
    for strategy in ("fedavg", "fldg", "fldg-l", "k-center"):
        cfg_path = tmp_path / f"{strategy}.cfg"
        cfg = config(ORDERING, strategy=strategy, R=6, recluster_period=3,
                     out=str(tmp_path / f"{strategy}.csv"))
        cfg_path.write_text(cfg.to_text())
        outputs = []
        for threads in ("1", "4", "1"):
            monkeypatch.setenv("FEDGROUP_THREADS", threads)
            assert cli_main(["run", "--config", str(cfg_path)]) == 0
            outputs.append((tmp_path / f"{strategy}.csv").read_bytes())
        if len(set(outputs)) != 1:
            mismatches.append(strategy)
    # the grouping itself must also be reproducible
    g1 = group_devices(setup(config(ORDERING, strategy="fldg-l")))
    g2 = group_devices(setup(config(ORDERING, strategy="fldg-l")))
    same_groups = np.array_equal(g1.assignment, g2.assignment)
    verdict(10, "byte-identical reruns", not mismatches and same_groups,
            "4 strategies x FEDGROUP_THREADS in {1, 4, 1}: "
            + ("identical" if not mismatches else f"differ for {', '.join(mismatches)}"))
