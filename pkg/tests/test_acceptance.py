"""Acceptance checks. Each records one ``PASS``/``FAIL`` line, shown in the terminal summary."""

import math
import time

import numpy as np
import pytest

from ripost import (
    CountTensor,
    DecompositionConfig,
    RangeQuery,
    RngStream,
    SeriesParams,
    answer,
    answer_exact,
    build_index,
    decompose,
    exp_mech_select,
    laplace,
    load_view,
    make_view,
    save_view,
    series_slack,
)
from ripost.baselines import identity_release, midpoint_decomposition, sensitivity_oracle
from ripost.budget import weight_partial_sums
from ripost.evaluation import compute_rmse, generate_workload

from conftest import FIG2_CELLS, sparse_fixture

SEEDS = range(20)


RESULTS = []


def report(n, ok, detail):
    line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
    RESULTS.append(line)
    print("\n" + line)
    assert ok, detail


@pytest.fixture(scope="module")
def fixture32():
    return sparse_fixture()


@pytest.fixture(scope="module")
def fig2_view():
    t = CountTensor.from_cells(FIG2_CELLS)
    cfg = DecompositionConfig(theta2=10, single_phase=True, noise_mode="noise_off")
    res = decompose(t, cfg)
    return t, res, make_view(t, res.leaves, cfg.epsilon, "noise_off")


def test_criterion_1_worked_example(fig2_view):
    start = time.perf_counter()
    _, res, _ = fig2_view
    got = sorted((t.true_mean, t.true_ae) for t in res.report.leaves)
    want = sorted([(0, 0), (7, 0), (0, 0), (12, 0), (1.2, 7.6)])
    elapsed = time.perf_counter() - start
    ok = len(got) == 5 and all(
        abs(a - c) <= 1e-9 and abs(b - d) <= 1e-9 for (a, b), (c, d) in zip(got, want)
    ) and all(abs(leaf.noisy_mean - t.true_mean) <= 1e-9 for leaf, t in zip(res.leaves, res.report.leaves))
    report(1, ok and elapsed < 1, f"leaves (mean, AE) = {got}")


def test_criterion_2_query_oracle(fig2_view):
    t, _, view = fig2_view
    q = RangeQuery(((7, 10),))
    a, exact = answer(view, q), answer_exact(t, q)
    report(2, abs(a - 4.8) <= 1e-9 and exact == 6, f"A(Q) = {a!r}, exact = {exact}")


def test_criterion_3_sensitivity():
    start = time.perf_counter()
    ok, worst = True, {}
    for n in range(2, 13):
        s = sensitivity_oracle(n, trials=200, seed=n)
        worst[n] = s
        ok &= s["sum"] == 1 and s["min"] <= 1 and s["ae"] <= s["ae_bound"] + 1e-12
    ok &= abs(worst[2]["ae"] - worst[2]["ae_bound"]) <= 1e-9
    elapsed = time.perf_counter() - start
    report(3, ok and elapsed < 30, f"max dAE at n=2: {worst[2]['ae']}, n=12: {worst[12]['ae']:.4f} "
           f"(bound {worst[12]['ae_bound']:.4f}); {elapsed:.1f}s")


def test_criterion_4_budget_soundness():
    gen = np.random.default_rng(2024)
    violations, worst = 0, 0.0
    for run in range(100):
        shape = tuple(int(v) for v in gen.integers(2, 65, size=2))
        density = gen.uniform(0.05, 0.6)
        cells = gen.poisson(gen.uniform(0.5, 20), shape) * (gen.random(shape) < density)
        _, _, ledger = decompose(CountTensor.from_cells(cells), DecompositionConfig(seed=run))
        top = ledger.max_leaf_total()
        worst = max(worst, top)
        violations += top > 0.1
    series_ok = True
    slack_err = 0.0
    for k, os_ in [(1, 1), (2, 2), (4, 4), (8, 8)]:
        params = SeriesParams(k, os_)
        sums = list(weight_partial_sums(params, 10**6))
        closed = series_slack(params)
        tail = k / (10**6 + os_ + 1)
        series_ok &= max(sums) <= 1.0 and abs((1 - sums[-1]) - (closed + tail)) <= 1e-9
        slack_err = max(slack_err, abs(closed - (1 - k / (os_ + 1))))
    ok = violations == 0 and series_ok and slack_err <= 1e-6
    report(4, ok, f"{violations} violations, max leaf-path spend {worst:.6f}; partial sums <= 1: {series_ok}; "
           f"slack error {slack_err:.1e}")


def test_criterion_5_mechanisms():
    start = time.perf_counter()
    x = laplace(1.0, RngStream(5, ("acceptance",)), size=10**6)
    lap_ok = abs(x.mean()) < 0.01 and abs(x.var() - 2) < 0.05
    scores = np.array([0.0, -10.0])
    picks = np.array([exp_mech_select(scores, 1.0, 1.0, RngStream(s, ("em",))) for s in range(200000)])
    p0 = float(np.mean(picks == 0))
    target = 1 / (1 + math.exp(-5))
    shifted = [exp_mech_select(scores + 123.0, 1.0, 1.0, RngStream(s, ("em",))) for s in range(2000)]
    shift_ok = shifted == picks[:2000].tolist()
    elapsed = time.perf_counter() - start
    ok = lap_ok and abs(p0 - target) <= 0.005 and shift_ok and elapsed < 30
    report(5, ok, f"laplace mean {x.mean():.4f} var {x.var():.4f}; P(0) = {p0:.4f} vs {target:.4f}; "
           f"shift-invariant {shift_ok}; {elapsed:.1f}s")


def ripost_rmse(t, w, seed, eps=0.1):
    cfg = DecompositionConfig(epsilon=eps, seed=seed)
    res = decompose(t, cfg)
    return compute_rmse(make_view(t, res.leaves, eps), t, w)


@pytest.mark.slow
def test_criterion_6_epsilon_monotone(fixture32):
    start = time.perf_counter()
    w = generate_workload(fixture32.domain, 3000, 0)
    med = [float(np.median([ripost_rmse(fixture32, w, s, e) for s in SEEDS])) for e in (0.01, 0.1, 1.0)]
    elapsed = time.perf_counter() - start
    report(6, med[0] > med[1] > med[2] and elapsed < 120,
           f"median RMSE at eps 0.01/0.1/1.0 = {med[0]:.1f}/{med[1]:.1f}/{med[2]:.1f}; {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_7_early_convergence(fixture32):
    start = time.perf_counter()
    assert np.mean(fixture32.cells == 0) >= 0.7
    ours = [decompose(fixture32, DecompositionConfig(seed=s)).report.mixed_fraction for s in SEEDS]
    mid = [midpoint_decomposition(fixture32, DecompositionConfig(seed=s)).report.mixed_fraction for s in SEEDS]
    a, b = float(np.median(ours)), float(np.median(mid))
    elapsed = time.perf_counter() - start
    report(7, a < b and elapsed < 120, f"median mixed-leaf fraction: ours {a:.3f}, midpoint {b:.3f}")


@pytest.mark.slow
def test_criterion_8_identity_trend(fixture32):
    w = generate_workload(fixture32.domain, 3000, 0)
    ours = float(np.median([ripost_rmse(fixture32, w, s) for s in SEEDS]))
    ident = float(np.median([compute_rmse(identity_release(fixture32, 0.1, RngStream(s)), fixture32, w)
                             for s in SEEDS]))
    report(8, ours < ident, f"median RMSE: ours {ours:.1f}, identity {ident:.1f}")


def test_criterion_9_partition_and_serialization(tmp_path, fixture32):
    ok = True
    for s in SEEDS:
        res = decompose(fixture32, DecompositionConfig(seed=s))
        cover = np.zeros(fixture32.domain.shape, dtype=int)
        for leaf in res.leaves:
            cover[fixture32.domain.offsets(leaf.rect)] += 1
        ok &= bool(np.all(cover == 1))
    view = make_view(fixture32, res.leaves, 0.1)
    save_view(view, tmp_path / "v.json")
    back = load_view(tmp_path / "v.json")
    rt = all(answer(back, q) == answer(view, q) for q in generate_workload(fixture32.domain, 1000, 1).queries)
    idx = build_index(view)
    ix = all(idx.answer(q) == answer(view, q) for q in generate_workload(fixture32.domain, 10**4, 2).queries)
    report(9, ok and rt and ix, f"partition {ok}; round-trip identical {rt}; index identical {ix}")
