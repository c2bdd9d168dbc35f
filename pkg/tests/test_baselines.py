import numpy as np
import pytest

from ripost import (
    CountTensor,
    DecompositionConfig,
    RangeQuery,
    RngStream,
    answer,
    answer_exact,
    decompose,
    make_view,
)
from ripost.baselines import (
    error_decomposition,
    greedy_oracle_decompose,
    identity_release,
    midpoint_decomposition,
    noise_off_stream,
    sensitivity_oracle,
)
from ripost.evaluation import generate_workload


def test_identity_noise_off_is_exact(fig2):
    view = identity_release(fig2, 0.1, noise_off_stream())
    assert [leaf.noisy_mean for leaf in view.leaves] == list(fig2.flat())
    assert view.metadata["mechanism"] == "identity"


def test_identity_variance_and_bias():
    t = CountTensor.from_cells(np.full(10, 3))
    q = RangeQuery(((0, 9),))
    eps = 0.5
    vals = np.array([answer(identity_release(t, eps, RngStream(s)), q) for s in range(3000)])
    expected_var = 10 * 2 / eps**2
    assert abs(vals.var() / expected_var - 1) < 0.1
    assert abs(vals.mean() - 30) < 4 * np.sqrt(expected_var / 3000)


def test_greedy_oracle_worked_example(fig2):
    res = greedy_oracle_decompose(fig2, 10)
    assert [leaf.rect.bounds[0] for leaf in res.leaves] == [(0, 1), (2, 2), (3, 4), (5, 5), (6, 10)]
    assert sorted(t.true_ae for t in res.report.leaves) == pytest.approx([0, 0, 0, 0, 7.6])
    # [0, 0, 5, 0, 1] has mean 1.2: 3 * 1.2 + 3.8 + 0.2


def test_greedy_oracle_uniform_single_leaf():
    t = CountTensor.from_cells(np.full((4, 4), 7))
    assert len(greedy_oracle_decompose(t, 0).leaves) == 1


def test_greedy_oracle_theta_zero_gives_pure_leaves(sparse):
    res = greedy_oracle_decompose(sparse, 0)
    assert all(t.true_ae == 0 for t in res.report.leaves)
    assert res.report.mixed_fraction == 0


def test_midpoint_full_expansion_noise_off():
    t = CountTensor.from_cells(np.arange(1, 9))
    res = midpoint_decomposition(t, DecompositionConfig(noise_mode="noise_off"))
    assert [leaf.rect.bounds[0] for leaf in res.leaves] == [(i, i) for i in range(8)]
    assert [leaf.noisy_mean for leaf in res.leaves] == list(range(1, 9))
    # halving 8 cells takes three levels
    assert {t.tree_depth for t in res.report.leaves} == {4}


def test_midpoint_layout_is_symmetric_2d():
    cells = np.zeros((8, 8), dtype=int)
    cells[:4, :4] = 1
    t = CountTensor.from_cells(cells)
    res = midpoint_decomposition(t, DecompositionConfig(noise_mode="noise_off"))
    rects = {leaf.rect.bounds for leaf in res.leaves}
    assert ((4, 7), (0, 3)) in rects and ((0, 3), (4, 7)) in rects and ((4, 7), (4, 7)) in rects
    assert sum(1 for r in rects if r[0][1] <= 3 and r[1][1] <= 3) == 16


def test_sensitivity_oracle_matches_declared_bounds():
    for n in (1, 2, 5, 9):
        s = sensitivity_oracle(n, trials=150, seed=n)
        assert s["sum"] == 1
        assert s["min"] <= 1
        assert s["ae"] <= s["ae_bound"] <= 2
    assert sensitivity_oracle(5, trials=300)["min"] == 1


def test_error_decomposition_sums(sparse):
    view = make_view(sparse, decompose(sparse, DecompositionConfig(seed=2)).leaves, 0.1)
    qs = generate_workload(sparse.domain, 200, 5).queries
    res = error_decomposition(view, sparse, qs)
    for q, a, ae, pe in zip(qs, res.answers, res.ae_component, res.pe_component):
        assert a - answer_exact(sparse, q) == pytest.approx(ae + pe, abs=1e-9)
