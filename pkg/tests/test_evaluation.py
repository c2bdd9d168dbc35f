import math

import numpy as np
import pytest

from ripost import (
    CountTensor,
    DecompositionConfig,
    LeafBlock,
    RangeQuery,
    Rect,
    RngStream,
    decompose,
    make_view,
)
from ripost.baselines import identity_release
from ripost.errors import ConfigError
from ripost.evaluation import compute_r_rmse, compute_rmse, generate_workload, load_workload, save_workload


def exact_view(t):
    leaves = [
        LeafBlock(Rect(tuple((c, c) for c in t.domain.from_index(i))), float(v))
        for i, v in enumerate(t.flat())
    ]
    return make_view(t, leaves, 1.0)


def test_rmse_zero_for_exact_view(sparse):
    w = generate_workload(sparse.domain, 200, 0)
    assert compute_rmse(exact_view(sparse), sparse, w) == 0


def test_rmse_constant_point_offset(fig2):
    view = identity_release(fig2, 1.0, RngStream(0, (), "noise_off"))
    shifted = make_view(fig2, [LeafBlock(l.rect, l.noisy_mean + 2.5) for l in view.leaves], 1.0)
    points = [RangeQuery(((i, i),)) for i in range(11)]
    assert compute_rmse(shifted, fig2, points) == pytest.approx(2.5)


def test_identity_rmse_matches_laplace_variance():
    t = CountTensor.from_cells(np.zeros((6, 6), dtype=int))
    w = generate_workload(t.domain, 300, 3)
    eps = 1.0
    mean_cells = np.mean([q.to_rect(t.domain).n_cells for q in w.queries])
    mse = np.mean([compute_rmse(identity_release(t, eps, RngStream(s)), t, w) ** 2 for s in range(200)])
    assert mse == pytest.approx(mean_cells * 2 / eps**2, rel=0.1)


def test_r_rmse_cases():
    assert compute_r_rmse(3.0, 3.0) == 1
    assert compute_r_rmse(1.47, 1.0) == pytest.approx(1.47)
    assert compute_r_rmse(0.0, 2.0) == 0
    assert compute_r_rmse(0.0, 0.0) == 1
    with pytest.warns(RuntimeWarning):
        assert math.isinf(compute_r_rmse(1.0, 0.0))


def test_empty_workload_rejected(fig2):
    with pytest.raises(ConfigError):
        compute_rmse(exact_view(fig2), fig2, [])
    with pytest.raises(ConfigError):
        generate_workload(fig2.domain, 0, 0)


def test_workload_deterministic_and_in_domain(tmp_path, sparse):
    a = generate_workload(sparse.domain, 500, 7)
    assert a.queries == generate_workload(sparse.domain, 500, 7).queries
    assert a.queries != generate_workload(sparse.domain, 500, 8).queries
    for q in a.queries:
        q.to_rect(sparse.domain)
        assert any(r is not None for r in q.ranges)
    save_workload(a, tmp_path / "w.json")
    assert load_workload(tmp_path / "w.json").queries == a.queries


def median_over_seeds(t, w, reps=12, **kw):
    rmses, counts = [], []
    for s in range(reps):
        cfg = DecompositionConfig(seed=s, **kw)
        res = decompose(t, cfg)
        rmses.append(compute_rmse(make_view(t, res.leaves, cfg.epsilon), t, w))
        counts.append(len(res.leaves))
    return np.median(rmses), np.median(counts)


@pytest.mark.slow
def test_sweep_trends(sparse):
    w = generate_workload(sparse.domain, 500, 11)
    eps = [median_over_seeds(sparse, w, epsilon=e)[0] for e in (0.01, 0.1, 1.0)]
    assert eps[0] > eps[1] > eps[2]
    leaves = [median_over_seeds(sparse, w, gamma=g)[1] for g in (0.5, 0.9)]
    assert leaves[1] >= leaves[0]
    # spending most of the budget on structure starves the leaf means
    assert median_over_seeds(sparse, w, alpha=0.9)[0] > median_over_seeds(sparse, w, alpha=0.3)[0]
