import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krettah.datagen import edges_per_instant, gen_flow_tensor, make_sampling_plan, random_graph
from krettah.graph import build_b1, incidence, prior_value
from krettah.metrics import nrmse, nrmse_missing, sparsity_pct
from krettah.tensor import ObservationSet, unfold
from krettah.tt import tt_rank


def test_ceiling_rule():
    assert edges_per_instant(10, 0.25) == 3
    assert edges_per_instant(10, 0.3) == 3  # 10 * 0.3 is 3.0000000000000004 in floats
    assert edges_per_instant(3, 0.5) == 2
    assert edges_per_instant(7, 1.0) == 7
    with pytest.raises(ValueError):
        edges_per_instant(10, 0.0)
    with pytest.raises(ValueError):
        edges_per_instant(10, 1.5)


def test_sampling_plan_full_and_counts():
    _, obs = make_sampling_plan(6, 3, 2, 1.0, seed=0)
    assert obs == ObservationSet.full((6, 3, 2))
    plan, obs = make_sampling_plan(10, 4, 3, 0.25, seed=1)
    assert plan.per_instant == 3
    cols = unfold(obs.mask, 1).sum(axis=0)
    assert np.all(cols == 3)
    for t in range(12):
        assert np.array_equal(np.flatnonzero(unfold(obs.mask, 1)[:, t]), plan.edges[t])


@pytest.mark.parametrize("s", [0.1, 0.2, 0.3, 0.4, 0.5])
@pytest.mark.parametrize("I1", [7, 10, 30, 258])
def test_sampling_ceiling_grid(I1, s):
    plan, obs = make_sampling_plan(I1, 5, 2, s, seed=3)
    k = math.ceil(round(I1 * s, 9))
    assert plan.per_instant == k
    assert np.all(unfold(obs.mask, 1).sum(axis=0) == k)


def test_gen_flow_rank_and_determinism():
    g = random_graph(8, 15, seed=0)
    Y = gen_flow_tensor(g, 6, 4, rank=2, seed=5)
    assert Y.shape == (15, 6, 4)
    assert all(a <= b for a, b in zip(tt_rank(Y), (1, 2, 2, 1)))
    assert np.array_equal(Y, gen_flow_tensor(g, 6, 4, rank=2, seed=5))
    assert not np.array_equal(Y, gen_flow_tensor(g, 6, 4, rank=2, seed=6))
    assert abs(np.sqrt(np.mean(Y**2)) - 1) < 1e-12


def test_gen_flow_divergence_free():
    g = random_graph(10, 20, seed=1)
    Y = gen_flow_tensor(g, 5, 3, rank=2, div_weight=1.0, seed=2)
    Y1 = unfold(Y, 1)
    B1 = build_b1(g).toarray()
    assert np.linalg.norm(B1 @ Y1) / np.linalg.norm(Y1) < 1e-8
    assert prior_value(Y1, incidence(g), 1.0, 0.0) / np.sum(Y1**2) < 1e-15


def test_gen_flow_noise_level():
    g = random_graph(6, 9, seed=0)
    clean = gen_flow_tensor(g, 5, 4, seed=3)
    noisy = gen_flow_tensor(g, 5, 4, noise_level=0.1, seed=3)
    assert np.linalg.norm(noisy - clean) / np.linalg.norm(clean) == pytest.approx(0.1, rel=1e-12)
    with pytest.raises(ValueError):
        gen_flow_tensor(g, 5, 4, div_weight=2.0)


def test_random_graph_properties():
    g = random_graph(12, 30, seed=4)
    assert g.num_nodes == 12 and g.n_edges == 30 and g.n_triangles >= 1
    assert random_graph(12, 30, seed=4).edges == g.edges
    with pytest.raises(ValueError):
        random_graph(5, 3)


def test_nrmse_examples():
    Y = np.array([3.0, 4.0])
    assert nrmse(Y, Y) == 0.0
    assert nrmse(np.zeros(2), Y) == 1.0
    assert nrmse(np.array([3.0, 0.0]), Y) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(ValueError):
        nrmse(Y, np.zeros(2))
    with pytest.raises(ValueError):
        nrmse(Y, np.zeros(3))


def test_nrmse_missing():
    Y = np.array([[1.0, 2.0], [3.0, 4.0]])
    X = np.array([[1.0, 0.0], [3.0, 4.0]])
    obs = ObservationSet((2, 2), np.array([[True, False], [True, True]]))
    assert nrmse_missing(X, Y, obs) == 1.0
    with pytest.raises(ValueError):
        nrmse_missing(X, Y, ObservationSet.full((2, 2)))


def test_sparsity_examples():
    assert sparsity_pct(np.full((3, 3), -2.0)) == 0.0
    n = 7
    one_hot = np.zeros(n)
    one_hot[2] = 1.0
    assert sparsity_pct(one_hot) == pytest.approx(100 * (n - 1) / n)
    assert sparsity_pct(np.array([1.0, 0.5, 1e-4, 0.0])) == 50.0
    with pytest.raises(ValueError):
        sparsity_pct(np.zeros(4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_nrmse_scale_covariance(seed, c):
    rng = np.random.default_rng(seed)
    Y, E = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    assert nrmse(Y + c * E, Y) == pytest.approx(abs(c) * nrmse(Y + E, Y), rel=1e-12)
