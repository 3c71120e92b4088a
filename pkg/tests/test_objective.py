import itertools
import math

import numpy as np
import pytest

from ordinal_dpd.errors import DegenerateProbability
from ordinal_dpd.links import LINK_NAMES, get_link
from ordinal_dpd.model import Dataset, Theta, frame, lift_vectors, score
from ordinal_dpd.objective import (
    DpdObjective, h_n, h_n_gradient, population_estimating_function,
    row_arg_gradients, v_i, value_and_gradient,
)

from conftest import ALPHAS, random_instance, random_theta


def brute_h_n(theta, link, data, alpha):
    """Plain-python recomputation straight from the definition."""
    F = get_link(link).cdf
    total = 0.0
    for x, y in zip(data.X, data.y):
        eta = sum(b * xi for b, xi in zip(theta.beta, x))
        cuts = [-math.inf] + list(theta.gamma) + [math.inf]
        probs = [float(F(cuts[j + 1] - eta) - F(cuts[j] - eta)) for j in range(theta.m)]
        if alpha == 0:
            total += -math.log(probs[y - 1])
        else:
            total += sum(q ** (1 + alpha) for q in probs) - (1 + 1 / alpha) * probs[y - 1] ** alpha
    return total / data.n


def fd_grad(obj, theta, h=1e-6):
    v = theta.vector()
    g = np.empty_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        g[k] = (obj.h_n(Theta.from_vector(v + e, theta.m))
                - obj.h_n(Theta.from_vector(v - e, theta.m))) / (2 * h)
    return g


def test_v_i_alpha_one_half_probabilities():
    d = Dataset([[0.0], [1.0]], [1, 2])
    obj = DpdObjective(1.0, "logit", d)
    th = Theta([0.0], [0.0])
    assert v_i(obj, th, 1) == pytest.approx(-0.5, abs=1e-15)
    assert v_i(obj, th, 2) == pytest.approx(-0.5, abs=1e-15)


def test_v_i_alpha_zero_is_negative_log_probability():
    d = Dataset([[0.0], [1.0]], [1, 2])
    obj = DpdObjective(0.0, "logit", d)
    assert v_i(obj, Theta([0.0], [0.0]), 2) == pytest.approx(0.6931472, abs=5e-8)


def test_v_i_index_is_one_based():
    d = Dataset([[0.0]], [1], m=2)
    obj = DpdObjective(0.5, "probit", d)
    with pytest.raises(IndexError):
        obj.v_i(Theta([0.0], [0.0]), 0)


def test_small_alpha_limit(rng, link):
    # p^a = 1 + a log p + O(a^2) gives V(a) = V(0) - 1/a + O(a)
    a = 1e-6
    for _ in range(10):
        theta, d = random_instance(rng, link, 4, 2, 8)
        o0 = DpdObjective(0.0, link, d)
        oa = DpdObjective(a, link, d)
        for i in range(1, d.n + 1):
            assert oa.v_i(theta, i) + 1 / a == pytest.approx(o0.v_i(theta, i), abs=1e-4)


def test_alpha_zero_degenerate_raises_but_positive_alpha_does_not():
    d = Dataset([[0.0]], [2], m=2)
    th = Theta([1e4], [0.0])
    with pytest.raises(DegenerateProbability):
        DpdObjective(0.0, "probit", d).h_n(th)
    assert DpdObjective(0.5, "probit", d).h_n(th) == pytest.approx(1.0)


@pytest.mark.parametrize("alpha", [-0.1, 1.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ValueError):
        DpdObjective(alpha, "logit", Dataset([[0.0]], [1], m=2))


def test_h_n_single_row_equals_v_1(rng):
    theta, d = random_instance(rng, "probit", 3, 2, 1)
    obj = DpdObjective(0.3, "probit", d)
    assert h_n(obj, theta) == obj.v_i(theta, 1)


def test_h_n_duplicated_rows(rng, link):
    theta, d = random_instance(rng, link, 4, 2, 25)
    dd = Dataset(np.vstack([d.X, d.X]), np.concatenate([d.y, d.y]), d.m)
    for a in ALPHAS:
        assert DpdObjective(a, link, dd).h_n(theta) == pytest.approx(
            DpdObjective(a, link, d).h_n(theta), rel=1e-14, abs=1e-15)


def test_h_n_matches_brute_force(rng, link):
    for a in ALPHAS:
        theta, d = random_instance(rng, link, 4, 3, 30)
        assert DpdObjective(a, link, d).h_n(theta) == pytest.approx(brute_h_n(theta, link, d, a),
                                                                   rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_gradient_matches_finite_differences(alpha, link, rng):
    for _ in range(4):
        m, p = rng.integers(3, 6), rng.integers(1, 4)
        theta, d = random_instance(rng, link, m, p, 40)
        obj = DpdObjective(alpha, link, d)
        g = h_n_gradient(obj, theta)
        fd = fd_grad(obj, theta)
        assert np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-3) < 1e-5


def test_alpha_zero_gradient_is_mean_negative_score(rng, link):
    theta, d = random_instance(rng, link, 4, 2, 20)
    g = DpdObjective(0.0, link, d).h_n_gradient(theta)
    want = -np.mean([score(theta, link, x, y) for x, y in zip(d.X, d.y)], axis=0)
    assert np.max(np.abs(g - want)) < 1e-12


def test_gradient_formula_with_scores(rng, link):
    # (1+a)/n sum_i [sum_j p_j^(1+a) u_j - p_Y^a u_Y]
    a = 0.4
    theta, d = random_instance(rng, link, 3, 2, 15)
    fr = frame(theta, link, d.X)
    C = fr.coef_first()
    U = lift_vectors(C, d.X)
    P = fr.p
    rows = np.arange(d.n)
    terms = np.einsum("nj,njd->nd", P ** (1 + a), U) - (P[rows, d.y - 1] ** a)[:, None] * U[rows, d.y - 1]
    want = (1 + a) * terms.mean(axis=0)
    assert DpdObjective(a, link, d).h_n_gradient(theta) == pytest.approx(want, rel=1e-10, abs=1e-13)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_balanced_instance_has_zero_gradient(alpha):
    # logistic cut-offs at -+log 2 give probabilities (1/3, 1/3, 1/3) at beta = 0
    X = np.repeat([[-1.0], [1.0]], 3, axis=0)
    y = np.array([1, 2, 3, 1, 2, 3])
    th = Theta([-math.log(2.0), math.log(2.0)], [0.0])
    g = DpdObjective(alpha, "logit", Dataset(X, y)).h_n_gradient(th)
    assert np.max(np.abs(g)) < 1e-10


def test_value_and_gradient_agrees_with_objective(rng, link):
    theta, d = random_instance(rng, link, 5, 3, 30)
    obj = DpdObjective(0.5, link, d)
    v, g = value_and_gradient(theta, link, d.X, d.y - 1, 0.5)
    assert v == pytest.approx(obj.h_n(theta), rel=1e-14)
    assert g == pytest.approx(obj.h_n_gradient(theta), rel=1e-12, abs=1e-15)


def test_value_and_gradient_weights(rng):
    theta, d = random_instance(rng, "probit", 3, 1, 10)
    w = np.zeros(10)
    w[3] = 10.0
    v, g = value_and_gradient(theta, "probit", d.X, d.y - 1, 0.2, weights=w)
    one = d.subset([3])
    assert v == pytest.approx(DpdObjective(0.2, "probit", one).h_n(theta), rel=1e-14)
    assert g == pytest.approx(DpdObjective(0.2, "probit", one).h_n_gradient(theta), rel=1e-12)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_fisher_consistency(alpha, link, rng):
    for _ in range(4):
        theta = random_theta(rng, 4, 2)
        X = rng.normal(size=(10, 2))
        assert np.max(np.abs(population_estimating_function(theta, link, X, alpha))) < 1e-12
        # the same expectation taken over the loss gradient itself
        fr = frame(theta, link, X)
        P = fr.p
        E = sum(P[:, t][:, None] * row_arg_gradients(fr, np.full(10, t), alpha) for t in range(4))
        assert np.max(np.abs(lift_vectors(E, X))) < 1e-12


def test_population_function_detects_misfit(rng):
    theta = random_theta(rng, 3, 1)
    X = rng.normal(size=(5, 1))
    g = np.tile([1.0, 0.0, 0.0], (5, 1))
    assert np.max(np.abs(population_estimating_function(theta, "logit", X, 0.5, g))) > 1e-3


@pytest.mark.parametrize("seed", range(5))
def test_alpha_continuity_on_grid(seed):
    rng = np.random.default_rng(seed)
    theta, d = random_instance(rng, "logit", 3, 1, 40)
    lattice = [Theta([g1, g1 + dg], [b])
               for g1, dg, b in itertools.product(np.linspace(-2, 0, 9), np.linspace(0.5, 3, 6),
                                                  np.linspace(-2, 2, 9))]
    best = {}
    for a in (0.0, 1e-4):
        obj = DpdObjective(a, "logit", d)
        best[a] = int(np.argmin([obj.h_n(t) for t in lattice]))
    assert best[0.0] == best[1e-4]
