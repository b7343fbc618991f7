import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gglab import hermite
from gglab.hermite import GaussianFunctional, derivative_expectation, hermite_variance, mc_variance
from gglab.model import ModelSpec, build_sk


def gaussian_moment(k: int) -> int:
    return 0 if k % 2 else math.prod(range(k - 1, 0, -2))


def poly_moments(poly: dict):
    """E f and E f^2 for f = sum c * prod g_j^e_j, from gaussian moments of monomials."""
    mean = sum(c * math.prod(gaussian_moment(e) for e in exps) for exps, c in poly.items())
    second = 0.0
    for (e1, c1), (e2, c2) in itertools.product(poly.items(), repeat=2):
        second += c1 * c2 * math.prod(gaussian_moment(a + b) for a, b in zip(e1, e2))
    return mean, second


def poly_functional(poly: dict, dim: int) -> GaussianFunctional:
    def f(x):
        out = np.zeros(len(x))
        for exps, c in poly.items():
            out += c * np.prod(x ** np.array(exps), axis=1)
        return out
    return GaussianFunctional(dim, f, degree=max(sum(e) for e in poly))


@st.composite
def polynomials(draw):
    dim = draw(st.integers(1, 3))
    deg = draw(st.integers(1, 4))
    exps = [e for e in itertools.product(range(deg + 1), repeat=dim) if 0 < sum(e) <= deg]
    chosen = draw(st.lists(st.sampled_from(exps), min_size=1, max_size=6, unique=True))
    coeffs = draw(st.lists(st.floats(-2, 2, allow_nan=False).filter(lambda c: abs(c) > 1e-3),
                           min_size=len(chosen), max_size=len(chosen)))
    poly = dict(zip(chosen, coeffs))
    return poly, dim, max(sum(e) for e in poly)


@settings(max_examples=40, deadline=None)
@given(polynomials())
def test_polynomial_exactness(case):
    poly, dim, d = case
    mean, second = poly_moments(poly)
    var = second - mean**2
    func = poly_functional(poly, dim)
    total, terms = hermite_variance(func, d + 2)
    assert sum(terms[:d]) == pytest.approx(var, abs=1e-8 * max(1.0, var))
    assert all(abs(t) <= 1e-10 * max(1.0, var) for t in terms[d:])


def test_simple_derivative_expectations():
    g = GaussianFunctional(1, lambda x: x[:, 0])
    g2 = GaussianFunctional(1, lambda x: x[:, 0] ** 2)
    assert derivative_expectation(g, (0,)) == pytest.approx(1.0, abs=1e-12)
    assert derivative_expectation(g2, (0,)) == pytest.approx(0.0, abs=1e-12)
    assert derivative_expectation(g2, (0, 0)) == pytest.approx(2.0, abs=1e-12)


def test_sin_sum_analytic_and_ibp():
    def dsin(x, mi):
        k = len(mi)
        return np.imag(1j**k * np.exp(1j * (x[:, 0] + x[:, 1])))
    f = GaussianFunctional(2, lambda x: np.sin(x[:, 0] + x[:, 1]), derivative=dsin)
    assert derivative_expectation(f, (0,)) == pytest.approx(math.exp(-1), abs=1e-8)
    assert derivative_expectation(f, (0,), method="hermite") == pytest.approx(math.exp(-1), abs=1e-8)
    assert derivative_expectation(f, (0,), method="fd") == pytest.approx(math.exp(-1), abs=0.02)


def test_series_examples():
    total, terms = hermite_variance(GaussianFunctional(1, lambda x: x[:, 0]), 4)
    assert total == pytest.approx(1.0, abs=1e-12) and terms[0] == pytest.approx(1.0)
    total, terms = hermite_variance(GaussianFunctional(2, lambda x: x[:, 0] * x[:, 1]), 2)
    assert terms == pytest.approx([0.0, 1.0], abs=1e-12)
    total, terms = hermite_variance(GaussianFunctional(1, lambda x: x[:, 0] ** 3), 3)
    assert terms == pytest.approx([9.0, 0.0, 6.0], abs=1e-10)
    assert total == pytest.approx(15.0, abs=1e-10)


def test_fd_method_on_polynomial():
    # spacing h = 0.5/k, points at +-h/2: the first-order stencil of g^3 gives 3 g^2 + 1/16
    total, terms = hermite_variance(GaussianFunctional(1, lambda x: x[:, 0] ** 3), 3, method="fd")
    assert terms[0] == pytest.approx(3.0625**2, rel=1e-10)
    assert terms[2] == pytest.approx(6.0, rel=1e-10)
    assert total == pytest.approx(15.0, rel=0.05)


def test_order_limits():
    f = GaussianFunctional(1, lambda x: x[:, 0])
    with pytest.raises(ValueError):
        derivative_expectation(f, (0,) * 11)
    with pytest.raises(ValueError):
        hermite_variance(f, 11)
    with pytest.raises(ValueError):
        GaussianFunctional(7, lambda x: x[:, 0])
    with pytest.raises(ValueError):
        derivative_expectation(f, (1,))


def test_mixed_partial_symmetry():
    f = GaussianFunctional(3, lambda x: np.exp(0.3 * x[:, 0]) * np.cos(x[:, 1] - 0.5 * x[:, 2]) + x[:, 0] * x[:, 2] ** 2)
    ref = derivative_expectation(f, (0, 1, 2, 2))
    for perm in set(itertools.permutations((0, 1, 2, 2))):
        assert derivative_expectation(f, perm) == pytest.approx(ref, abs=1e-12)


def test_mc_variance_examples():
    for fn, exact in [(lambda x: x[:, 0], 1.0), (lambda x: x[:, 0] ** 2, 2.0),
                      (lambda x: np.exp(x[:, 0] / 2), math.exp(0.25) * (math.exp(0.25) - 1))]:
        est, se = mc_variance(GaussianFunctional(1, fn), 50_000, 3)
        assert abs(est - exact) <= 3 * se


def test_lognormal_series_converges():
    f = GaussianFunctional(1, lambda x: np.exp(x[:, 0] / 2))
    exact = math.exp(0.25) * (math.exp(0.25) - 1)
    total, terms = hermite_variance(f, 10)
    # k-th term is e^{1/4} (1/4)^k / k!
    assert terms == pytest.approx([math.exp(0.25) * 0.25**k / math.factorial(k) for k in range(1, 11)], rel=1e-8)
    assert total == pytest.approx(exact, rel=1e-9)


def test_psi1_truncation_and_monotone():
    f = hermite.psi1_functional(0.8, 0.3)
    ref = hermite.quadrature_variance(f, 64)
    total, terms = hermite_variance(f, 8)
    assert abs(total - ref) <= 0.01 * ref
    assert np.all(np.array(terms) >= 0)
    partial = np.cumsum(terms)
    assert np.all(np.diff(partial) >= 0)
    mc, se = mc_variance(f, 50_000, 0)
    assert partial[-1] <= mc + 3 * se


def test_psi1_analytic_matches_ibp():
    f = hermite.psi1_functional(0.6, 0.2)
    for k in range(1, 6):
        assert derivative_expectation(f, (0,) * k, method="analytic") == pytest.approx(
            derivative_expectation(f, (0,) * k, method="hermite"), abs=1e-7)


def test_psi_variance_via_hermite_small_instance():
    spec = ModelSpec("sk", N=3, beta=1.0, gamma=0.5, h=0.3)
    cmp = hermite.psi_variance_via_hermite(spec, 4, 1, nodes=16)
    assert cmp.monotone
    assert cmp.hermite_total <= cmp.quadrature_variance + 1e-12
    assert abs(cmp.hermite_total - cmp.quadrature_variance) <= 0.05 * cmp.quadrature_variance
    assert abs(cmp.quadrature_variance - cmp.mc_variance) <= 3 * cmp.mc_std_error


def test_psi_variance_gamma_zero_and_limits():
    cmp = hermite.psi_variance_via_hermite(ModelSpec("sk", N=3, gamma=0.0), 3)
    assert cmp.hermite_total == 0.0 and cmp.per_order == [0.0] * 3
    with pytest.raises(ValueError):
        hermite.psi_functional(build_sk(6, 1.0, 0.5, 0.0, 0, 0))


def test_psi_functional_matches_engine():
    inst = build_sk(3, 1.0, 0.5, 0.3, 2, 0)
    from gglab.gibbs import free_energy_per_site
    f = hermite.psi_functional(inst)
    assert f(inst.perturbation[None, :])[0] == pytest.approx(free_energy_per_site(inst), abs=1e-12)
