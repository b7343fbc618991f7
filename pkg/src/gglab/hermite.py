"""Hermite (Parseval) expansion of the variance of a gaussian functional.

    Var f(g) = sum_{k>=1} 1/k! sum_{i_1..i_k} (E d^k f / dg_{i_1}..dg_{i_k})^2

Ordered index tuples are grouped into multisets: a multiset with multiplicities
(a_1..a_n) occurs k!/prod(a_j!) times, so order k contributes
sum over multisets of (E d^a f)^2 / prod(a_j!).

Expected derivatives are computed by tensor Gauss-Hermite quadrature, applied to

* an analytic derivative, when the functional supplies one;
* otherwise the gaussian integration-by-parts form E[d^a f] = E[f prod_j He_{a_j}(g_j)]
  (probabilists' Hermite polynomials), exact for polynomials up to the quadrature degree;
* or, on request (``method="fd"``), a central finite-difference stencil of spacing 0.5/k.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import hermite_e as He
from numpy.polynomial import polynomial as P

from gglab import rng
from gglab.model import ModelInstance, ModelSpec

K_MAX = 10
DIM_MAX = 6
NODES = 32
GRID_CAP = 1 << 22


class GaussianFunctional:
    """f(g) for g ~ N(0, I_dim); ``evaluator`` maps an (M, dim) array to (M,).

    ``derivative(x, multi_index)`` is an optional analytic oracle for the mixed
    partial over the (0-based) coordinates in ``multi_index``.
    """

    def __init__(self, dim: int, evaluator: Callable, derivative: Optional[Callable] = None,
                 degree: Optional[int] = None, name: str = ""):
        if not 1 <= dim <= DIM_MAX:
            raise ValueError(f"dimension must be in [1, {DIM_MAX}]")
        self.dim = dim
        self.evaluator = evaluator
        self.derivative = derivative
        self.degree = degree
        self.name = name
        self._grid_values = {}

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(np.atleast_2d(x)), dtype=np.float64)

    def grid_values(self, nodes: int) -> np.ndarray:
        if nodes not in self._grid_values:
            pts, _ = tensor_grid(self.dim, nodes)
            self._grid_values[nodes] = self(pts).reshape((nodes,) * self.dim)
        return self._grid_values[nodes]


def nodes_for(dim: int, nodes: int = NODES) -> int:
    """Nodes per axis, reduced if needed so the tensor grid has at most 2**22 points."""
    return min(nodes, int(math.floor(GRID_CAP ** (1.0 / dim) + 1e-9)))


def gauss_hermite(nodes: int):
    """Nodes and weights for E over one standard gaussian."""
    x, w = He.hermegauss(nodes)
    return x, w / math.sqrt(2 * math.pi)


def tensor_grid(dim: int, nodes: int):
    x, w = gauss_hermite(nodes)
    pts = np.stack(np.meshgrid(*([x] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    wts = np.ones(1)
    for _ in range(dim):
        wts = np.multiply.outer(wts, w).ravel()
    return pts, wts


def multiplicities(multi_index, dim: int) -> np.ndarray:
    return np.bincount(np.asarray(multi_index, dtype=np.int64), minlength=dim)


def _hermite_value(order: int, x: np.ndarray) -> np.ndarray:
    c = np.zeros(order + 1)
    c[order] = 1.0
    return He.hermeval(x, c)


def _fd_stencil(order: int, h: float):
    """Offsets and coefficients of the central difference for the ``order``-th derivative."""
    offs = np.array([(order / 2 - i) * h for i in range(order + 1)])
    coef = np.array([(-1) ** i * math.comb(order, i) for i in range(order + 1)]) / h**order
    return offs, coef


def derivative_expectation(func: GaussianFunctional, multi_index, nodes: int = NODES, method: str = "auto") -> float:
    """E[d^k f / dg_{i_1} .. dg_{i_k}] for 0-based coordinates ``multi_index``."""
    k = len(multi_index)
    if k > K_MAX:
        raise ValueError(f"derivative order {k} exceeds K_MAX={K_MAX}")
    if any(i < 0 or i >= func.dim for i in multi_index):
        raise ValueError("coordinate out of range")
    if method == "auto":
        method = "analytic" if func.derivative is not None else "hermite"
    nodes = nodes_for(func.dim, nodes)
    mult = multiplicities(multi_index, func.dim)
    if k == 0:
        pts, wts = tensor_grid(func.dim, nodes)
        return float(wts @ func(pts))
    if method == "analytic":
        if func.derivative is None:
            raise ValueError("functional has no analytic derivative")
        pts, wts = tensor_grid(func.dim, nodes)
        return float(wts @ np.asarray(func.derivative(pts, tuple(sorted(multi_index))), dtype=np.float64))
    if method == "hermite":
        x, w = gauss_hermite(nodes)
        acc = func.grid_values(nodes)
        # contract axis by axis; axis 0 is always the next remaining coordinate
        for j in range(func.dim):
            acc = np.tensordot(w * _hermite_value(int(mult[j]), x), acc, axes=(0, 0))
        return float(acc)
    if method == "fd":
        pts, wts = tensor_grid(func.dim, nodes)
        h = 0.5 / k
        stencils = [_fd_stencil(int(m), h) for m in mult]
        total = np.zeros(len(pts))
        for combo in itertools.product(*(range(len(s[0])) for s in stencils)):
            shift = np.array([stencils[j][0][c] for j, c in enumerate(combo)])
            coef = math.prod(stencils[j][1][c] for j, c in enumerate(combo))
            total += coef * func(pts + shift)
        return float(wts @ total)
    raise ValueError(f"unknown method {method!r}")


def hermite_variance(func: GaussianFunctional, K: int, nodes: int = NODES, method: str = "auto"):
    """Truncated series sum_{k=1..K}; returns (truncated_sum, per_order_terms)."""
    if K > K_MAX:
        raise ValueError(f"K={K} exceeds K_MAX={K_MAX}")
    terms = []
    for k in range(1, K + 1):
        term = 0.0
        for ms in itertools.combinations_with_replacement(range(func.dim), k):
            e = derivative_expectation(func, ms, nodes, method)
            term += e * e / math.prod(math.factorial(int(m)) for m in multiplicities(ms, func.dim))
        terms.append(term)
    return float(sum(terms)), terms


def quadrature_variance(func: GaussianFunctional, nodes: int = 64) -> float:
    """Var f by direct tensor Gauss-Hermite quadrature of E f^2 - (E f)^2."""
    nodes = nodes_for(func.dim, nodes)
    pts, wts = tensor_grid(func.dim, nodes)
    v = func(pts)
    m = wts @ v
    return float(wts @ (v - m) ** 2)


def mc_variance(func: GaussianFunctional, samples: int, stream_seed: int = 0) -> tuple[float, float]:
    """Sample variance over i.i.d. gaussian inputs with its large-sample standard error."""
    g = rng.gaussians(stream_seed, 0, rng.GAUSSIAN_MC, samples * func.dim).reshape(samples, func.dim)
    v = func(g)
    d = v - v.mean()
    s2 = float(d @ d / (samples - 1))
    m4 = float((d**4).mean())
    se = math.sqrt(max(m4 - s2**2 * (samples - 3) / (samples - 1), 0.0) / samples)
    return s2, se


# ------------------------------------------------------------- free energy as a functional


def _logcosh_derivative_polys(kmax: int):
    """P_k with d^k/dx^k log cosh x = P_k(tanh x)."""
    polys = [None, np.array([0.0, 1.0])]
    one_minus_t2 = np.array([1.0, 0.0, -1.0])
    for _ in range(2, kmax + 1):
        polys.append(P.polymul(P.polyder(polys[-1]), one_minus_t2))
    return polys


def psi1_functional(gamma: float, h: float = 0.0) -> GaussianFunctional:
    """psi_1(g) = log(2 cosh(gamma g + h)) with its closed-form derivatives."""
    polys = _logcosh_derivative_polys(K_MAX)

    def f(x):
        y = gamma * x[:, 0] + h
        return np.logaddexp(y, -y)

    def df(x, mi):
        k = len(mi)
        t = np.tanh(gamma * x[:, 0] + h)
        return gamma**k * P.polyval(t, polys[k])

    return GaussianFunctional(1, f, derivative=df, name="psi_1")


def psi_functional(instance: ModelInstance) -> GaussianFunctional:
    """psi_N as a function of the perturbation gaussians, everything else held fixed."""
    from gglab.kernels import monomials, spins_from_codes

    A = instance.n_features
    if instance.n > 4 or A > 4 or A == 0:
        raise ValueError("instance too large: need N <= 4 and 1 <= |A_N| <= 4")
    spins = spins_from_codes(np.arange(1 << instance.n), instance.n)
    base_inst = instance.with_gamma(0.0)
    base_lw = base_inst.log_weight(spins)
    F = instance.features.values(spins)
    gamma, N = instance.gamma, instance.n

    def f(g):
        lw = base_lw[None, :] + gamma * g @ F.T
        m = lw.max(axis=1, keepdims=True)
        return (m[:, 0] + np.log(np.exp(lw - m).sum(axis=1))) / N

    return GaussianFunctional(A, f, name=f"psi_{N}")


@dataclass
class PsiVarianceComparison:
    per_order: list
    partial_sums: list
    hermite_total: float
    quadrature_variance: float
    mc_variance: float
    mc_std_error: float
    K: int

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.partial_sums) >= -1e-15))


def psi_variance_via_hermite(source, K: int, master_seed: int = 0, sample_index: int = 0, nodes: int = NODES,
                             mc_samples: int = 20000, method: str = "auto") -> PsiVarianceComparison:
    """Hermite truncations of Var(psi_N) over the perturbation field versus MC and quadrature."""
    inst = source if isinstance(source, ModelInstance) else source.build(master_seed, sample_index)
    if inst.gamma == 0:
        zeros = [0.0] * K
        return PsiVarianceComparison(zeros, zeros, 0.0, 0.0, 0.0, 0.0, K)
    func = psi_functional(inst)
    total, per = hermite_variance(func, K, nodes, method)
    mc, se = mc_variance(func, mc_samples, master_seed)
    return PsiVarianceComparison(per, list(np.cumsum(per)), total, quadrature_variance(func), mc, se, K)
