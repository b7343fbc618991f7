"""Quenched averages and the free-energy identities behind the GG argument.

Every check takes a *source*: a :class:`ModelSpec` or any callable mapping a
disorder sample index to a :class:`ModelInstance`. Sample ``s`` always sees
the same disorder whatever gamma is, so gamma scans use common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from gglab import rng
from gglab.gibbs import ExactModeError, GibbsEnsemble, N_MAX_EXACT
from gglab.model import ModelInstance, ModelSpec
from gglab.replica import (
    MIN_DISORDER_SAMPLES,
    OverlapFunctional,
    ResidualEstimate,
    functional as named_functional,
    gg_residual,
)

Source = Union[ModelSpec, Callable[[int], ModelInstance]]

FIRST_DERIVATIVE_STEP = 1e-4
MIXED_DERIVATIVE_STEP = 1e-3


def _instances(source: Source, master_seed: int) -> Callable[[int], ModelInstance]:
    if isinstance(source, ModelSpec):
        if source.size > N_MAX_EXACT:
            raise ExactModeError(f"N={source.size} exceeds exact limit {N_MAX_EXACT}")
        return lambda s: source.build(master_seed, s)
    return source


def _layer(source: Source) -> str:
    if isinstance(source, ModelSpec) and source.base_disorder == "averaged":
        return "base+perturbation"
    return "perturbation"


def psi(instance: ModelInstance) -> float:
    return GibbsEnsemble(instance, mode="exact").free_energy


@dataclass(frozen=True)
class QuenchedEstimate:
    mean: float
    std_error: float
    n_samples: int
    variance: float
    values: Optional[np.ndarray] = None

    @classmethod
    def from_values(cls, values, keep: bool = False) -> "QuenchedEstimate":
        v = np.asarray(values, dtype=np.float64)
        sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        return cls(float(v.mean()), sd / math.sqrt(len(v)), len(v), sd**2, v if keep else None)


def quenched_free_energy(source: Source, n_samples: int, master_seed: int,
                         keep_values: bool = False) -> QuenchedEstimate:
    """p_N = E psi_N over ``n_samples`` disorder draws; ``variance`` is the sample Var(psi_N)."""
    if n_samples < MIN_DISORDER_SAMPLES:
        raise ValueError(f"need at least {MIN_DISORDER_SAMPLES} disorder samples")
    make = _instances(source, master_seed)
    return QuenchedEstimate.from_values([psi(make(s)) for s in range(n_samples)], keep_values)


@dataclass
class ConcentrationRow:
    N: int
    n_features: int
    var_perturbation: float
    var_total: float

    def ratio(self, gamma: float, mode: str = "perturbation") -> float:
        var = self.var_perturbation if mode == "perturbation" else self.var_total
        return var * self.N**2 / (gamma**2 * self.n_features) if self.n_features else 0.0


@dataclass
class ConcentrationTable:
    gamma: float
    rows: list = field(default_factory=list)
    skipped: Optional[str] = None
    band: float = 10.0

    def ratios(self, mode: str = "perturbation") -> np.ndarray:
        return np.array([r.ratio(self.gamma, mode) for r in self.rows])

    def bounded(self, mode: str = "perturbation") -> bool:
        r = self.ratios(mode)
        if self.skipped or len(r) == 0:
            return True
        if r.min() <= 0:
            return bool(r.max() == 0)
        return bool(r.max() / r.min() < self.band)

    def grows(self, mode: str = "perturbation") -> bool:
        """Flag a monotone increase of the normalized ratio across all N."""
        r = self.ratios(mode)
        return bool(len(r) > 2 and np.all(np.diff(r) > 0) and not self.bounded(mode))


def concentration_check(spec: ModelSpec, n_samples: int, N_list: Sequence[int], master_seed: int) -> ConcentrationTable:
    """Var(psi_N) N^2 / (gamma^2 |A_N|) per N, perturbation-only and total disorder."""
    table = ConcentrationTable(gamma=spec.gamma)
    if spec.gamma == 0:
        table.skipped = "gamma = 0: the concentration bound is vacuous"
        return table
    for N in N_list:
        s_N = spec.with_(N=N, dims=None)
        fixed = quenched_free_energy(s_N.with_(base_disorder="fixed"), n_samples, master_seed)
        if s_N.model in ("sk", "pspin"):
            total = quenched_free_energy(s_N.with_(base_disorder="averaged"), n_samples, master_seed)
        else:
            total = fixed
        n_feat = s_N.build(master_seed, 0).n_features
        table.rows.append(ConcentrationRow(s_N.size, n_feat, fixed.variance, total.variance))
    return table


@dataclass(frozen=True)
class DerivativeCheck:
    lhs: float
    rhs: float
    abs_error: float
    third_derivative: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.abs_error <= self.tolerance


def _resolve_instance(source, master_seed, sample_index) -> ModelInstance:
    if isinstance(source, ModelInstance):
        return source
    return _instances(source, master_seed)(sample_index)


def gamma_derivative_check(source, step: float = FIRST_DERIVATIVE_STEP, master_seed: int = 0,
                           sample_index: int = 0) -> DerivativeCheck:
    """<H> against the centered difference (psi(g+step) - psi(g-step)) / (2 step) on fixed disorder.

    Tolerance is max(1e-6, step^2 M) with M a coarse estimate of |psi'''|.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    inst = _resolve_instance(source, master_seed, sample_index)
    g = inst.gamma
    lhs = GibbsEnsemble(inst, mode="exact").h_mean
    rhs = (psi(inst.with_gamma(g + step)) - psi(inst.with_gamma(g - step))) / (2 * step)
    d = 1e-2
    vals = [psi(inst.with_gamma(g + k * d)) for k in (-2, -1, 1, 2)]
    third = abs((vals[3] - 2 * vals[2] + 2 * vals[1] - vals[0]) / (2 * d**3))
    return DerivativeCheck(lhs, rhs, abs(lhs - rhs), third, max(1e-6, step**2 * third))


@dataclass(frozen=True)
class ConvexityCheck:
    passed: bool
    worst_second_difference: float
    worst_chord_violation: float
    tolerance: float = 1e-9


def convexity_check(source, gamma_grid: Sequence[float], master_seed: int = 0, sample_index: int = 0,
                    tolerance: float = 1e-9) -> ConvexityCheck:
    """Second differences of psi_N over the grid and the chord bounds on <H>.

    For gamma' > gamma: <H>(gamma) <= (psi(gamma') - psi(gamma)) / (gamma' - gamma), reversed for gamma' < gamma.
    Second differences on a non-uniform grid are slope increments times the half-span,
    which equals psi_{i+1} - 2 psi_i + psi_{i-1} on a uniform grid.
    """
    grid = np.sort(np.asarray(gamma_grid, dtype=np.float64))
    if len(grid) < 3:
        raise ValueError("grid too small: need at least 3 gamma values")
    inst = _resolve_instance(source, master_seed, sample_index)
    ens = [GibbsEnsemble(inst.with_gamma(g), mode="exact") for g in grid]
    p = np.array([e.free_energy for e in ens])
    hm = np.array([e.h_mean for e in ens])
    slopes = np.diff(p) / np.diff(grid)
    d2 = np.diff(slopes) * (grid[2:] - grid[:-2]) / 2
    worst_d2 = float(d2.min())
    chord_viol = -np.inf
    for i in range(len(grid)):
        for j in range(len(grid)):
            if i == j:
                continue
            chord = (p[j] - p[i]) / (grid[j] - grid[i])
            viol = hm[i] - chord if j > i else chord - hm[i]
            chord_viol = max(chord_viol, viol)
    passed = worst_d2 >= -tolerance and chord_viol <= tolerance
    return ConvexityCheck(bool(passed), worst_d2, float(chord_viol), tolerance)


@dataclass(frozen=True)
class CovarianceCheck:
    max_discrepancy: float
    pairs: list
    covariance: list
    finite_difference: list
    tolerance: float = 1e-5

    @property
    def passed(self) -> bool:
        return self.max_discrepancy <= self.tolerance


def covariance_derivative_check(source, pairs_to_test: int = 20, step: float = MIXED_DERIVATIVE_STEP,
                                master_seed: int = 0, sample_index: int = 0,
                                pair_seed: int = 0) -> CovarianceCheck:
    """(1/N)(<f_a f_b> - <f_a><f_b>) against (1/gamma^2) d^2 psi / dg_a dg_b by central differences."""
    inst = _resolve_instance(source, master_seed, sample_index)
    if inst.gamma == 0:
        raise ValueError("gamma = 0: the identity divides by gamma^2")
    A = inst.n_features
    cov = GibbsEnsemble(inst, mode="exact").feature_covariance() / inst.n
    u = rng.uniforms(pair_seed, 0, rng.PROBE, 2 * pairs_to_test)
    pairs = [(int(u[2 * k] * A), int(u[2 * k + 1] * A)) for k in range(pairs_to_test)]
    g0 = inst.perturbation

    def psi_at(shift):
        g = g0.copy()
        for idx, delta in shift:
            g[idx] += delta
        return psi(inst.with_perturbation(g))

    lhs, rhs = [], []
    base = psi(inst)
    for a, b in pairs:
        if a == b:
            d2 = (psi_at([(a, step)]) - 2 * base + psi_at([(a, -step)])) / step**2
        else:
            d2 = (psi_at([(a, step), (b, step)]) - psi_at([(a, step), (b, -step)])
                  - psi_at([(a, -step), (b, step)]) + psi_at([(a, -step), (b, -step)])) / (4 * step**2)
        lhs.append(float(cov[a, b]))
        rhs.append(d2 / inst.gamma**2)
    diff = np.abs(np.array(lhs) - np.array(rhs))
    return CovarianceCheck(float(diff.max()) if len(diff) else 0.0, pairs, lhs, rhs)


@dataclass
class ScanResult:
    grid: np.ndarray
    residuals: list
    integral: float
    integral_error: float

    @property
    def integrand(self) -> np.ndarray:
        return np.abs([r.delta_hat for r in self.residuals])

    @property
    def integrand_errors(self) -> np.ndarray:
        return np.array([r.std_error for r in self.residuals])


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.zeros(len(grid))
    dx = np.diff(grid)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def averaged_identity_scan(spec: ModelSpec, n: int, func: Union[str, OverlapFunctional], interval: tuple,
                           grid_points: int, samples: int, replica_draws: int, master_seed: int) -> ScanResult:
    """Trapezoid estimate of the integral of |delta_N(gamma)| over ``interval``.

    The error bound sums weighted per-point errors (correct for arbitrarily correlated
    points, which they are under common random numbers).
    """
    if grid_points < 5:
        raise ValueError("need at least 5 grid points")
    if isinstance(func, str):
        func = named_functional(func, n)
    grid = np.linspace(interval[0], interval[1], grid_points)
    residuals = []
    for g in grid:
        s_g = spec.with_(gamma=float(g))
        make = _instances(s_g, master_seed)
        residuals.append(gg_residual(lambda s: GibbsEnsemble(make(s)), n, func, samples, replica_draws,
                                     master_seed))
    w = trapezoid_weights(grid)
    vals = np.abs([r.delta_hat for r in residuals])
    errs = np.array([r.std_error for r in residuals])
    return ScanResult(grid, residuals, float(w @ vals), float(w @ errs))


@dataclass(frozen=True)
class ProofBound:
    lhs: float
    lhs_error: float
    rhs: float
    var_psi: float
    n_features: int
    N: int
    layer: str = "perturbation"

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 3 * self.lhs_error


def proof_bound_rhs(n_features: int, N: int, gamma: float, var_psi: float) -> float:
    return n_features * math.sqrt(24.0 * var_psi) / (N * gamma**2) + 2.0 * n_features / N**2


def proof_bound_check(source: Source, samples: int, master_seed: int) -> ProofBound:
    """E<(H - <H>)^2> against |A| sqrt(4! Var psi_N) / (N gamma^2) + 2|A|/N^2 on shared samples."""
    make = _instances(source, master_seed)
    first = make(0)
    if first.gamma == 0:
        raise ValueError("gamma = 0: the bound divides by gamma^2")
    if samples < MIN_DISORDER_SAMPLES:
        raise ValueError(f"need at least {MIN_DISORDER_SAMPLES} disorder samples")
    gvar, psis = [], []
    for s in range(samples):
        ens = GibbsEnsemble(first if s == 0 else make(s), mode="exact")
        gvar.append(ens.h_variance)
        psis.append(ens.free_energy)
    lhs = QuenchedEstimate.from_values(gvar)
    var_psi = float(np.var(psis, ddof=1))
    rhs = proof_bound_rhs(first.n_features, first.n, first.gamma, var_psi)
    return ProofBound(lhs.mean, lhs.std_error, rhs, var_psi, first.n_features, first.n, _layer(source))


@dataclass(frozen=True)
class JensenCheck:
    nu_H: float
    dp_dgamma: float
    E_abs_gibbsH_minus_nuH: float
    stat_error: float

    @property
    def holds(self) -> bool:
        return abs(self.nu_H - self.dp_dgamma) <= self.E_abs_gibbsH_minus_nuH + self.stat_error


def jensen_check(spec: ModelSpec, samples: int, master_seed: int, step: float = FIRST_DERIVATIVE_STEP) -> JensenCheck:
    """|nu(H) - p_N'| <= E|<H> - nu(H)|, with p_N' from common-random-number differences of psi_N."""
    make = _instances(spec, master_seed)
    hm, dp = [], []
    for s in range(samples):
        inst = make(s)
        hm.append(GibbsEnsemble(inst, mode="exact").h_mean)
        dp.append((psi(inst.with_gamma(inst.gamma + step)) - psi(inst.with_gamma(inst.gamma - step))) / (2 * step))
    hm = np.array(hm)
    dp = np.array(dp)
    nu_h = hm.mean()
    stat = 3 * float((hm - dp).std(ddof=1) / math.sqrt(samples)) + 1e-12
    return JensenCheck(float(nu_h), float(dp.mean()), float(np.abs(hm - nu_h).mean()), stat)
