"""Replica overlaps and Ghirlanda-Guerra diagnostics.

Overlap arrays are stored as (M, n(n-1)/2) with pairs in the order
(1,2), (1,3), ..., (1,n), (2,3), ... (see :func:`pair_list`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from gglab.gibbs import GibbsEnsemble, MCMC_BURN_IN, MCMC_THIN, MCMCSampler
from gglab.model import ModelInstance, ModelSpec, self_overlap_constant

DEFAULT_BINS = 41
MIN_DISORDER_SAMPLES = 8
GG_CAVEAT = (
    "finite-N diagnostic: the identities are claimed at differentiability points of the limiting "
    "free energy, which no finite-N run can certify"
)


def pair_list(n: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a + 1, n)]


def pair_column(n: int, a: int, b: int) -> int:
    """Column of R_{a,b} (0-based replica indices) in an overlap array for n replicas."""
    a, b = min(a, b), max(a, b)
    return pair_list(n).index((a, b))


def overlap(instance: ModelInstance, a, b) -> float | np.ndarray:
    """Generalized overlap (1/N) sum_a f_a(s1) f_a(s2); batched if inputs are 2-D."""
    fa = instance.features.values(a)
    fb = instance.features.values(b)
    r = (fa * fb).sum(axis=1) / instance.n
    return float(r[0]) if np.ndim(a) == 1 and np.ndim(b) == 1 else r


def overlap_array(instance: ModelInstance, replicas: np.ndarray) -> np.ndarray:
    """All pairwise overlaps of (M, k, N) replica tuples -> (M, k(k-1)/2)."""
    M, k, N = replicas.shape
    F = instance.features.values(replicas.reshape(M * k, N)).reshape(M, k, -1)
    return np.stack([(F[:, a] * F[:, b]).sum(axis=1) for a, b in pair_list(k)], axis=1) / instance.n


def h_statistic(instance: ModelInstance, config) -> float | np.ndarray:
    """H = (1/N) sum_a g_a f_a(s). Independent of gamma."""
    h = instance.h_values(config)
    return float(h[0]) if np.ndim(config) == 1 else h


@dataclass(frozen=True)
class OverlapFunctional:
    """Bounded function of the overlap array of ``arity`` replicas."""

    name: str
    arity: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    bound: float

    def __post_init__(self):
        if self.arity < 2:
            raise ValueError("functional arity must be >= 2")

    def __call__(self, overlaps: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(overlaps), dtype=np.float64)

    def check_bound(self, r11: float = 1.0, probes: int = 256) -> bool:
        u = np.random.default_rng(0).uniform(-r11, r11, size=(probes, self.arity * (self.arity - 1) // 2))
        return bool(np.all(np.abs(self(u)) <= self.bound + 1e-12))


def _bump(r, q0=0.5, width=0.05):
    return 0.5 * (1.0 + np.tanh((r - q0) / width))


FUNCTIONALS = {
    "one": lambda n, r11: OverlapFunctional("one", n, lambda R: np.ones(len(R)), 1.0),
    "r12": lambda n, r11: OverlapFunctional("r12", n, lambda R: R[:, 0], r11),
    "r12_squared": lambda n, r11: OverlapFunctional("r12_squared", n, lambda R: R[:, 0] ** 2, r11**2),
    "tanh5_r12": lambda n, r11: OverlapFunctional("tanh5_r12", n, lambda R: np.tanh(5.0 * R[:, 0]), 1.0),
    "overlap_product": lambda n, r11: OverlapFunctional(
        "overlap_product", n, lambda R: R.prod(axis=1), r11 ** (n * (n - 1) // 2)
    ),
    "bump_r12": lambda n, r11: OverlapFunctional("bump_r12", n, lambda R: _bump(R[:, 0]), 1.0),
}


def functional(name: str, n: int = 2, r11: float = 1.0) -> OverlapFunctional:
    """Library functional by name; ``r11`` sets the bound of overlap-valued ones."""
    try:
        return FUNCTIONALS[name](n, r11)
    except KeyError:
        raise KeyError(f"unknown functional {name!r}; available: {sorted(FUNCTIONALS)}") from None


def _as_ensemble(obj) -> GibbsEnsemble:
    return obj if isinstance(obj, GibbsEnsemble) else GibbsEnsemble(obj)


def draw_tuples(ensemble: GibbsEnsemble, k: int, count: int, stream_seed: int, stream_index: int = 0) -> np.ndarray:
    """``count`` tuples of ``k`` independent replicas, shape (count, k, N)."""
    draws = ensemble.sampler(stream_seed, stream_index).draw(count * k)
    return draws.reshape(count, k, ensemble.n)


def _batch_error(values: np.ndarray, batches: int) -> float:
    B = min(batches, len(values))
    means = np.array([c.mean() for c in np.array_split(values, B)])
    return float(means.std(ddof=1) / math.sqrt(B))


def gibbs_expectation(ensemble, func: OverlapFunctional, draws: int, stream_seed: int, stream_index: int = 0,
                      permutation=None, batches: int = 16) -> tuple[float, float]:
    """Monte Carlo <f(R_n)> over ``draws`` i.i.d. replica n-tuples; error from batch means.

    ``permutation`` relabels the replicas of every tuple before overlaps are taken.
    """
    ensemble = _as_ensemble(ensemble)
    if draws < 2:
        raise ValueError("need at least two replica tuples")
    reps = draw_tuples(ensemble, func.arity, draws, stream_seed, stream_index)
    if permutation is not None:
        reps = reps[:, list(permutation)]
    vals = func(overlap_array(ensemble.instance, reps))
    return float(vals.mean()), _batch_error(vals, batches)


@dataclass(frozen=True)
class ResidualEstimate:
    """delta = nu(R_{1,n+1} f) - nu(R_{1,2}) nu(f) / n - sum_{l=2..n} nu(R_{1,l} f) / n."""

    n: int
    nu_last_f: float
    nu_r12_nu_f: float
    sum_nu_r1l_f: float
    std_error: float
    n_disorder: int
    n_replica_draws: int
    functional: str = ""

    @property
    def components(self) -> tuple[float, float, float]:
        return self.nu_last_f, self.nu_r12_nu_f, self.sum_nu_r1l_f

    @property
    def delta_hat(self) -> float:
        return self.nu_last_f - self.nu_r12_nu_f / self.n - self.sum_nu_r1l_f / self.n


def _residual_parts(A, B, C, D, n):
    even, odd = slice(0, None, 2), slice(1, None, 2)
    cross = 0.5 * (B[even].mean() * C[odd].mean() + B[odd].mean() * C[even].mean())
    return A.mean(), cross, D.mean()


def residual_from_samples(A, B, C, D, n: int, n_blocks: int = 32, **meta) -> ResidualEstimate:
    """Combine per-disorder-sample Gibbs averages into a residual estimate.

    A = <R_{1,n+1} f>, B = <R_{1,2}>, C = <f>, D = sum_{l=2..n} <R_{1,l} f>, one entry per
    sample. The product nu(R_{1,2}) nu(f) pairs even-indexed with odd-indexed samples so that
    no sample meets itself. The standard error is a delete-one-block jackknife over samples.
    """
    A, B, C, D = (np.asarray(x, dtype=np.float64) for x in (A, B, C, D))
    S = len(A)
    if S < MIN_DISORDER_SAMPLES:
        raise ValueError(f"need at least {MIN_DISORDER_SAMPLES} disorder samples for an error estimate")
    full = _residual_parts(A, B, C, D, n)
    nb = min(n_blocks, S)
    blocks = np.array_split(np.arange(S), nb)
    deltas = []
    for blk in blocks:
        keep = np.setdiff1d(np.arange(S), blk)
        a, c, d = _residual_parts(A[keep], B[keep], C[keep], D[keep], n)
        deltas.append(a - c / n - d / n)
    deltas = np.array(deltas)
    se = math.sqrt((nb - 1) / nb * ((deltas - deltas.mean()) ** 2).sum())
    return ResidualEstimate(n, *map(float, full), std_error=se, n_disorder=S, **meta)


def sample_residual_terms(ensemble: GibbsEnsemble, n: int, func: OverlapFunctional, replica_draws: int,
                          stream_seed: int, stream_index: int) -> tuple[float, float, float, float]:
    """(A, B, C, D) Gibbs averages for one disorder sample from (n+1)-replica tuples."""
    reps = draw_tuples(ensemble, n + 1, replica_draws, stream_seed, stream_index)
    R = overlap_array(ensemble.instance, reps)
    inner = [pair_column(n + 1, a, b) for a, b in pair_list(n)]
    f = func(R[:, inner])
    last = R[:, pair_column(n + 1, 0, n)]
    r1l = sum(R[:, pair_column(n + 1, 0, l)] for l in range(1, n))
    return float((last * f).mean()), float(R[:, 0].mean()), float(f.mean()), float((r1l * f).mean())


def gg_residual(factory: Callable[[int], object], n: int, func: OverlapFunctional, disorder_samples: int,
                replica_draws: int, master_seed: int, check_self_overlap: bool = True) -> ResidualEstimate:
    """Estimate the GG residual delta_N by an outer average over fresh disorder.

    ``factory(sample_index)`` returns a :class:`ModelInstance` or :class:`GibbsEnsemble`
    for that disorder sample. Replica streams are keyed by (master_seed, sample_index).
    """
    if func.arity != n:
        raise ValueError(f"functional arity {func.arity} does not match n={n}")
    if disorder_samples < MIN_DISORDER_SAMPLES:
        raise ValueError(f"need at least {MIN_DISORDER_SAMPLES} disorder samples for an error estimate")
    terms = np.empty((disorder_samples, 4))
    for s in range(disorder_samples):
        ens = _as_ensemble(factory(s))
        if s == 0 and check_self_overlap:
            self_overlap_constant(ens.instance)
        terms[s] = sample_residual_terms(ens, n, func, replica_draws, master_seed, s)
    return residual_from_samples(*terms.T, n=n, n_replica_draws=replica_draws * disorder_samples,
                                 functional=func.name)


def product_measure_r12_residual(N: int, m: float) -> float:
    """Exact delta_N for n=2, f=R_{1,2} when the Gibbs measure is a product of site laws with mean m.

    Diagonal terms i=j keep nu(R_{1,2} R_{1,3}) and nu(R_{1,2}^2) from factoring, leaving
    -(1 - m^2)^2 / (2N); the residual vanishes only as N grows.
    """
    return -((1.0 - m * m) ** 2) / (2.0 * N)


def spec_factory(spec: ModelSpec, master_seed: int) -> Callable[[int], GibbsEnsemble]:
    return lambda s: GibbsEnsemble(spec.build(master_seed, s))


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float


@dataclass(frozen=True)
class SelfAveragingReport:
    """Statistics of H under nu used by the self-averaging argument.

    ``nu_abs_H_minus_nuH <= E_abs_gibbsH_minus_nuH + nu_abs_H_minus_gibbsH`` holds draw by
    draw (triangle inequality) and therefore exactly for these paired estimates.
    """

    nu_H: Estimate
    nu_abs_H_minus_nuH: Estimate
    E_abs_gibbsH_minus_nuH: Estimate
    nu_abs_H_minus_gibbsH: Estimate
    nu_gibbs_var_H: Estimate
    n_disorder: int
    replica_draws: int
    note: str = GG_CAVEAT

    @property
    def decomposition_holds(self) -> bool:
        lhs = self.nu_abs_H_minus_nuH.value
        rhs = self.E_abs_gibbsH_minus_nuH.value + self.nu_abs_H_minus_gibbsH.value
        return lhs <= rhs + 1e-12


def _qe(x) -> Estimate:
    x = np.asarray(x, dtype=np.float64)
    return Estimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))))


def self_averaging_report(spec: ModelSpec, disorder_samples: int, replica_draws: int, master_seed: int,
                          factory: Optional[Callable[[int], object]] = None) -> SelfAveragingReport:
    """nu|H - nu(H)|, E|<H> - nu(H)|, nu|H - <H>| and E<(H - <H>)^2>.

    Gibbs means and variances of H are exact per sample; |H - c| terms average
    ``replica_draws`` exact replica draws per sample.
    """
    if disorder_samples < MIN_DISORDER_SAMPLES:
        raise ValueError(f"need at least {MIN_DISORDER_SAMPLES} disorder samples for an error estimate")
    factory = factory or spec_factory(spec, master_seed)
    gibbs_mean = np.empty(disorder_samples)
    gibbs_var = np.empty(disorder_samples)
    h_draws = np.empty((disorder_samples, replica_draws))
    for s in range(disorder_samples):
        ens = _as_ensemble(factory(s))
        gibbs_mean[s] = ens.h_mean
        gibbs_var[s] = ens.h_variance
        h_draws[s] = ens.instance.h_values(ens.sampler(master_seed, s).draw(replica_draws))
    nu_h = gibbs_mean.mean()
    return SelfAveragingReport(
        nu_H=_qe(gibbs_mean),
        nu_abs_H_minus_nuH=_qe(np.abs(h_draws - nu_h).mean(axis=1)),
        E_abs_gibbsH_minus_nuH=_qe(np.abs(gibbs_mean - nu_h)),
        nu_abs_H_minus_gibbsH=_qe(np.abs(h_draws - gibbs_mean[:, None]).mean(axis=1)),
        nu_gibbs_var_H=_qe(gibbs_var),
        n_disorder=disorder_samples,
        replica_draws=replica_draws,
    )


@dataclass(frozen=True)
class OverlapHistogram:
    counts: np.ndarray
    edges: np.ndarray
    r11: float

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / max(self.total, 1)


def histogram_edges(r11: float, bins: int = DEFAULT_BINS) -> np.ndarray:
    return np.linspace(-r11, r11, bins + 1)


def bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin of each value; the top edge belongs to the last bin, tiny overshoot is clipped."""
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def histogram_from_overlaps(values: np.ndarray, r11: float, bins: int = DEFAULT_BINS) -> OverlapHistogram:
    edges = histogram_edges(r11, bins)
    counts = np.bincount(bin_index(np.asarray(values), edges), minlength=bins)
    return OverlapHistogram(counts, edges, r11)


def overlap_histogram(ensemble, pairs: int, bins: int = DEFAULT_BINS, stream_seed: int = 0,
                      stream_index: int = 0) -> OverlapHistogram:
    """Empirical law of R_{1,2} over i.i.d. replica pairs; edges uniform on [-R11, R11]."""
    ensemble = _as_ensemble(ensemble)
    r11 = self_overlap_constant(ensemble.instance)
    reps = draw_tuples(ensemble, 2, pairs, stream_seed, stream_index)
    return histogram_from_overlaps(overlap_array(ensemble.instance, reps)[:, 0], r11, bins)


def mcmc_overlap_histogram(instance: ModelInstance, pairs: int, bins: int = DEFAULT_BINS, stream_seed: int = 0,
                           burn_in: int = MCMC_BURN_IN, thin: int = MCMC_THIN) -> OverlapHistogram:
    """Same as :func:`overlap_histogram` with two independent Glauber chains as the replicas."""
    r11 = self_overlap_constant(instance)
    sweeps = burn_in + pairs * thin
    a = MCMCSampler(instance, sweeps, burn_in, thin, stream_seed, 0).samples()
    b = MCMCSampler(instance, sweeps, burn_in, thin, stream_seed, 1).samples()
    return histogram_from_overlaps(overlap(instance, a, b), r11, bins)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


@dataclass
class ExtendedGGTable:
    """Binned conditional law of R_{1,n+1} given R_n vs the extended-GG mixture."""

    n: int
    edges: np.ndarray
    cells: list = field(default_factory=list)  # (cell key, count, conditional freq, mixture freq, tv)
    empty_cells: int = 0
    empty_cell_keys: list = field(default_factory=list)
    summary_tv: float = 0.0
    note: str = GG_CAVEAT


def extended_gg_diagnostic(factory: Callable[[int], object], n: int, disorder_samples: int, replica_draws: int,
                           bins: int, master_seed: int) -> ExtendedGGTable:
    """Compare, cell by cell of binned R_n, the law of R_{1,n+1} with
    (1/n) L(R_{1,2}) + (1/n) sum_{l=2..n} delta_{R_{1,l}} under nu (all disorder pooled)."""
    if n not in (2, 3):
        raise ValueError("extended diagnostic supports n = 2 or 3")
    R = []
    r11 = None
    for s in range(disorder_samples):
        ens = _as_ensemble(factory(s))
        if r11 is None:
            r11 = self_overlap_constant(ens.instance)
        R.append(overlap_array(ens.instance, draw_tuples(ens, n + 1, replica_draws, master_seed, s)))
    R = np.concatenate(R)
    edges = histogram_edges(r11, bins)
    inner = [pair_column(n + 1, a, b) for a, b in pair_list(n)]
    keys = bin_index(R[:, inner], edges)
    target = bin_index(R[:, pair_column(n + 1, 0, n)], edges)
    law_r12 = np.bincount(bin_index(R[:, 0], edges), minlength=bins) / len(R)
    point_cols = [pair_column(n + 1, 0, l) for l in range(1, n)]

    table = ExtendedGGTable(n=n, edges=edges)
    flat = np.ravel_multi_index(keys.T, (bins,) * len(inner))
    occupied = np.unique(flat)
    table.empty_cells = bins ** len(inner) - len(occupied)
    if n == 2:
        table.empty_cell_keys = sorted(set(range(bins)) - set(occupied.tolist()))
    weighted = 0.0
    for cell in occupied:
        sel = flat == cell
        cnt = int(sel.sum())
        cond = np.bincount(target[sel], minlength=bins) / cnt
        mix = law_r12 / n
        for col in point_cols:
            mix = mix + np.bincount(bin_index(R[sel, col], edges), minlength=bins) / (cnt * n)
        tv = total_variation(cond, mix)
        key = tuple(int(k) for k in np.unravel_index(cell, (bins,) * len(inner)))
        table.cells.append((key, cnt, cond, mix, tv))
        weighted += cnt * tv
    table.summary_tv = weighted / len(R)
    return table
