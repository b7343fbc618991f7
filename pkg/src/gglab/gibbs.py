"""Exact finite-N Gibbs computations and replica samplers."""

from __future__ import annotations

from functools import cached_property

import numpy as np

from gglab import kernels, rng
from gglab.model import ModelInstance

N_MAX_EXACT = 24
MCMC_BURN_IN = 100
MCMC_THIN = 10


class ExactModeError(RuntimeError):
    """Exact enumeration requested beyond the size limit; use MCMC mode instead."""


class GibbsEnsemble:
    """Gibbs measure of one :class:`ModelInstance`.

    Exact quantities are computed lazily and cached: two streaming passes over
    the Gray-code path (log-partition, then moments) that never store the 2**N
    weights. The dense probability table (8 bytes * 2**N, 128 MiB at N=24) is
    only built when sampling or dense observables are requested.
    """

    def __init__(self, instance: ModelInstance, mode: str = "auto", n_max_exact: int = N_MAX_EXACT):
        if mode not in ("auto", "exact", "mcmc"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "auto":
            mode = "exact" if instance.n <= n_max_exact else "mcmc"
        if mode == "exact" and instance.n > n_max_exact:
            raise ExactModeError(f"N={instance.n} exceeds exact limit {n_max_exact}; use mode='mcmc'")
        self.instance = instance
        self.mode = mode
        self.n_max_exact = n_max_exact

    @property
    def n(self) -> int:
        return self.instance.n

    def _require_exact(self):
        if self.mode != "exact":
            raise ExactModeError(
                f"exact computation unavailable in {self.mode} mode (N={self.n}, limit {self.n_max_exact})"
            )

    @cached_property
    def log_partition(self) -> float:
        self._require_exact()
        if "log_weights" in self.__dict__:
            return kernels.table_logsumexp(self.log_weights)
        return kernels.log_partition(self.instance.hamiltonian, self.instance.base_callable)

    @property
    def free_energy(self) -> float:
        return self.log_partition / self.n

    @cached_property
    def _moments(self):
        inst = self.instance
        return kernels.moments(inst.hamiltonian, inst.h_coeffs, inst.feature_terms, self.log_partition,
                               inst.base_callable)

    @cached_property
    def feature_averages(self) -> np.ndarray:
        """<f_a> in feature order."""
        fs = self.instance.features
        mom = self._moments[0]
        return np.bincount(fs.term_feature, weights=fs.term_weight * mom, minlength=fs.size)

    @property
    def h_mean(self) -> float:
        """<H>, H = (1/N) sum_a g_a f_a."""
        return self._moments[1]

    @property
    def h_second_moment(self) -> float:
        return self._moments[2]

    @property
    def h_variance(self) -> float:
        """<(H - <H>)^2>, clipped at 0 against rounding."""
        return max(self.h_second_moment - self.h_mean**2, 0.0)

    @property
    def total_mass(self) -> float:
        return self._moments[3]

    @cached_property
    def pair_overlap_moment(self) -> float:
        """<R_{1,2}> = (1/N) sum_a <f_a>^2."""
        return float(self.feature_averages @ self.feature_averages) / self.n

    @cached_property
    def log_weights(self) -> np.ndarray:
        self._require_exact()
        return kernels.log_weight_table(self.instance.hamiltonian, self.instance.base_callable)

    @cached_property
    def probabilities(self) -> np.ndarray:
        lw = self.log_weights
        return np.exp(lw - self.log_partition)

    @cached_property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probabilities)

    def _dense_chunks(self, chunk: int = 1 << 14):
        p = self.probabilities
        for start in range(0, len(p), chunk):
            codes = np.arange(start, min(len(p), start + chunk))
            yield p[codes], kernels.spins_from_codes(codes, self.n)

    def feature_covariance(self) -> np.ndarray:
        """Exact <f_a f_b> - <f_a><f_b> from the dense table."""
        fs = self.instance.features
        second = np.zeros((fs.size, fs.size))
        for p, spins in self._dense_chunks():
            F = fs.values(spins)
            second += (F * p[:, None]).T @ F
        m = self.feature_averages
        return second - np.outer(m, m)

    def expect(self, fn) -> float:
        """Exact <fn(s)> for a function vectorized over (M, N) spin arrays."""
        total = 0.0
        for p, spins in self._dense_chunks():
            total += float(p @ np.asarray(fn(spins), dtype=np.float64))
        return total

    def sampler(self, stream_seed: int, stream_index: int = 0):
        """i.i.d. replica source: exact inverse-CDF in exact mode, a Glauber chain otherwise."""
        if self.mode == "exact":
            return ExactReplicaSampler(self, stream_seed, stream_index)
        return McmcReplicaSampler(self.instance, stream_seed, stream_index)


class ExactReplicaSampler:
    """Exact i.i.d. draws by inverse CDF over the enumerated probability table."""

    def __init__(self, ensemble: GibbsEnsemble, stream_seed: int, stream_index: int = 0):
        ensemble._require_exact()
        self.ensemble = ensemble
        self._gen = rng.generator(stream_seed, stream_index, rng.REPLICA)

    def draw_codes(self, count: int) -> np.ndarray:
        cdf = self.ensemble.cdf
        u = self._gen.random(count) * cdf[-1]
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)

    def draw(self, count: int) -> np.ndarray:
        """``count`` configurations, shape (count, N), int8."""
        return kernels.spins_from_codes(self.draw_codes(count), self.ensemble.n)

    def __iter__(self):
        while True:
            yield from self.draw(1024)


class MCMCSampler:
    """Single-site Glauber dynamics, sequential scan.

    One sweep is N site updates in index order; flip probability
    1 / (1 + exp(energy_delta)). After ``burn_in`` sweeps, every ``thin``-th
    sweep yields a configuration, up to ``sweeps`` sweeps in total.
    Equilibration is the caller's responsibility.
    """

    def __init__(self, instance: ModelInstance, sweeps: int, burn_in: int = MCMC_BURN_IN, thin: int = MCMC_THIN,
                 stream_seed: int = 0, stream_index: int = 0):
        if not sweeps > burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if thin < 1:
            raise ValueError("thin must be >= 1")
        self.instance = instance
        self.sweeps, self.burn_in, self.thin = sweeps, burn_in, thin
        self.n_samples = (sweeps - burn_in) // thin
        n = instance.n
        init = rng.uniforms(stream_seed, stream_index, rng.MCMC_INIT, n)
        self.spins = np.where(init < 0.5, 1, -1).astype(np.int8)
        h = instance.hamiltonian
        self.mono = kernels.monomials(self.spins[None], h.term_idx)[0].copy()
        self._gen = rng.generator(stream_seed, stream_index, rng.MCMC)
        self._burned = False

    def _run(self, n_sweeps: int, out: np.ndarray):
        n = self.instance.n
        u = self._gen.random(n_sweeps * n)
        kernels.glauber(self.instance.hamiltonian, self.spins, self.mono, u, self.thin if len(out) else 1, out,
                        self.instance.base_callable)

    def _burn(self):
        if not self._burned:
            left = self.burn_in
            while left > 0:
                step = min(left, 10_000)
                self._run(step, np.zeros((0, self.instance.n), dtype=np.int8))
                left -= step
            self._burned = True

    def take(self, count: int, chunk: int = 2048) -> np.ndarray:
        """Continue the chain for ``count`` thinned samples (ignores the ``sweeps`` budget)."""
        self._burn()
        out = np.empty((count, self.instance.n), dtype=np.int8)
        done = 0
        while done < count:
            k = min(chunk, count - done)
            self._run(k * self.thin, out[done : done + k])
            done += k
        return out

    def samples(self) -> np.ndarray:
        """All (sweeps - burn_in) // thin samples of the configured run."""
        return self.take(self.n_samples)

    def __iter__(self):
        yield from self.samples()


class McmcReplicaSampler:
    """Replica source for N beyond exact enumeration: consecutive thinned states of one chain."""

    def __init__(self, instance: ModelInstance, stream_seed: int, stream_index: int = 0):
        self.chain = MCMCSampler(instance, sweeps=MCMC_BURN_IN + 1, stream_seed=stream_seed,
                                 stream_index=stream_index)

    def draw(self, count: int) -> np.ndarray:
        return self.chain.take(count)


def log_partition(instance: ModelInstance) -> float:
    return GibbsEnsemble(instance, mode="exact").log_partition


def free_energy_per_site(instance: ModelInstance) -> float:
    """psi_N = log Z / N."""
    return GibbsEnsemble(instance, mode="exact").free_energy


def feature_averages(instance: ModelInstance) -> np.ndarray:
    """Exact <f_a>, ordered as ``instance.features.labels``."""
    return GibbsEnsemble(instance, mode="exact").feature_averages


def pair_overlap_moment(instance: ModelInstance) -> float:
    return GibbsEnsemble(instance, mode="exact").pair_overlap_moment


def exact_replica_sampler(ensemble: GibbsEnsemble, stream_seed: int, stream_index: int = 0) -> ExactReplicaSampler:
    return ExactReplicaSampler(ensemble, stream_seed, stream_index)


def mcmc_sampler(instance: ModelInstance, sweeps: int, burn_in: int = MCMC_BURN_IN, thin: int = MCMC_THIN,
                 stream_seed: int = 0, stream_index: int = 0) -> MCMCSampler:
    return MCMCSampler(instance, sweeps, burn_in, thin, stream_seed, stream_index)
