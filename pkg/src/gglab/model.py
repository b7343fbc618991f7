"""Disordered spin models of the form

    G(s) ~ mu(s) * exp(gamma * sum_a g_a f_a(s)),   s in {-1, +1}^N,

with a (possibly random) base weight ``mu``, bounded features ``f_a`` and an
i.i.d. standard gaussian perturbation field ``g_a``.

Everything is stored as multilinear polynomials in the spins. Any function on
the hypercube has such an expansion, so this is a representation choice, not a
restriction; :meth:`FeatureSet.from_functions` computes it for black-box
features on small systems.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from gglab import kernels, rng

Term = tuple[float, tuple[int, ...]]


class SelfOverlapError(ValueError):
    """Raised when R_{1,1} is not the same for every configuration."""


class FeatureRangeError(ValueError):
    pass


def as_spins(config, n: int) -> np.ndarray:
    s = np.asarray(config)
    if s.shape[-1] != n:
        raise ValueError(f"configuration length {s.shape[-1]} does not match N={n}")
    if not np.all((s == 1) | (s == -1)):
        raise ValueError("spins must be exactly -1 or +1")
    return s.astype(np.int8)


def flip(config, site: int) -> np.ndarray:
    out = np.array(config, dtype=np.int8, copy=True)
    out[..., site] = -out[..., site]
    return out


def code_from_spins(config) -> int:
    s = np.asarray(config)
    return int(sum(1 << i for i, v in enumerate(s) if v < 0))


def _csr(subsets: Sequence[Sequence[int]], n: int):
    ptr = np.zeros(len(subsets) + 1, dtype=np.int64)
    flat = []
    for t, sub in enumerate(subsets):
        sub = tuple(int(i) for i in sub)
        if len(set(sub)) != len(sub):
            raise ValueError(f"repeated site in monomial {sub}")
        if any(i < 0 or i >= n for i in sub):
            raise ValueError(f"site out of range in monomial {sub}")
        flat.extend(sub)
        ptr[t + 1] = len(flat)
    return ptr, np.asarray(flat, dtype=np.int64)


@dataclass(frozen=True)
class Hamiltonian:
    """Polynomial log-weight in kernel layout: sum_t coeffs[t] prod_{S_t} s."""

    n: int
    term_ptr: np.ndarray
    term_sites: np.ndarray
    coeffs: np.ndarray

    @cached_property
    def site_ptr(self) -> np.ndarray:
        counts = np.bincount(self.term_sites, minlength=self.n)
        return np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    @cached_property
    def site_terms(self) -> np.ndarray:
        owner = np.repeat(np.arange(len(self.term_ptr) - 1), np.diff(self.term_ptr))
        order = np.argsort(self.term_sites, kind="stable")
        return np.ascontiguousarray(owner[order], dtype=np.int64)

    @cached_property
    def term_idx(self) -> np.ndarray:
        return kernels.padded_term_index(self.n, self.term_ptr, self.term_sites)


class FeatureSet:
    """Features f_a, each a short linear combination of spin monomials.

    ``terms[a]`` is a list of ``(weight, sites)`` pairs and
    ``f_a(s) = sum weight * prod_{i in sites} s_i``. ``density`` is the declared
    constant c in |A| <= c N; exceeding it only warns.
    """

    def __init__(self, n: int, terms: Sequence[Sequence[Term]], labels=None, density: float = 4.0):
        if n < 1:
            raise ValueError("N must be positive")
        self.n = n
        self.labels = list(labels) if labels is not None else list(range(len(terms)))
        if len(self.labels) != len(terms):
            raise ValueError("one label per feature")
        self.density = density
        weights, subsets, owner = [], [], []
        for a, feat in enumerate(terms):
            for w, sub in feat:
                weights.append(float(w))
                subsets.append(tuple(sub))
                owner.append(a)
        self.term_ptr, self.term_sites = _csr(subsets, n)
        self.term_weight = np.asarray(weights, dtype=np.float64)
        self.term_feature = np.asarray(owner, dtype=np.int64)
        self.size = len(terms)
        if self.size > density * n:
            warnings.warn(
                f"|A_N|={self.size} exceeds the declared bound {density}*N={density * n}",
                stacklevel=2,
            )
        self._validate_range()

    @classmethod
    def empty(cls, n: int) -> "FeatureSet":
        return cls(n, [])

    @classmethod
    def sites(cls, n: int) -> "FeatureSet":
        return cls(n, [[(1.0, (i,))] for i in range(n)], labels=list(range(n)))

    @classmethod
    def edges(cls, n: int, edges: Sequence[tuple[int, int]]) -> "FeatureSet":
        return cls(n, [[(1.0, tuple(e))] for e in edges], labels=[tuple(e) for e in edges])

    @classmethod
    def p_subsets(cls, n: int, p: int) -> "FeatureSet":
        subs = list(itertools.combinations(range(n), p))
        return cls(n, [[(1.0, s)] for s in subs], labels=subs, density=math.inf)

    @classmethod
    def from_functions(cls, n: int, functions: Sequence[Callable], tol: float = 1e-13) -> "FeatureSet":
        """Walsh expansion of black-box features (vectorized over an (M, n) spin array).

        Exhaustive over 2**n points, so only for small n.
        """
        if n > 16:
            raise ValueError("exact Walsh expansion limited to n <= 16")
        spins = kernels.spins_from_codes(np.arange(1 << n), n)
        subsets = [s for k in range(n + 1) for s in itertools.combinations(range(n), k)]
        idx = kernels.padded_term_index(n, *_csr(subsets, n))
        basis = kernels.monomials(spins, idx)
        terms = []
        for fn in functions:
            vals = np.asarray(fn(spins), dtype=np.float64)
            coef = basis.T @ vals / (1 << n)
            terms.append([(c, s) for c, s in zip(coef, subsets) if abs(c) > tol])
        return cls(n, terms)

    @cached_property
    def term_idx(self) -> np.ndarray:
        return kernels.padded_term_index(self.n, self.term_ptr, self.term_sites)

    @cached_property
    def aggregator(self) -> np.ndarray:
        agg = np.zeros((len(self.term_weight), self.size))
        agg[np.arange(len(self.term_weight)), self.term_feature] = self.term_weight
        return agg

    def values(self, spins) -> np.ndarray:
        """f_a(s) for a batch of configurations, shape (M, |A|)."""
        spins = np.atleast_2d(spins)
        return kernels.monomials(spins, self.term_idx) @ self.aggregator

    def _validate_range(self):
        probe = probe_configurations(self.n, extra=256)
        if self.size and np.abs(self.values(probe)).max() > 1.0 + 1e-12:
            raise FeatureRangeError("feature value outside [-1, 1]")


def probe_configurations(n: int, extra: int = 32) -> np.ndarray:
    """All-plus, all-minus, alternating and ``extra`` seeded random configurations."""
    fixed = [np.ones(n), -np.ones(n), np.where(np.arange(n) % 2 == 0, 1, -1)]
    u = rng.uniforms(0, 0, rng.PROBE, extra * n).reshape(extra, n)
    rand = np.where(u < 0.5, 1, -1)
    return np.vstack(fixed + [rand]).astype(np.int8)


@dataclass(frozen=True)
class ModelInstance:
    """One disorder realization of a model; immutable.

    Log-weight: ``sum_t (base_fixed + base_scale * base_gaussians)_t m_t(s)
    + base_callable(s) + gamma * sum_a g_a f_a(s)`` with base monomials m_t.
    """

    n: int
    features: FeatureSet
    perturbation: np.ndarray
    gamma: float
    base_ptr: np.ndarray
    base_sites: np.ndarray
    base_fixed: np.ndarray
    base_scale: np.ndarray
    base_gaussians: np.ndarray
    base_callable: Optional[Callable] = None
    model: str = "generalized"
    params: dict = field(default_factory=dict)
    master_seed: int = 0
    sample_index: int = 0

    @property
    def n_features(self) -> int:
        return self.features.size

    @cached_property
    def n_base_terms(self) -> int:
        return len(self.base_ptr) - 1

    @cached_property
    def base_coeffs(self) -> np.ndarray:
        return self.base_fixed + self.base_scale * self.base_gaussians

    @cached_property
    def hamiltonian(self) -> Hamiltonian:
        fs = self.features
        ptr = np.concatenate([self.base_ptr, self.base_ptr[-1] + fs.term_ptr[1:]])
        sites = np.concatenate([self.base_sites, fs.term_sites])
        pert = self.gamma * self.perturbation[fs.term_feature] * fs.term_weight
        coeffs = np.ascontiguousarray(np.concatenate([self.base_coeffs, pert]), dtype=np.float64)
        return Hamiltonian(self.n, ptr.astype(np.int64), sites.astype(np.int64), coeffs)

    @cached_property
    def h_coeffs(self) -> np.ndarray:
        """Coefficients of H(s) = (1/N) sum_a g_a f_a(s) on the combined term list."""
        fs = self.features
        pert = self.perturbation[fs.term_feature] * fs.term_weight / self.n
        return np.concatenate([np.zeros(self.n_base_terms), pert])

    @cached_property
    def feature_terms(self) -> np.ndarray:
        return self.n_base_terms + np.arange(len(self.features.term_weight), dtype=np.int64)

    def log_weight(self, spins) -> np.ndarray:
        spins = np.atleast_2d(spins)
        h = self.hamiltonian
        lw = kernels.monomials(spins, h.term_idx) @ h.coeffs
        if self.base_callable is not None:
            lw = lw + np.asarray(self.base_callable(spins), dtype=np.float64)
        return lw

    def h_values(self, spins) -> np.ndarray:
        """H(s) = (1/N) sum_a g_a f_a(s) for a batch."""
        return self.features.values(spins) @ self.perturbation / self.n

    def with_gamma(self, gamma: float) -> "ModelInstance":
        return replace(self, gamma=float(gamma))

    def with_perturbation(self, g) -> "ModelInstance":
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (self.n_features,):
            raise ValueError("perturbation must have one entry per feature")
        return replace(self, perturbation=g)

    def with_constant_disorder(self, value: float = 1.0, base: bool = False) -> "ModelInstance":
        """Test hook: replace every perturbation gaussian (and optionally base gaussians) by ``value``."""
        out = replace(self, perturbation=np.full(self.n_features, float(value)))
        if base:
            out = replace(out, base_gaussians=np.where(self.base_scale != 0, float(value), 0.0))
        return out


def _base_arrays(n, terms: Sequence[Term], random_terms: Sequence[tuple[float, tuple[int, ...]]] = (),
                 gaussians: Optional[np.ndarray] = None):
    """Pack fixed terms followed by random terms (coefficient = scale * gaussian)."""
    subsets = [s for _, s in terms] + [s for _, s in random_terms]
    ptr, sites = _csr(subsets, n)
    fixed = np.array([c for c, _ in terms] + [0.0] * len(random_terms))
    scale = np.array([0.0] * len(terms) + [c for c, _ in random_terms])
    gauss = np.zeros(len(subsets))
    if random_terms:
        gauss[len(terms):] = gaussians
    return dict(base_ptr=ptr, base_sites=sites, base_fixed=fixed, base_scale=scale, base_gaussians=gauss)


def _perturbation(size, master_seed, sample_index):
    return rng.gaussians(master_seed, sample_index, rng.PERTURBATION, size)


def build_sk(N: int, beta: float, gamma: float, h: float, master_seed: int, sample_index: int,
             base_index: Optional[int] = None) -> ModelInstance:
    """SK model with random external field.

    -H = beta/sqrt(N) sum_{i<j} g_ij s_i s_j + h sum s_i + gamma sum g_i s_i.
    The coupling and uniform-field terms form the base weight; the g_i field
    is the perturbation. ``base_index`` selects the coupling draw (defaults to
    ``sample_index``; pin it to hold the couplings fixed across samples).
    """
    if N < 1:
        raise ValueError("N must be positive")
    base_index = sample_index if base_index is None else base_index
    pairs = [(i, j) for i in range(N) for j in range(i + 1, N)]
    g_pairs = rng.gaussians(master_seed, base_index, rng.BASE, len(pairs))
    fixed = [(h, (i,)) for i in range(N)] if h != 0 else []
    random_terms = [(beta / math.sqrt(N), p) for p in pairs] if beta != 0 else []
    base = _base_arrays(N, fixed, random_terms, g_pairs[: len(random_terms)])
    return ModelInstance(
        n=N, features=FeatureSet.sites(N), perturbation=_perturbation(N, master_seed, sample_index),
        gamma=float(gamma), model="sk", params=dict(beta=beta, h=h), master_seed=master_seed,
        sample_index=sample_index, **base,
    )


def build_pspin(N: int, p: int, beta: float, gamma: float, h: float, master_seed: int, sample_index: int,
                base_index: Optional[int] = None) -> ModelInstance:
    """p-spin couplings beta*sqrt(p!/(2 N^(p-1))) g over p-subsets in the base, random field perturbation."""
    if N < p or p < 1:
        raise ValueError("need 1 <= p <= N")
    base_index = sample_index if base_index is None else base_index
    subs = list(itertools.combinations(range(N), p))
    scale = beta * math.sqrt(math.factorial(p) / (2.0 * N ** (p - 1)))
    g_sub = rng.gaussians(master_seed, base_index, rng.BASE, len(subs))
    fixed = [(h, (i,)) for i in range(N)] if h != 0 else []
    random_terms = [(scale, s) for s in subs] if beta != 0 else []
    base = _base_arrays(N, fixed, random_terms, g_sub[: len(random_terms)])
    return ModelInstance(
        n=N, features=FeatureSet.sites(N), perturbation=_perturbation(N, master_seed, sample_index),
        gamma=float(gamma), model="pspin", params=dict(beta=beta, h=h, p=p), master_seed=master_seed,
        sample_index=sample_index, **base,
    )


def lattice_edges(dims: Sequence[int], periodic: bool) -> list[tuple[int, int]]:
    """Nearest-neighbour edges of a hypercubic lattice, each undirected edge once, sorted."""
    dims = [int(d) for d in dims]
    if not dims or any(d < 1 for d in dims):
        raise ValueError("empty lattice")
    edges = set()
    for coord in itertools.product(*(range(d) for d in dims)):
        i = int(np.ravel_multi_index(coord, dims))
        for ax, L in enumerate(dims):
            nxt = list(coord)
            if coord[ax] + 1 < L:
                nxt[ax] += 1
            elif periodic:
                nxt[ax] = 0
            else:
                continue
            j = int(np.ravel_multi_index(nxt, dims))
            if i != j:
                edges.add((min(i, j), max(i, j)))
    return sorted(edges)


def default_lattice(N: int) -> tuple[int, ...]:
    """Square lattice when N is a square, 2 x N/2 ladder when even, otherwise a chain."""
    r = math.isqrt(N)
    if r * r == N and r > 1:
        return (r, r)
    if N % 2 == 0 and N > 2:
        return (2, N // 2)
    return (N,)


def build_ea(lattice_dims: Sequence[int], periodic: bool, gamma: float, master_seed: int, sample_index: int,
             h: float = 0.0) -> ModelInstance:
    """Edwards-Anderson model: bond features s_i s_j, uniform base (times an optional uniform field h)."""
    N = int(np.prod(lattice_dims)) if len(lattice_dims) else 0
    if N < 2:
        raise ValueError("EA lattice needs at least two sites")
    edges = lattice_edges(lattice_dims, periodic)
    if not edges:
        raise ValueError("lattice has no edges")
    fs = FeatureSet.edges(N, edges)
    base = _base_arrays(N, [(h, (i,)) for i in range(N)] if h != 0 else [])
    return ModelInstance(
        n=N, features=fs, perturbation=_perturbation(fs.size, master_seed, sample_index), gamma=float(gamma),
        model="ea", params=dict(dims=tuple(lattice_dims), periodic=periodic, h=h), master_seed=master_seed,
        sample_index=sample_index, **base,
    )


def build_rfim(lattice_dims: Sequence[int], periodic: bool, J: float, gamma: float, h: float,
               master_seed: int, sample_index: int) -> ModelInstance:
    """Random field Ising model: ferromagnetic J on lattice edges in the base, random field perturbation."""
    N = int(np.prod(lattice_dims))
    edges = lattice_edges(lattice_dims, periodic)
    fixed = [(J, e) for e in edges] + ([(h, (i,)) for i in range(N)] if h != 0 else [])
    base = _base_arrays(N, fixed)
    return ModelInstance(
        n=N, features=FeatureSet.sites(N), perturbation=_perturbation(N, master_seed, sample_index),
        gamma=float(gamma), model="rfim", params=dict(dims=tuple(lattice_dims), periodic=periodic, J=J, h=h),
        master_seed=master_seed, sample_index=sample_index, **base,
    )


def build_generalized(N: int, base_log_weights, features: FeatureSet, gamma: float, master_seed: int,
                      sample_index: int) -> ModelInstance:
    """Generic model with Gibbs weights mu(s) exp(gamma sum g_a f_a(s)).

    ``base_log_weights`` is ``None`` (uniform, log mu = 0), a list of
    ``(coefficient, sites)`` monomials, or a vectorized callable mapping an
    (M, N) spin array to log mu. Callables force the numpy enumeration path.
    """
    if N < 1:
        raise ValueError("N must be positive")
    if features.n != N:
        raise ValueError("feature set built for a different N")
    callable_base = None
    terms: list = []
    if callable(base_log_weights):
        callable_base = base_log_weights
    elif base_log_weights is not None:
        terms = [(float(c), tuple(s)) for c, s in base_log_weights]
    base = _base_arrays(N, terms)
    inst = ModelInstance(
        n=N, features=features, perturbation=_perturbation(features.size, master_seed, sample_index),
        gamma=float(gamma), base_callable=callable_base, master_seed=master_seed, sample_index=sample_index, **base,
    )
    if callable_base is not None and not np.all(np.isfinite(inst.log_weight(probe_configurations(N)))):
        raise ValueError("base log-weights must be finite")
    return inst


def energy(instance: ModelInstance, config) -> float | np.ndarray:
    """H(s) = -(total log-weight), so that G(s) ~ exp(-energy). Accepts one config or a batch."""
    s = as_spins(config, instance.n)
    e = -instance.log_weight(s)
    return float(e[0]) if s.ndim == 1 else e


def energy_delta(instance: ModelInstance, config, site: int) -> float:
    """energy(flip(s, site)) - energy(s), touching only terms incident to ``site``."""
    if not 0 <= site < instance.n:
        raise IndexError(f"site {site} out of range for N={instance.n}")
    s = as_spins(config, instance.n)
    h = instance.hamiltonian
    inc = h.site_terms[h.site_ptr[site] : h.site_ptr[site + 1]]
    mono = np.ones(len(inc))
    for k, t in enumerate(inc):
        mono[k] = np.prod(s[h.term_sites[h.term_ptr[t] : h.term_ptr[t + 1]]])
    de = 2.0 * float(h.coeffs[inc] @ mono)
    if instance.base_callable is not None:
        f = flip(s, site)
        de -= float(instance.base_callable(f[None])[0] - instance.base_callable(s[None])[0])
    return de


def self_overlap_constant(instance: ModelInstance, tolerance: float = 1e-10) -> float:
    """R_{1,1} = (1/N) sum_a f_a(s)^2 on the probe set; raises if it is not constant."""
    probe = probe_configurations(instance.n)
    r11 = (instance.features.values(probe) ** 2).sum(axis=1) / instance.n
    if r11.max() - r11.min() > tolerance:
        raise SelfOverlapError(
            f"model violates the R_{{1,1}}-constant assumption (spread {r11.max() - r11.min():.3g})"
        )
    return float(r11.mean())


MODELS = ("sk", "ea", "rfim", "pspin")


@dataclass(frozen=True)
class ModelSpec:
    """Model block of an experiment: builds instances per (master seed, sample index).

    ``base_disorder='averaged'`` draws fresh base couplings per sample;
    ``'fixed'`` pins them to base index 0 so only the perturbation field varies.
    For lattice models ``dims`` wins over ``N``; ``beta`` is unused there.
    """

    model: str = "sk"
    N: Optional[int] = None
    dims: Optional[tuple] = None
    beta: float = 1.0
    gamma: float = 0.5
    h: float = 0.0
    periodic: bool = True
    p: int = 3
    J: float = 1.0
    base_disorder: str = "averaged"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.base_disorder not in ("averaged", "fixed"):
            raise ValueError("base_disorder must be 'averaged' or 'fixed'")
        if self.N is None and self.dims is None:
            raise ValueError("model needs N or dims")
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def lattice(self) -> tuple:
        return self.dims if self.dims is not None else default_lattice(self.N)

    @property
    def size(self) -> int:
        if self.model in ("ea", "rfim"):
            return int(np.prod(self.lattice))
        return int(self.N)

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)

    def build(self, master_seed: int, sample_index: int) -> ModelInstance:
        base_index = 0 if self.base_disorder == "fixed" else sample_index
        if self.model == "sk":
            return build_sk(self.N, self.beta, self.gamma, self.h, master_seed, sample_index, base_index)
        if self.model == "pspin":
            return build_pspin(self.N, self.p, self.beta, self.gamma, self.h, master_seed, sample_index, base_index)
        if self.model == "ea":
            return build_ea(self.lattice, self.periodic, self.gamma, master_seed, sample_index, h=self.h)
        return build_rfim(self.lattice, self.periodic, self.J, self.gamma, self.h, master_seed, sample_index)

    def describe(self) -> dict:
        return dict(model=self.model, N=self.size, beta=self.beta, gamma=self.gamma, h=self.h)
