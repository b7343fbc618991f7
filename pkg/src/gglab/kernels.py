"""Enumeration and Glauber kernels.

A Hamiltonian is handed to the kernels as a polynomial in the spins,
``log_weight(s) = sum_t coeffs[t] * prod_{i in S_t} s_i``, in CSR layout
(``term_ptr``/``term_sites``) plus the transposed site -> term incidence
(``site_ptr``/``site_terms``). Configuration codes are integers whose bit ``i``
set means ``s_i = -1``; code 0 is the all-plus configuration.

Each public entry point dispatches to a numba kernel (Gray-code order, one
spin flip per step) or, when numba is disabled, to a chunked numpy evaluation
in natural code order. Both paths satisfy the same contract.
"""

import numpy as np
from scipy.special import logsumexp

from gglab._accel import HAS_NUMBA, njit

# lw is recomputed from scratch this often along the Gray path so that
# accumulated flip deltas cannot drift
_REFRESH = 1024
_CHUNK = 1 << 14


@njit(cache=True)
def _ctz(k):
    c = 0
    while (k & 1) == 0:
        k >>= 1
        c += 1
    return c


@njit(cache=True)
def _dot(coeffs, mono):
    s = 0.0
    for t in range(coeffs.shape[0]):
        s += coeffs[t] * mono[t]
    return s


@njit(cache=True)
def _nb_log_weight_table(n, site_ptr, site_terms, coeffs):
    size = 1 << n
    out = np.empty(size)
    mono = np.ones(coeffs.shape[0])
    lw = _dot(coeffs, mono)
    code = 0
    out[0] = lw
    for k in range(1, size):
        site = _ctz(k)
        code ^= 1 << site
        for q in range(site_ptr[site], site_ptr[site + 1]):
            t = site_terms[q]
            mono[t] = -mono[t]
            lw += 2.0 * coeffs[t] * mono[t]
        if (k & (_REFRESH - 1)) == 0:
            lw = _dot(coeffs, mono)
        out[code] = lw
    return out


@njit(cache=True)
def _nb_log_partition(n, site_ptr, site_terms, coeffs):
    size = 1 << n
    mono = np.ones(coeffs.shape[0])
    lw = _dot(coeffs, mono)
    m = lw
    s = 1.0
    c = 0.0
    for k in range(1, size):
        site = _ctz(k)
        for q in range(site_ptr[site], site_ptr[site + 1]):
            t = site_terms[q]
            mono[t] = -mono[t]
            lw += 2.0 * coeffs[t] * mono[t]
        if (k & (_REFRESH - 1)) == 0:
            lw = _dot(coeffs, mono)
        if lw > m:
            sc = np.exp(m - lw)
            s *= sc
            c *= sc
            m = lw
            x = 1.0
        else:
            x = np.exp(lw - m)
        # Neumaier compensated add
        tot = s + x
        if abs(s) >= abs(x):
            c += (s - tot) + x
        else:
            c += (x - tot) + s
        s = tot
    return m + np.log(s + c)


@njit(cache=True)
def _nb_table_logsumexp(table):
    m = table.max()
    s = 0.0
    c = 0.0
    for k in range(table.shape[0]):
        x = np.exp(table[k] - m)
        tot = s + x
        if abs(s) >= abs(x):
            c += (s - tot) + x
        else:
            c += (x - tot) + s
        s = tot
    return m + np.log(s + c)


@njit(cache=True)
def _neumaier(acc, comp, i, x):
    tot = acc[i] + x
    if abs(acc[i]) >= abs(x):
        comp[i] += (acc[i] - tot) + x
    else:
        comp[i] += (x - tot) + acc[i]
    acc[i] = tot


@njit(cache=True)
def _nb_moments(n, site_ptr, site_terms, coeffs, obs, moment_terms, log_z):
    size = 1 << n
    n_terms = coeffs.shape[0]
    n_mom = moment_terms.shape[0]
    # slots: [0, n_mom) term moments, n_mom: <O>, n_mom+1: <O^2>, n_mom+2: total mass
    acc = np.zeros(n_mom + 3)
    comp = np.zeros(n_mom + 3)
    blk = np.zeros(n_mom + 3)
    mono = np.ones(n_terms)
    lw = _dot(coeffs, mono)
    o = _dot(obs, mono)
    for k in range(size):
        if k > 0:
            site = _ctz(k)
            for q in range(site_ptr[site], site_ptr[site + 1]):
                t = site_terms[q]
                mono[t] = -mono[t]
                lw += 2.0 * coeffs[t] * mono[t]
                o += 2.0 * obs[t] * mono[t]
            if (k & (_REFRESH - 1)) == 0:
                lw = _dot(coeffs, mono)
                o = _dot(obs, mono)
        p = np.exp(lw - log_z)
        for j in range(n_mom):
            blk[j] += p * mono[moment_terms[j]]
        blk[n_mom] += p * o
        blk[n_mom + 1] += p * o * o
        blk[n_mom + 2] += p
        if ((k + 1) & (_REFRESH - 1)) == 0 or k == size - 1:
            for j in range(n_mom + 3):
                _neumaier(acc, comp, j, blk[j])
                blk[j] = 0.0
    return acc + comp


@njit(cache=True)
def _nb_glauber(site_ptr, site_terms, coeffs, spins, mono, uniforms, thin, out):
    n = spins.shape[0]
    n_sweeps = uniforms.shape[0] // n
    r = 0
    u = 0
    for sweep in range(n_sweeps):
        for i in range(n):
            de = 0.0
            for q in range(site_ptr[i], site_ptr[i + 1]):
                t = site_terms[q]
                de += coeffs[t] * mono[t]
            de *= 2.0
            if de < 700.0 and uniforms[u] * (1.0 + np.exp(de)) < 1.0:
                spins[i] = -spins[i]
                for q in range(site_ptr[i], site_ptr[i + 1]):
                    t = site_terms[q]
                    mono[t] = -mono[t]
            u += 1
        if (sweep + 1) % thin == 0 and r < out.shape[0]:
            for i in range(n):
                out[r, i] = spins[i]
            r += 1
    return r


# ---------------------------------------------------------------- numpy path


def padded_term_index(n, term_ptr, term_sites):
    """(T, max_order) gather index into spins augmented with a trailing ones column."""
    n_terms = len(term_ptr) - 1
    lengths = np.diff(term_ptr)
    width = max(int(lengths.max()) if n_terms else 0, 1)
    idx = np.full((n_terms, width), n, dtype=np.int64)
    for t in range(n_terms):
        idx[t, : lengths[t]] = term_sites[term_ptr[t] : term_ptr[t + 1]]
    return idx


def monomials(spins, term_idx):
    """Monomial values for a batch of configurations, shape (M, T)."""
    spins = np.asarray(spins, dtype=np.float64)
    aug = np.concatenate([spins, np.ones((spins.shape[0], 1))], axis=1)
    if term_idx.shape[0] == 0:
        return np.zeros((spins.shape[0], 0))
    return aug[:, term_idx].prod(axis=2)


def spins_from_codes(codes, n):
    codes = np.asarray(codes, dtype=np.int64)
    bits = (codes[..., None] >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def _chunks(n):
    size = 1 << n
    for start in range(0, size, _CHUNK):
        yield start, min(size, start + _CHUNK)


def _np_chunk_log_weights(n, term_idx, coeffs, start, stop, extra):
    spins = spins_from_codes(np.arange(start, stop), n)
    mono = monomials(spins, term_idx)
    lw = mono @ coeffs
    if extra is not None:
        lw = lw + extra(spins)
    return spins, mono, lw


def _np_log_weight_table(n, term_idx, coeffs, extra):
    out = np.empty(1 << n)
    for start, stop in _chunks(n):
        out[start:stop] = _np_chunk_log_weights(n, term_idx, coeffs, start, stop, extra)[2]
    return out


def _np_log_partition(n, term_idx, coeffs, extra):
    total = -np.inf
    for start, stop in _chunks(n):
        lw = _np_chunk_log_weights(n, term_idx, coeffs, start, stop, extra)[2]
        total = np.logaddexp(total, logsumexp(lw))
    return float(total)


def _np_moments(n, term_idx, coeffs, obs, moment_terms, log_z, extra):
    acc = np.zeros(len(moment_terms) + 3)
    for start, stop in _chunks(n):
        _, mono, lw = _np_chunk_log_weights(n, term_idx, coeffs, start, stop, extra)
        p = np.exp(lw - log_z)
        o = mono @ obs
        acc[: len(moment_terms)] += p @ mono[:, moment_terms]
        acc[-3] += p @ o
        acc[-2] += p @ (o * o)
        acc[-1] += p.sum()
    return acc


# ------------------------------------------------------------------ dispatch


def log_weight_table(h, extra=None):
    """Log-weights of all 2**n configurations indexed by code."""
    if HAS_NUMBA and extra is None:
        return _nb_log_weight_table(h.n, h.site_ptr, h.site_terms, h.coeffs)
    return _np_log_weight_table(h.n, h.term_idx, h.coeffs, extra)


def log_partition(h, extra=None):
    if HAS_NUMBA and extra is None:
        return float(_nb_log_partition(h.n, h.site_ptr, h.site_terms, h.coeffs))
    return _np_log_partition(h.n, h.term_idx, h.coeffs, extra)


def table_logsumexp(table):
    """Compensated log-sum-exp of an already enumerated log-weight table."""
    if HAS_NUMBA:
        return float(_nb_table_logsumexp(table))
    return float(logsumexp(table))


def moments(h, obs, moment_terms, log_z, extra=None):
    """Returns (term moments, <O>, <O^2>, total probability mass)."""
    obs = np.ascontiguousarray(obs, dtype=np.float64)
    moment_terms = np.ascontiguousarray(moment_terms, dtype=np.int64)
    if HAS_NUMBA and extra is None:
        acc = _nb_moments(h.n, h.site_ptr, h.site_terms, h.coeffs, obs, moment_terms, log_z)
    else:
        acc = _np_moments(h.n, h.term_idx, h.coeffs, obs, moment_terms, log_z, extra)
    k = len(moment_terms)
    return acc[:k].copy(), float(acc[k]), float(acc[k + 1]), float(acc[k + 2])


def glauber(h, spins, mono, uniforms, thin, out, extra=None):
    """Sequential-scan Glauber sweeps; mutates ``spins``/``mono``, fills ``out`` rows."""
    if HAS_NUMBA and extra is None:
        return _nb_glauber(h.site_ptr, h.site_terms, h.coeffs, spins, mono, uniforms, thin, out)
    n = spins.shape[0]
    r = 0
    u = 0
    for sweep in range(uniforms.shape[0] // n):
        for i in range(n):
            inc = h.site_terms[h.site_ptr[i] : h.site_ptr[i + 1]]
            de = 2.0 * float(h.coeffs[inc] @ mono[inc])
            if extra is not None:
                flipped = spins.copy()
                flipped[i] = -flipped[i]
                de -= float(extra(flipped[None, :])[0] - extra(spins[None, :])[0])
            if de < 700.0 and uniforms[u] * (1.0 + np.exp(de)) < 1.0:
                spins[i] = -spins[i]
                mono[inc] = -mono[inc]
            u += 1
        if (sweep + 1) % thin == 0 and r < out.shape[0]:
            out[r] = spins
            r += 1
    return r
