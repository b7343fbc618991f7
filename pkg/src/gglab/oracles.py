"""Brute-force reference evaluators.

These recompute everything per configuration straight from the model
definition (couplings, fields, edge lists), sharing no code with the Gray-code
kernels or the polynomial layout. Intended for N <= 12 or so.
"""

import itertools
import math

import numpy as np

from gglab.model import ModelInstance


def all_configurations(n: int):
    return itertools.product((1, -1), repeat=n)


def log_weight(instance: ModelInstance, s) -> float:
    """-H(s) evaluated term by term from the model definition."""
    n = instance.n
    s = [int(v) for v in s]
    gamma = instance.gamma
    g = instance.perturbation
    if instance.model == "sk":
        beta, h = instance.params["beta"], instance.params["h"]
        total = h * sum(s) + gamma * sum(g[i] * s[i] for i in range(n))
        if beta != 0:
            k = 0
            gij = instance.base_gaussians[instance.base_scale != 0]
            for i in range(n):
                for j in range(i + 1, n):
                    total += beta / math.sqrt(n) * gij[k] * s[i] * s[j]
                    k += 1
        return total
    if instance.model == "ea":
        total = instance.params.get("h", 0.0) * sum(s)
        for a, (i, j) in enumerate(instance.features.labels):
            total += gamma * g[a] * s[i] * s[j]
        return total
    # generic: re-evaluate each feature and base term from its CSR description
    arr = np.array(s, dtype=np.float64)
    total = 0.0
    for t in range(len(instance.base_ptr) - 1):
        sites = instance.base_sites[instance.base_ptr[t] : instance.base_ptr[t + 1]]
        total += instance.base_coeffs[t] * float(np.prod(arr[sites]))
    fs = instance.features
    for t in range(len(fs.term_weight)):
        sites = fs.term_sites[fs.term_ptr[t] : fs.term_ptr[t + 1]]
        total += gamma * g[fs.term_feature[t]] * fs.term_weight[t] * float(np.prod(arr[sites]))
    if instance.base_callable is not None:
        total += float(instance.base_callable(arr[None, :])[0])
    return total


def feature_value(instance: ModelInstance, a: int, s) -> float:
    fs = instance.features
    arr = np.array(s, dtype=np.float64)
    total = 0.0
    for t in np.flatnonzero(fs.term_feature == a):
        sites = fs.term_sites[fs.term_ptr[t] : fs.term_ptr[t + 1]]
        total += fs.term_weight[t] * float(np.prod(arr[sites]))
    return total


def enumerate_exact(instance: ModelInstance):
    """(log Z, <f_a> array, <H>, <H^2>) by explicit enumeration with math.fsum."""
    configs = list(all_configurations(instance.n))
    lw = [log_weight(instance, s) for s in configs]
    m = max(lw)
    w = [math.exp(x - m) for x in lw]
    z = math.fsum(w)
    log_z = m + math.log(z)
    A = instance.n_features
    fvals = [[feature_value(instance, a, s) for a in range(A)] for s in configs]
    avgs = np.array([math.fsum(wi * fv[a] for wi, fv in zip(w, fvals)) / z for a in range(A)])
    hv = [sum(instance.perturbation[a] * fv[a] for a in range(A)) / instance.n for fv in fvals]
    h1 = math.fsum(wi * x for wi, x in zip(w, hv)) / z
    h2 = math.fsum(wi * x * x for wi, x in zip(w, hv)) / z
    return log_z, avgs, h1, h2


def state_probabilities(instance: ModelInstance) -> dict:
    configs = list(all_configurations(instance.n))
    lw = np.array([log_weight(instance, s) for s in configs])
    p = np.exp(lw - lw.max())
    p /= p.sum()
    return {c: float(q) for c, q in zip(configs, p)}
