import math

import numpy as np
import pytest

from gglab import oracles
from gglab.gibbs import (
    ExactModeError,
    GibbsEnsemble,
    MCMCSampler,
    exact_replica_sampler,
    feature_averages,
    free_energy_per_site,
    log_partition,
    mcmc_sampler,
    pair_overlap_moment,
)
from gglab.model import FeatureSet, ModelSpec, build_ea, build_generalized, build_sk, code_from_spins
from gglab.replica import histogram_from_overlaps, overlap, total_variation


def test_independent_spins_log_partition(backend):
    for N, h in [(1, 0.0), (5, 0.3), (9, -1.2)]:
        inst = build_sk(N, 0.0, 0.0, h, 0, 0)
        assert log_partition(inst) == pytest.approx(N * math.log(2 * math.cosh(h)), abs=1e-12)


def test_empty_features_log_partition(backend):
    inst = build_generalized(7, None, FeatureSet.empty(7), 1.0, 0, 0)
    assert log_partition(inst) == pytest.approx(7 * math.log(2), abs=1e-12)


def test_free_energy_closed_forms(backend):
    # log(2 cosh 0.3) = 0.7374879...
    for N in (3, 8, 12):
        assert free_energy_per_site(build_sk(N, 0.0, 0.0, 0.3, 1, 0)) == pytest.approx(
            math.log(2 * math.cosh(0.3)), abs=1e-12)
    assert free_energy_per_site(build_ea((3, 3), True, 0.0, 1, 0)) == pytest.approx(math.log(2), abs=1e-12)


def test_magnetizations_closed_form(backend):
    inst = build_sk(6, 0.0, 0.0, 0.7, 0, 0)
    assert np.allclose(feature_averages(inst), math.tanh(0.7), atol=1e-12)
    assert np.allclose(feature_averages(build_sk(6, 0.0, 0.0, 0.0, 0, 0)), 0.0, atol=1e-14)
    assert pair_overlap_moment(inst) == pytest.approx(math.tanh(0.7) ** 2, abs=1e-12)
    assert pair_overlap_moment(build_ea((2, 3), True, 0.0, 0, 0)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("N", [4, 8, 10, 12])
def test_gray_code_matches_naive_oracle(backend, N):
    for s in range(3):
        inst = build_sk(N, 1.0, 0.5, 0.3, 100 + N, s)
        ens = GibbsEnsemble(inst)
        log_z, avgs, h1, h2 = oracles.enumerate_exact(inst)
        assert ens.log_partition == pytest.approx(log_z, rel=1e-9)
        assert np.allclose(ens.feature_averages, avgs, atol=1e-10)
        assert ens.h_mean == pytest.approx(h1, abs=1e-10)
        assert ens.h_second_moment == pytest.approx(h2, abs=1e-10)
        assert ens.total_mass == pytest.approx(1.0, abs=1e-12)


def test_ea_and_callable_base_match_oracle(backend):
    ea = build_ea((2, 3), True, 0.9, 5, 1, h=0.2)
    log_z, avgs, _, _ = oracles.enumerate_exact(ea)
    assert GibbsEnsemble(ea).log_partition == pytest.approx(log_z, rel=1e-12)
    gen = build_generalized(5, lambda s: 0.4 * s[:, 0] * s[:, 3] + 0.2 * s[:, 1], FeatureSet.sites(5), 0.7, 3, 0)
    ens = GibbsEnsemble(gen)
    log_z, avgs, _, _ = oracles.enumerate_exact(gen)
    assert ens.log_partition == pytest.approx(log_z, rel=1e-12)
    assert np.allclose(ens.feature_averages, avgs, atol=1e-12)


def test_table_and_stream_agree():
    inst = build_sk(14, 1.0, 0.5, 0.3, 1, 0)
    a = GibbsEnsemble(inst).log_partition
    b = GibbsEnsemble(inst)
    b.log_weights
    assert b.log_partition == pytest.approx(a, rel=1e-13)
    assert b.probabilities.sum() == pytest.approx(1.0, abs=1e-12)


def test_large_n_stable_without_drift():
    # drift guard: N=20 stream vs dense table
    inst = build_sk(20, 1.5, 1.0, 0.3, 2, 0)
    ens = GibbsEnsemble(inst)
    from gglab import kernels
    table = kernels.log_weight_table(inst.hamiltonian)
    m = table.max()
    ref = m + math.log(math.fsum(np.exp(table - m)))
    assert ens.log_partition == pytest.approx(ref, rel=1e-13)
    # spot-check table entries against direct evaluation
    codes = np.array([0, 1, 12345, (1 << 20) - 1, 777777])
    from gglab.kernels import spins_from_codes
    assert np.allclose(table[codes], inst.log_weight(spins_from_codes(codes, 20)), atol=1e-10)


def test_energy_shift_invariance(backend):
    inst = build_sk(8, 1.0, 0.5, 0.3, 4, 0)
    c = 1234.5
    shifted = build_generalized(8, list(zip(inst.base_coeffs, _base_subsets(inst))) + [(c, ())],
                                inst.features, inst.gamma, 4, 0)
    assert log_partition(shifted) - log_partition(inst) == pytest.approx(c, abs=1e-10)
    assert np.allclose(feature_averages(shifted), feature_averages(inst), atol=1e-12)


def test_huge_energies_do_not_overflow(backend):
    inst = build_generalized(4, [(5000.0, (0,)), (-9000.0, (1, 2))], FeatureSet.sites(4), 0.0, 0, 0)
    lz = log_partition(inst)
    assert np.isfinite(lz)
    assert lz == pytest.approx(14000.0 + 2 * math.log(2), abs=1e-9)


def _base_subsets(inst):
    return [tuple(inst.base_sites[inst.base_ptr[t]:inst.base_ptr[t + 1]]) for t in range(len(inst.base_ptr) - 1)]


def test_exact_mode_limits():
    inst = build_sk(26, 1.0, 0.5, 0.0, 0, 0)
    with pytest.raises(ExactModeError):
        GibbsEnsemble(inst, mode="exact")
    ens = GibbsEnsemble(inst)
    assert ens.mode == "mcmc"
    with pytest.raises(ExactModeError):
        ens.log_partition
    assert ens.sampler(0).draw(3).shape == (3, 26)


def test_sampler_uniform_two_spins():
    ens = GibbsEnsemble(build_sk(2, 0.0, 0.0, 0.0, 0, 0))
    codes = exact_replica_sampler(ens, 1).draw_codes(100_000)
    freq = np.bincount(codes, minlength=4) / len(codes)
    sigma = math.sqrt(0.25 * 0.75 / len(codes))
    assert np.all(np.abs(freq - 0.25) <= 3 * sigma)


def test_sampler_two_state_law():
    ens = GibbsEnsemble(build_sk(1, 0.0, 0.0, 5.0, 0, 0))
    draws = exact_replica_sampler(ens, 2).draw(100_000)
    p = 1 / (1 + math.exp(-10))
    frac = (draws[:, 0] == 1).mean()
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / len(draws)) + 1e-12


def test_sampler_marginal_matches_exact():
    ens = GibbsEnsemble(build_sk(10, 1.0, 0.5, 0.3, 42, 0))
    draws = exact_replica_sampler(ens, 3).draw(50_000)
    m = draws[:, 0].mean()
    exact = ens.feature_averages[0]
    assert abs(m - exact) <= 3 * math.sqrt((1 - exact**2) / len(draws))


def test_sampler_determinism():
    ens = GibbsEnsemble(build_sk(8, 1.0, 0.5, 0.3, 1, 0))
    a = exact_replica_sampler(ens, 9, 4).draw(100)
    b = exact_replica_sampler(ens, 9, 4).draw(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, exact_replica_sampler(ens, 9, 5).draw(100))


def test_mcmc_magnetization(backend):
    h = 0.4
    inst = build_sk(5, 0.0, 0.0, h, 0, 0)
    s = mcmc_sampler(inst, sweeps=4100, burn_in=100, thin=1, stream_seed=3).samples()
    assert s.shape == (4000, 5)
    # sites are independent under the product measure and sweeps decorrelate them fully
    m = s.mean()
    assert abs(m - math.tanh(h)) <= 3 * math.sqrt((1 - math.tanh(h) ** 2) / s.size) * 1.5


def test_mcmc_detailed_balance_three_spins(backend):
    inst = build_sk(3, 1.5, 0.8, 0.2, 11, 0)
    exact = oracles.state_probabilities(inst)
    n = 20_000
    s = mcmc_sampler(inst, sweeps=100 + n * 2, burn_in=100, thin=2, stream_seed=5).samples()
    counts = np.zeros(8)
    for row in s:
        counts[code_from_spins(row)] += 1
    freq = counts / len(s)
    for conf, p in exact.items():
        k = code_from_spins(conf)
        # autocorrelation of the chain inflates the binomial error; allow a factor 2
        assert abs(freq[k] - p) <= 3 * 2 * math.sqrt(p * (1 - p) / len(s))


def test_mcmc_validation_and_determinism():
    inst = build_sk(4, 1.0, 0.5, 0.0, 0, 0)
    with pytest.raises(ValueError):
        MCMCSampler(inst, sweeps=10, burn_in=10)
    a = mcmc_sampler(inst, 200, 50, 5, 8).samples()
    b = mcmc_sampler(inst, 200, 50, 5, 8).samples()
    assert a.shape == (30, 4) and np.array_equal(a, b)


def test_mcmc_numba_and_numpy_paths_agree(monkeypatch):
    from gglab import kernels
    inst = build_sk(6, 1.0, 0.5, 0.3, 2, 0)
    a = mcmc_sampler(inst, 300, 20, 7, 4).samples()
    monkeypatch.setattr(kernels, "HAS_NUMBA", False)
    b = mcmc_sampler(inst, 300, 20, 7, 4).samples()
    assert np.array_equal(a, b)


def test_overlap_bounds_in_samples():
    spec = ModelSpec("ea", N=9, gamma=1.0)
    inst = spec.build(0, 0)
    ens = GibbsEnsemble(inst)
    d = ens.sampler(0).draw(2000)
    r = overlap(inst, d[:1000], d[1000:])
    assert np.all(np.abs(r) <= 2.0 + 1e-12)
    assert 0 <= ens.pair_overlap_moment <= 2.0


def test_env_flag_selects_numpy_backend():
    import os
    import subprocess
    import sys
    code = ("from gglab import _accel; from gglab.model import build_sk; from gglab.gibbs import log_partition;"
            "print(_accel.backend(), repr(log_partition(build_sk(9, 1.0, 0.5, 0.3, 3, 0))))")
    out = subprocess.run([sys.executable, "-c", code], env=dict(os.environ, GGLAB_DISABLE_NUMBA="1"),
                         capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == "numpy"
    assert float(out[1]) == pytest.approx(log_partition(build_sk(9, 1.0, 0.5, 0.3, 3, 0)), rel=1e-13)
