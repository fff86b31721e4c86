import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.stats import ks_2samp

from glasskit.core import ModelSpec
from glasskit.simulator import (
    ChainTooShort,
    McConfig,
    estimate_overlap_moments,
    hamiltonian,
    lemma2_check,
    mcmc_chain,
    run_overlaps,
    sample_disorder,
    spectral_hamiltonian,
)


def exact_sphere_samples(disorder, model, n_target=4000, window=0.05, seed=0):
    """Independent sampler: Gaussian with matched tilt, conditioned on |s|^2 within N +- window.

    The target density exp(beta sum mu s^2 + h w.s) on the sphere equals, up to a
    constant, the Gaussian density with precision 2 beta (z - mu) and mean
    h w / (2 beta (z - mu)) restricted to the sphere, for any z > max mu.
    """
    N = disorder.N
    mu = disorder.mu
    w = disorder.field_weights
    b = model.beta
    z = brentq(lambda t: np.sum(1 / (2 * b * (t - mu))) + np.sum((model.h * w / (2 * b * (t - mu))) ** 2) - N,
               mu[-1] + 1e-12, mu[-1] + 100)
    prec = 2 * b * (z - mu)
    mean = model.h * w / prec
    rng = np.random.default_rng(seed)
    out = []
    got = 0
    while got < n_target:
        S = rng.standard_normal((50_000, N)) / np.sqrt(prec) + mean
        r2 = np.sum(S * S, axis=1)
        ok = np.abs(r2 - N) < window
        S = S[ok] * np.sqrt(N / r2[ok])[:, None]
        out.append(S)
        got += len(S)
    return np.concatenate(out)[:n_target]


def test_disorder_two_by_two_closed_form():
    d = sample_disorder(2, 5)
    rng = np.random.default_rng(np.random.SeedSequence([5, 0xD150]))
    G = rng.standard_normal((2, 2))
    a, c, b = G[0, 0], G[1, 1], 0.5 * (G[0, 1] + G[1, 0])
    disc = math.sqrt((a - c) ** 2 + 4 * b * b)
    assert np.allclose(d.eigenvalues, [(a + c - disc) / 2, (a + c + disc) / 2], atol=1e-14)
    assert d.eigenvalues.sum() == pytest.approx(a + c, abs=1e-14)


def test_disorder_determinism_and_envelope():
    a, b = sample_disorder(120, 9), sample_disorder(120, 9)
    assert np.array_equal(a.eigenvalues, b.eigenvalues)
    assert not np.array_equal(a.eigenvalues, sample_disorder(120, 10).eigenvalues)
    assert a.eigenvalues.sum() == pytest.approx(np.trace(a.couplings), abs=1e-10)
    assert abs(a.eigenvalues.mean()) < 0.5
    assert np.max(np.abs(a.eigenvalues)) / math.sqrt(a.N) <= 2 * math.sqrt(2) * 1.2


def test_spectral_form_is_exact():
    d = sample_disorder(8, 3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        sigma = rng.normal(size=8)
        sigma *= math.sqrt(8) / np.linalg.norm(sigma)
        s = d.eigenvectors.T @ sigma
        assert hamiltonian(d, sigma) == pytest.approx(spectral_hamiltonian(d, s), abs=1e-10)
        assert sigma.sum() == pytest.approx(d.field_weights @ s, abs=1e-10)


def test_hamiltonian_covariance():
    # E H(s1) H(s2) = N xi(R) with xi(q) = q^2 / 2, checked over many disorder draws
    N = 20
    rng = np.random.default_rng(1)
    s1 = rng.normal(size=N)
    s1 *= math.sqrt(N) / np.linalg.norm(s1)
    s2 = 0.6 * s1 + 0.8 * math.sqrt(N) * np.eye(N)[0]
    s2 *= math.sqrt(N) / np.linalg.norm(s2)
    R = s1 @ s2 / N
    prods = [hamiltonian(d, s1) * hamiltonian(d, s2) for d in (sample_disorder(N, k) for k in range(4000))]
    assert np.mean(prods) == pytest.approx(N * R * R / 2, abs=4 * np.std(prods) / math.sqrt(len(prods)))


def small_config(**kw):
    base = dict(N=16, sweeps=4000, burn_in=500, thin=2, n_disorder=1, seed=1, epsilon=0.05)
    base.update(kw)
    return McConfig(**base)


def test_config_validation():
    for bad in (dict(N=8), dict(sweeps=100, burn_in=100), dict(epsilon=0.0), dict(sweeps=40, burn_in=0, thin=10)):
        with pytest.raises(ValueError):
            small_config(**bad)


def test_chain_stays_on_sphere_and_is_reproducible():
    cfg = small_config()
    d = sample_disorder(16, 2)
    m = ModelSpec(2, 1.5, 0.2)
    a = mcmc_chain(d, m, cfg, chain_index=0)
    b = mcmc_chain(d, m, cfg, chain_index=0)
    c = mcmc_chain(d, m, cfg, chain_index=1)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.shape == ((cfg.sweeps - cfg.burn_in) // cfg.thin, 16)
    assert np.allclose(np.sum(a * a, axis=1), 16, atol=1e-9)


def test_chain_rejects_p4():
    with pytest.raises(ValueError):
        mcmc_chain(sample_disorder(16, 0), ModelSpec(4, 1.0), small_config())


def test_infinite_temperature_is_uniform():
    cfg = small_config(N=24, sweeps=6000, thin=5)
    d = sample_disorder(24, 4)
    S = mcmc_chain(d, ModelSpec(2, 1e-12), cfg)
    m2 = np.mean(S * S, axis=0)
    # per-coordinate second moments equal 1 on the sphere of radius sqrt(N)
    x = np.mean(S * S, axis=1)
    assert np.all(np.abs(x - 1) < 1e-9)
    se = np.std(S * S, axis=0) / math.sqrt(len(S) / 5)
    assert np.all(np.abs(m2 - 1) < 3 * se + 0.05)


def test_magnetization_vanishes_without_field():
    cfg = small_config(N=32, sweeps=8000)
    d = sample_disorder(32, 5)
    S = mcmc_chain(d, ModelSpec(2, 1.5), cfg)
    mag = S @ d.field_weights / 32
    se = np.std(mag) / math.sqrt(len(mag) / 50)
    assert abs(mag.mean()) < 3 * se + 0.02


def test_cold_chain_aligns_with_top_mode():
    N = 64
    d = sample_disorder(N, 6)
    beta = 5.0
    cfg = McConfig(N=N, sweeps=6000, burn_in=2000, thin=5, n_disorder=1, seed=3)
    S = mcmc_chain(d, ModelSpec(2, beta), cfg)
    frac = np.mean(S[:, -1] ** 2) / N
    ref = exact_sphere_samples(d, ModelSpec(2, beta), n_target=3000)
    assert frac == pytest.approx(np.mean(ref[:, -1] ** 2) / N, abs=0.05)
    assert frac == pytest.approx(1 - 1 / beta, abs=0.15)


def test_detailed_balance_against_long_chain():
    N, beta = 16, 1.2
    d = sample_disorder(N, 7)
    m = ModelSpec(2, beta)
    short = mcmc_chain(d, m, McConfig(N=N, sweeps=20_000, burn_in=1000, thin=2, n_disorder=1, seed=11))
    long = mcmc_chain(d, m, McConfig(N=N, sweeps=200_000, burn_in=1000, thin=20, n_disorder=1, seed=12))
    assert ks_2samp(short[:, 0] ** 2 / N, long[:, 0] ** 2 / N).statistic <= 0.05


@pytest.mark.parametrize("h", [0.0, 0.5])
def test_chain_matches_independent_sampler(h):
    N = 16
    d = sample_disorder(N, 8)
    m = ModelSpec(2, 1.3, h)
    S = mcmc_chain(d, m, McConfig(N=N, sweeps=60_000, burn_in=1000, thin=10, n_disorder=1, seed=4))
    ref = exact_sphere_samples(d, m, n_target=6000, seed=2)
    for stat in (lambda X: X[:, -1] ** 2 / N, lambda X: X @ d.field_weights / N, lambda X: X[:, 0] ** 2 / N):
        assert ks_2samp(stat(S), stat(ref)).statistic <= 0.05


def test_overlap_estimate_shapes_and_symmetry():
    cfg = small_config(N=32, sweeps=6000, n_disorder=3, epsilon=0.1)
    m = ModelSpec(2, 1.5)
    est = estimate_overlap_moments(m, m, cfg, moment=2)
    assert est.histogram.sum() == pytest.approx(1.0)
    assert est.std_error >= 0
    assert len(est.bin_edges) == len(est.histogram) + 1 == 21
    assert np.abs(est.histogram - est.histogram[::-1]).sum() < 0.15
    assert 0 <= est.mean <= 1
    assert est.per_disorder.shape == (3,)


def test_estimates_are_bit_identical_and_worker_independent():
    cfg = small_config(N=24, sweeps=3000, n_disorder=2)
    m1, m2 = ModelSpec(2, 1.4), ModelSpec(2, 1.1, 0.3)
    a = estimate_overlap_moments(m1, m2, cfg, moment=1)
    b = estimate_overlap_moments(m1, m2, McConfig(**{**cfg.__dict__, "workers": 2}), moment=1)
    assert a.mean == b.mean and a.std_error == b.std_error
    assert np.array_equal(a.histogram, b.histogram)


def test_chain_too_short():
    cfg = McConfig(N=16, sweeps=120, burn_in=20, thin=2, n_disorder=1, seed=0, batches=10)
    m = ModelSpec(2, 3.0)
    with pytest.raises(ChainTooShort) as info:
        estimate_overlap_moments(m, m, cfg)
    assert info.value.n_eff < 100


def test_lemma2_small():
    cfg = small_config(N=24, sweeps=6000, n_disorder=2)
    for k in (2, 4):
        lhs, rhs, se = lemma2_check(ModelSpec(2, 1.5), ModelSpec(2, 2.5), cfg, k)
        assert lhs <= rhs + 3 * se
    with pytest.raises(ValueError):
        lemma2_check(ModelSpec(2, 1.5), ModelSpec(2, 2.5), cfg, 3)


def test_trace_csv(tmp_path):
    cfg = small_config(N=16, sweeps=700, burn_in=500, thin=20, n_disorder=2, batches=5)
    run = run_overlaps(ModelSpec(2, 1.5), ModelSpec(2, 1.5), cfg)
    path = tmp_path / "trace.csv"
    run.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sweep,replica_pair,overlap"
    assert len(lines) == 1 + 2 * 10
    sweep, pair, value = lines[1].split(",")
    assert int(sweep) == 520 and pair == "d0:0-1" and -1 <= float(value) <= 1
