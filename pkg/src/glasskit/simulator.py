"""Monte Carlo for the spherical 2-spin model through exact diagonalization of the disorder.

The couplings ``M = (G + G^T)/2`` are diagonalized once per disorder sample,
``M = V diag(lambda) V^T``. In rotated coordinates ``s = V^T sigma`` the
Hamiltonian is ``sum_i lambda_i s_i^2 / sqrt(2N)`` and the field term
``h sum_i sigma_i`` becomes ``h w.s`` with ``w = V^T 1``. Chains live on the
sphere ``|s|^2 = N``.

Every chain draws from its own ``numpy`` generator seeded by
``(seed, disorder index, chain index)``, so results do not depend on how
chains are scheduled.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import GlasskitError, ModelSpec

_RNG_BLOCK = 64  # sweeps per block of pregenerated random numbers


class ChainTooShort(GlasskitError):
    """Effective sample size below the minimum for a trustworthy estimate."""

    def __init__(self, msg: str, n_eff: float):
        super().__init__(msg)
        self.n_eff = n_eff


@dataclass(frozen=True)
class DisorderSample:
    """One realization of the 2-spin couplings and its spectral decomposition.

    Attributes:
        N: dimension.
        eigenvalues: ascending spectrum of ``(G + G^T)/2``.
        eigenvectors: orthogonal matrix with eigenvectors as columns.
        couplings: the symmetrized matrix itself.
        field_weights: ``V^T 1``, the field direction in rotated coordinates.
        seed: seed of the draw.
    """

    N: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    couplings: np.ndarray
    field_weights: np.ndarray
    seed: int

    @property
    def mu(self) -> np.ndarray:
        """Eigenvalues scaled by 1/sqrt(2N), the per-mode coefficients of H."""
        return self.eigenvalues / math.sqrt(2.0 * self.N)


@dataclass(frozen=True)
class McConfig:
    """Run parameters.

    Attributes:
        N: dimension, >= 16.
        sweeps: total sweeps per chain (one sweep = N pair updates).
        burn_in: discarded leading sweeps.
        replicas: chains per model on each disorder sample.
        seed: master seed.
        epsilon: overlap histogram bin width.
        thin: record a snapshot every ``thin`` sweeps.
        n_disorder: independent disorder samples.
        batches: batches per chain for batch-means errors.
        workers: threads used to run chains (results do not depend on it).
    """

    N: int = 400
    sweeps: int = 20_000
    burn_in: int = 5_000
    replicas: int = 2
    seed: int = 0
    epsilon: float = 0.02
    thin: int = 10
    n_disorder: int = 8
    batches: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.N < 16:
            raise ValueError("N must be >= 16")
        if not self.sweeps > self.burn_in >= 0:
            raise ValueError("need sweeps > burn_in >= 0")
        if self.replicas < 1 or self.thin < 1 or self.n_disorder < 1 or self.batches < 2:
            raise ValueError("replicas, thin, n_disorder must be >= 1 and batches >= 2")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if (self.sweeps - self.burn_in) // self.thin < self.batches:
            raise ValueError("fewer recorded snapshots than batches")


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo estimate of a disorder-averaged Gibbs expectation.

    ``std_error`` is the spread of the per-disorder means when several
    disorder samples are used, else the batch-means error of the single
    chain set. ``n_eff`` sums the per-disorder effective sample sizes.
    ``histogram`` holds overlap masses (summing to 1) on ``bin_edges``.
    """

    mean: float
    std_error: float
    n_eff: float
    histogram: np.ndarray
    bin_edges: np.ndarray
    per_disorder: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def mode(self) -> float:
        """Center of the heaviest histogram bin."""
        i = int(np.argmax(self.histogram))
        return 0.5 * float(self.bin_edges[i] + self.bin_edges[i + 1])

    def mass_within(self, centers, half_width: float) -> float:
        """Histogram mass of bins whose centers lie within ``half_width`` of any center."""
        mid = 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])
        mask = np.zeros(mid.shape, dtype=bool)
        for c in np.atleast_1d(centers):
            mask |= np.abs(mid - c) <= half_width + 1e-12
        return float(self.histogram[mask].sum())


def sample_disorder(N: int, seed: int) -> DisorderSample:
    """Draw G with iid standard Gaussian entries and diagonalize (G + G^T)/2."""
    if N < 2:
        raise ValueError("N must be >= 2")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xD150]))
    G = rng.standard_normal((N, N))
    M = 0.5 * (G + G.T)
    lam, V = np.linalg.eigh(M)
    w = V.sum(axis=0)
    for a in (lam, V, M, w):
        a.setflags(write=False)
    return DisorderSample(N=N, eigenvalues=lam, eigenvectors=V, couplings=M, field_weights=w,
                          seed=int(seed))


def hamiltonian(disorder: DisorderSample, sigma) -> float:
    """H(sigma) = sigma^T M sigma / sqrt(2N) in original coordinates."""
    sigma = np.asarray(sigma, dtype=float)
    return float(sigma @ disorder.couplings @ sigma) / math.sqrt(2.0 * disorder.N)


def spectral_hamiltonian(disorder: DisorderSample, s) -> float:
    """Same Hamiltonian evaluated in rotated coordinates."""
    s = np.asarray(s, dtype=float)
    return float(np.sum(disorder.mu * s * s))


@numba.njit(cache=True, nogil=True)
def _run_block(s, coef, hw, pi, pj, ang, lu, flip_u, n_sweeps, N):
    # coef = beta * mu; hw = h * w; log-weight is sum coef s^2 + hw.s
    k = 0
    accepted = 0
    for sw in range(n_sweeps):
        for _ in range(N):
            i = pi[k]
            j = pj[k]
            c = math.cos(ang[k])
            sn = math.sin(ang[k])
            si = s[i]
            sj = s[j]
            ni = c * si - sn * sj
            nj = sn * si + c * sj
            d = coef[i] * (ni * ni - si * si) + coef[j] * (nj * nj - sj * sj)
            d += hw[i] * (ni - si) + hw[j] * (nj - sj)
            if d >= 0.0 or lu[k] < d:
                s[i] = ni
                s[j] = nj
                accepted += 1
            k += 1
        # global flip s -> -s changes only the field term
        dot = 0.0
        for i in range(N):
            dot += hw[i] * s[i]
        if dot <= 0.0 or math.log(flip_u[sw]) < -2.0 * dot:
            for i in range(N):
                s[i] = -s[i]
    return accepted


@numba.njit(cache=True, nogil=True)
def _renormalize(s, N):
    r = 0.0
    for i in range(N):
        r += s[i] * s[i]
    f = math.sqrt(N / r)
    for i in range(N):
        s[i] *= f


def _chain_rng(seed: int, disorder_index: int, chain_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(disorder_index), int(chain_index)]))


def mcmc_chain(disorder: DisorderSample, model: ModelSpec, config: McConfig,
               chain_index: int = 0, disorder_index: int = 0) -> np.ndarray:
    """Run one chain and return the recorded states (rotated coordinates), one row per snapshot.

    Moves are Metropolis updates that rotate a random coordinate pair by a
    uniform angle in (-pi, pi], plus one global sign flip per sweep (always
    accepted without field). The target density on the sphere is
    proportional to exp(beta H + h sum sigma_i).
    """
    if model.p != 2:
        raise ValueError("the simulator supports p = 2 only")
    N = disorder.N
    if N != config.N:
        raise ValueError("disorder dimension differs from config.N")
    rng = _chain_rng(config.seed, disorder_index, chain_index)
    s = rng.standard_normal(N)
    s *= math.sqrt(N) / np.linalg.norm(s)
    coef = np.ascontiguousarray(model.beta * disorder.mu)
    hw = np.ascontiguousarray(model.h * disorder.field_weights)
    n_snap = (config.sweeps - config.burn_in) // config.thin
    out = np.empty((n_snap, N))
    done = 0
    rec = 0
    while done < config.sweeps:
        # stop blocks on snapshot boundaries after burn-in
        if done < config.burn_in:
            nb = min(_RNG_BLOCK, config.burn_in - done)
        else:
            nb = config.thin
        nb = min(nb, config.sweeps - done)
        n_moves = nb * N
        pi = rng.integers(0, N, size=n_moves)
        pj = (pi + rng.integers(1, N, size=n_moves)) % N
        ang = rng.uniform(-math.pi, math.pi, size=n_moves)
        lu = np.log(rng.random(n_moves))
        flip_u = rng.random(nb)
        _run_block(s, coef, hw, pi, pj, ang, lu, flip_u, nb, N)
        _renormalize(s, N)
        done += nb
        if done > config.burn_in and (done - config.burn_in) % config.thin == 0 and rec < n_snap:
            out[rec] = s
            rec += 1
    return out[:rec]


def _batch_stats(x: np.ndarray, batches: int) -> tuple[float, float, float]:
    """Mean, batch-means standard error and effective sample size of a series."""
    n = len(x) // batches * batches
    b = x[len(x) - n:].reshape(batches, -1).mean(axis=1)
    se = float(np.std(b, ddof=1) / math.sqrt(batches))
    var = float(np.var(x, ddof=1))
    n_eff = float(len(x)) if se == 0.0 else min(float(len(x)), var / se ** 2)
    return float(np.mean(x)), se, n_eff


def _run_disorder(d: int, models: tuple, config: McConfig) -> list[np.ndarray]:
    disorder = sample_disorder(config.N, config.seed * 1_000_003 + d)
    chains = []
    for c, model in enumerate(models):
        chains.append(mcmc_chain(disorder, model, config, chain_index=c, disorder_index=d))
    return chains


def _run_all(models: tuple, config: McConfig) -> list[list[np.ndarray]]:
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as ex:
            return list(ex.map(lambda d: _run_disorder(d, models, config), range(config.n_disorder)))
    return [_run_disorder(d, models, config) for d in range(config.n_disorder)]


def _overlaps(chains, pairs, N) -> np.ndarray:
    """Overlap series, one column per pair."""
    return np.stack([np.einsum("ti,ti->t", chains[a], chains[b]) / N for a, b in pairs], axis=1)


def _pairs(models: tuple, group1, group2):
    if group2 is None:
        return [(a, b) for i, a in enumerate(group1) for b in group1[i + 1:]]
    return [(a, b) for a in group1 for b in group2]


def _estimate(series_by_disorder, config: McConfig, moment: int, edges) -> McEstimate:
    means, ses, n_effs = [], [], []
    hist = np.zeros(len(edges) - 1)
    for R in series_by_disorder:
        x = np.mean(R ** moment, axis=1)
        m, se, ne = _batch_stats(x, config.batches)
        means.append(m)
        ses.append(se)
        n_effs.append(ne)
        hist += np.histogram(np.clip(R.ravel(), -1.0, 1.0), bins=edges)[0]
    means = np.array(means)
    D = len(means)
    if D >= 2:
        se = float(np.std(means, ddof=1) / math.sqrt(D))
    else:
        se = ses[0]
    return McEstimate(mean=float(means.mean()), std_error=se, n_eff=float(np.sum(n_effs)),
                      histogram=hist / hist.sum(), bin_edges=edges, per_disorder=means)


def _edges(epsilon: float) -> np.ndarray:
    nb = max(1, int(round(2.0 / epsilon)))
    return np.linspace(-1.0, 1.0, nb + 1)


def _check_neff(est: McEstimate, what: str = "estimate") -> None:
    if est.n_eff < 100:
        raise ChainTooShort(f"{what}: effective sample size {est.n_eff:.1f} < 100", est.n_eff)


@dataclass
class OverlapRun:
    """Raw output of a run: overlap series per disorder and the pair labels."""

    series: list
    pairs: list
    labels: list
    sweeps: np.ndarray

    def write_csv(self, path) -> None:
        """Trace with columns sweep, replica_pair, overlap."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sweep", "replica_pair", "overlap"])
            for d, R in enumerate(self.series):
                for t, sweep in enumerate(self.sweeps[: len(R)]):
                    for c, label in enumerate(self.labels):
                        w.writerow([int(sweep), f"d{d}:{label}", repr(float(R[t, c]))])


def run_overlaps(model1: ModelSpec, model2: ModelSpec, config: McConfig) -> OverlapRun:
    """Simulate and collect overlaps.

    Same model: ``config.replicas`` chains (at least 2), all pairs among
    them. Different models: ``config.replicas`` chains of each, all cross
    pairs.
    """
    for mdl in (model1, model2):
        if mdl.p != 2:
            raise ValueError("the simulator supports p = 2 only")
    r = max(config.replicas, 2) if model1 == model2 else config.replicas
    if model1 == model2:
        models = (model1,) * r
        pairs = _pairs(models, list(range(r)), None)
    else:
        models = (model1,) * r + (model2,) * r
        pairs = _pairs(models, list(range(r)), list(range(r, 2 * r)))
    chains = _run_all(models, config)
    series = [_overlaps(ch, pairs, config.N) for ch in chains]
    sweeps = config.burn_in + config.thin * np.arange(1, series[0].shape[0] + 1)
    return OverlapRun(series=series, pairs=pairs, labels=[f"{a}-{b}" for a, b in pairs], sweeps=sweeps)


def estimate_overlap_moments(model1: ModelSpec, model2: ModelSpec, config: McConfig,
                             moment: int = 2, run: OverlapRun | None = None) -> McEstimate:
    """Disorder-averaged Gibbs mean of R^moment with R the overlap of the two systems.

    Raises:
        ChainTooShort: effective sample size below 100.
    """
    if run is None:
        run = run_overlaps(model1, model2, config)
    est = _estimate(run.series, config, moment, _edges(config.epsilon))
    _check_neff(est)
    return est


def lemma2_check(model1: ModelSpec, model2: ModelSpec, config: McConfig, k: int = 2):
    """Estimate both sides of E<R_12^k> <= sqrt(E<R^k>_1 E<R^k>_2).

    Two chains per model share each disorder sample; the cross pair gives
    the left side and the same-model pairs give the right side.

    Returns:
        ``(lhs, rhs, combined_std_error)``.
    """
    if k < 2 or k % 2:
        raise ValueError("k must be an even integer >= 2")
    for mdl in (model1, model2):
        if mdl.p != 2:
            raise ValueError("the simulator supports p = 2 only")
    models = (model1, model1, model2, model2)
    chains = _run_all(models, config)
    edges = _edges(config.epsilon)
    sides = []
    for pairs in ([(0, 2), (0, 3), (1, 2), (1, 3)], [(0, 1)], [(2, 3)]):
        est = _estimate([_overlaps(ch, pairs, config.N) for ch in chains], config, k, edges)
        _check_neff(est, "lemma2")
        sides.append(est)
    lhs_est, e1, e2 = sides
    rhs = math.sqrt(max(e1.mean, 0.0) * max(e2.mean, 0.0))
    # delta method for sqrt(a b)
    if rhs > 0.0:
        se_rhs = 0.5 * math.hypot(e1.std_error * math.sqrt(e2.mean / e1.mean),
                                  e2.std_error * math.sqrt(e1.mean / e2.mean))
    else:
        se_rhs = 0.0
    return lhs_est.mean, rhs, math.hypot(lhs_est.std_error, se_rhs)
