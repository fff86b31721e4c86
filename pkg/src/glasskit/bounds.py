"""Coupled-replica upper bounds and the exclusion verdicts they imply.

All bounds are the N -> infinity, epsilon -> 0 limits: remainder terms are
dropped. Matrices for n replicas at temperatures beta_j follow two
rescalings, ``sqrt(beta_j beta_j') q_jj'`` for eigenvalue analysis and
``beta_j beta_j' xi'(q_jj')`` for covariance increments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import (
    DomainError,
    GlasskitError,
    InvalidMatrix,
    ModelSpec,
    NoConvergence,
    OverlapMatrix,
    TOL_PSD,
    d2xi,
    dxi,
    psd_check,
    sym_eigen,
    sym_inv,
    sym_logdet,
    theta,
    ultrametric_test_matrix,
)
from .parisi import free_energy_2spin, free_energy_2spin_closed, pspin_critical, solve_q_2spin

EXCLUSION_MARGIN = 1e-8
FD_STEP = 1e-5
TOL_GRAD = 1e-6


class BothFieldsZero(GlasskitError):
    pass


def central_difference(f, x: float, step: float = FD_STEP) -> float:
    """Fourth-order central difference f'(x) from the stencil x +- step, x +- 2 step."""
    return (8.0 * (f(x + step) - f(x - step)) - (f(x + 2 * step) - f(x - 2 * step))) / (12.0 * step)


@dataclass(frozen=True)
class ExclusionVerdict:
    """Comparison of a constrained bound with the sum of single-system free energies.

    ``criterion`` says what ``margin_used`` applies to: ``"bound"`` means
    excluded iff ``bound < trivial_sum - margin_used``; ``"min_eigenvalue"``
    means excluded iff the smallest rescaled eigenvalue is below
    ``1 - margin_used`` (the strict-inequality condition of the eigenvalue
    bound, whose deficit is only cubic in the eigenvalue gap).
    """

    bound: float
    trivial_sum: float
    excluded: bool
    margin_used: float
    criterion: str = "bound"
    eigenvalues: tuple = ()
    reason: str = ""

    @property
    def min_eigenvalue(self) -> float:
        return min(self.eigenvalues) if self.eigenvalues else math.nan


def verdict_from_bound(bound: float, trivial_sum: float, margin: float = EXCLUSION_MARGIN,
                       reason: str = "") -> ExclusionVerdict:
    return ExclusionVerdict(bound=bound, trivial_sum=trivial_sum,
                            excluded=bool(bound < trivial_sum - margin),
                            margin_used=margin, criterion="bound", reason=reason)


# --- general interpolation bound --------------------------------------------


@dataclass(frozen=True)
class BoundInput:
    """Parameters of the k-level coupled interpolation bound.

    Attributes:
        Q: overlap constraint (the top matrix of the sequence).
        betas, hs: per-replica inverse temperatures and fields.
        m: weights m_1 < ... < m_k = 1 in (0, 1].
        Qseq: matrices Q^1, ..., Q^k (Q^0 = 0 is implicit).
        A: symmetric positive definite top matrix A_{k+1}.
        p: interaction order of the pure model.
    """

    Q: OverlapMatrix
    betas: np.ndarray
    hs: np.ndarray
    m: tuple
    Qseq: tuple
    A: np.ndarray
    p: int = 2

    def __post_init__(self):
        if not isinstance(self.Q, OverlapMatrix):
            object.__setattr__(self, "Q", OverlapMatrix(self.Q))
        n = self.Q.n
        betas = np.asarray(self.betas, dtype=float).reshape(-1)
        hs = np.asarray(self.hs, dtype=float).reshape(-1)
        if betas.size == 1:
            betas = np.full(n, betas[0])
        if hs.size == 1:
            hs = np.full(n, hs[0])
        if betas.size != n or hs.size != n:
            raise ValueError("betas and hs need one entry per replica")
        if np.any(betas <= 0):
            raise ValueError("betas must be positive")
        m = tuple(float(v) for v in self.m)
        if not m or abs(m[-1] - 1.0) > 1e-12 or m[0] <= 0.0 or any(b <= a for a, b in zip(m, m[1:])):
            raise ValueError("m must be strictly increasing in (0, 1] and end at 1")
        Qseq = tuple(np.asarray(M, dtype=float) for M in self.Qseq)
        if len(Qseq) != len(m):
            raise ValueError("need one matrix Q^l per weight m_l")
        if any(M.shape != (n, n) for M in Qseq):
            raise ValueError("sequence matrices must be n x n")
        A = np.asarray(self.A, dtype=float)
        if A.shape != (n, n):
            raise ValueError("A must be n x n")
        ModelSpec(self.p, 1.0)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "hs", hs)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "Qseq", Qseq)
        object.__setattr__(self, "A", A)

    @property
    def n(self) -> int:
        return self.Q.n

    @property
    def k(self) -> int:
        return len(self.m)

    @property
    def model(self) -> ModelSpec:
        return ModelSpec(self.p, 1.0)

    def sequence(self) -> list[np.ndarray]:
        """Q^0, ..., Q^{k+1}."""
        return [np.zeros((self.n, self.n)), *self.Qseq, np.array(self.Q.entries)]

    def hat(self, M: np.ndarray) -> np.ndarray:
        return np.outer(self.betas, self.betas) * dxi(self.model, M)

    def increments(self) -> list[np.ndarray]:
        """Delta_l = hat(Q^{l+1}) - hat(Q^l), l = 0..k."""
        hats = [self.hat(M) for M in self.sequence()]
        return [hats[l + 1] - hats[l] for l in range(self.k + 1)]

    def a_sequence(self) -> list[np.ndarray]:
        """A_1, ..., A_{k+1} from A_l = A_{l+1} - m_l Delta_l (index 0 unused)."""
        deltas = self.increments()
        seq = [None] * (self.k + 2)
        seq[self.k + 1] = self.A
        for l in range(self.k, 0, -1):
            seq[l] = seq[l + 1] - self.m[l - 1] * deltas[l]
        return seq


def _theta_telescope(inp: BoundInput) -> float:
    bb = np.outer(inp.betas, inp.betas)
    seq = inp.sequence()
    model = inp.model
    total = 0.0
    for l in range(1, inp.k + 1):
        total += inp.m[l - 1] * float(np.sum(bb * (theta(model, seq[l + 1]) - theta(model, seq[l]))))
    return total


def _check_increments(deltas) -> None:
    for l, D in enumerate(deltas):
        if not psd_check(D, TOL_PSD):
            raise DomainError(f"Delta_{l} is not nonnegative definite")


def guerra_bound(inp: BoundInput) -> float:
    """Upper bound on the constrained coupled free energy (remainder dropped).

    Raises:
        DomainError: some Delta_l is not PSD or some A_l is not PD.
    """
    deltas = inp.increments()
    _check_increments(deltas)
    A = inp.a_sequence()
    logdets = [None] + [sym_logdet(A[l]) for l in range(1, inp.k + 2)]
    A1inv = sym_inv(A[1])
    Q = inp.Q.entries
    two_f = (
        float(np.sum(inp.A * Q)) - inp.n
        + float(inp.hs @ A1inv @ inp.hs)
        + float(np.sum(A1inv * deltas[0]))
        - logdets[inp.k + 1]
        - _theta_telescope(inp)
    )
    for l in range(1, inp.k + 1):
        two_f += (logdets[l + 1] - logdets[l]) / inp.m[l - 1]
    return 0.5 * two_f


def guerra_bound_free_last(Q, betas, hs, m, Qseq, A_k, p: int = 2) -> float:
    """Same bound written with A_k as the free matrix and A_{k+1} = A_k + Delta_k."""
    probe = BoundInput(Q=Q, betas=betas, hs=hs, m=m, Qseq=Qseq, A=np.eye(np.shape(A_k)[0]), p=p)
    deltas = probe.increments()
    _check_increments(deltas)
    k = probe.k
    A = [None] * (k + 1)
    A[k] = np.asarray(A_k, dtype=float)
    for l in range(k - 1, 0, -1):
        A[l] = A[l + 1] - probe.m[l - 1] * deltas[l]
    logdets = [None] + [sym_logdet(A[l]) for l in range(1, k + 1)]
    A1inv = sym_inv(A[1])
    Qm = probe.Q.entries
    two_f = (
        float(np.sum(deltas[k] * Qm)) + float(np.sum(A[k] * Qm)) - probe.n
        + float(probe.hs @ A1inv @ probe.hs)
        + float(np.sum(A1inv * deltas[0]))
        - logdets[k]
        - _theta_telescope(probe)
    )
    for l in range(1, k):
        two_f += (logdets[l + 1] - logdets[l]) / probe.m[l - 1]
    return 0.5 * two_f


def remark_parameters(Q, beta: float) -> BoundInput:
    """One-level parameters Q^1 = Q - I/beta and A = 2 beta I for equal temperatures."""
    Q = Q if isinstance(Q, OverlapMatrix) else OverlapMatrix(Q)
    n = Q.n
    return BoundInput(Q=Q, betas=np.full(n, beta), hs=np.zeros(n), m=(1.0,),
                      Qseq=(Q.entries - np.eye(n) / beta,), A=2.0 * beta * np.eye(n), p=2)


def rescaled_constraint(Q, betas) -> np.ndarray:
    """(sqrt(beta_j beta_j') q_jj')."""
    Q = Q.entries if isinstance(Q, OverlapMatrix) else np.asarray(Q, dtype=float)
    sb = np.sqrt(np.asarray(betas, dtype=float))
    return np.outer(sb, sb) * Q


def theorem1_parameters(Q, betas) -> BoundInput:
    """One-level parameters built by diagonalizing the rescaled constraint.

    Each eigenvalue r gets the inner level r^1 = max(r - 1, 0) and the
    weight b = 2 (r >= 1) or b = r + 1/r (r < 1), which are the per-mode
    optima; the bound then splits into independent per-eigenvalue terms.
    """
    Q = Q if isinstance(Q, OverlapMatrix) else OverlapMatrix(Q)
    betas = np.asarray(betas, dtype=float)
    eig = sym_eigen(rescaled_constraint(Q, betas))
    r = eig.eigenvalues
    if r[0] <= 0.0:
        raise DomainError("rescaled constraint is singular")
    r1 = np.where(r >= 1.0, r - 1.0, 0.0)
    b = np.where(r >= 1.0, 2.0, r + 1.0 / r)
    V = eig.eigenvectors
    sb = np.sqrt(betas)
    Q1 = (V * r1) @ V.T / np.outer(sb, sb)
    A = np.outer(sb, sb) * ((V * b) @ V.T)
    return BoundInput(Q=Q, betas=betas, hs=np.zeros(Q.n), m=(1.0,), Qseq=(Q1,), A=A, p=2)


# --- 2-spin eigenvalue bound ------------------------------------------------


def f_theorem1(r: float) -> float:
    """log r + r^2/2 for r <= 1, 2r - 3/2 for r >= 1."""
    if r <= 0.0:
        raise DomainError("f is defined for r > 0")
    if r <= 1.0:
        return math.log(r) + 0.5 * r * r
    return 2.0 * r - 1.5


def bound_theorem1(Q, betas, margin: float = EXCLUSION_MARGIN) -> ExclusionVerdict:
    """Eigenvalue bound for n coupled 2-spin systems without field (all beta_j > 1).

    A singular rescaled constraint gives bound = -inf (excluded).
    """
    Q = Q if isinstance(Q, OverlapMatrix) else OverlapMatrix(Q)
    betas = np.asarray(betas, dtype=float).reshape(-1)
    if betas.size == 1:
        betas = np.full(Q.n, betas[0])
    if betas.size != Q.n:
        raise ValueError("need one beta per replica")
    if np.any(betas <= 1.0):
        raise ValueError("the eigenvalue bound needs every beta_j > 1")
    r = sym_eigen(rescaled_constraint(Q, betas)).eigenvalues
    trivial = float(sum(free_energy_2spin_closed(b) for b in betas))
    if r[0] <= TOL_PSD:
        bound = -math.inf
        reason = "singular constraint"
    else:
        bound = 0.5 * sum(f_theorem1(rj) - math.log(bj) for rj, bj in zip(r, betas))
        reason = ""
    excluded = bool(r[0] < 1.0 - margin)
    if excluded and not reason:
        reason = "smallest rescaled eigenvalue below 1"
    return ExclusionVerdict(bound=float(bound), trivial_sum=trivial, excluded=excluded,
                            margin_used=margin, criterion="min_eigenvalue",
                            eigenvalues=tuple(float(x) for x in r), reason=reason)


def ultrametricity_verdict(beta: float, margin: float = EXCLUSION_MARGIN) -> ExclusionVerdict:
    """Verdict on the three-replica configuration with overlaps (q, q, -q), q = 1 - 1/beta."""
    if beta <= 1.0:
        raise ValueError("need beta > 1")
    q = 1.0 - 1.0 / beta
    if beta >= 2.0:
        return ExclusionVerdict(bound=math.nan, trivial_sum=3 * free_energy_2spin_closed(beta),
                                excluded=True, margin_used=margin, criterion="geometry",
                                eigenvalues=(beta * (1 - 2 * q), beta * (1 + q), beta * (1 + q)),
                                reason="not PSD")
    return bound_theorem1(ultrametric_test_matrix(q), np.full(3, beta), margin)


# --- chaos with fields (2-spin) ---------------------------------------------


def _q2(model: ModelSpec) -> float:
    if model.p != 2:
        raise ValueError("needs p = 2")
    return solve_q_2spin(model)


def chaos_u0(model1: ModelSpec, model2: ModelSpec) -> float:
    """Predicted cross overlap of two 2-spin systems with fields."""
    h1, h2 = model1.h, model2.h
    if h1 == 0.0 and h2 == 0.0:
        raise BothFieldsZero("u0 is undefined when both fields vanish")
    q1, q2 = _q2(model1), _q2(model2)
    if h1 == 0.0 or h2 == 0.0:
        return 0.0
    s = (1.0 - q1) * (1.0 - q2)
    return h1 * h2 * s / (1.0 - model1.beta * model2.beta * s)


def u0_in_window(model1: ModelSpec, model2: ModelSpec) -> bool:
    """Whether |u0| < sqrt(q1 q2), the range the field analysis covers."""
    u0 = chaos_u0(model1, model2)
    return abs(u0) < math.sqrt(_q2(model1) * _q2(model2))


def coupled_field_bound_U(model1: ModelSpec, model2: ModelSpec, u: float,
                          a1: float, a2: float, lam: float) -> float:
    """Two-replica one-level bound U with inner overlaps (q1, u, q2) and A_1 = [[a1, lam], [lam, a2]]."""
    q1, q2 = _q2(model1), _q2(model2)
    if abs(u) > math.sqrt(q1 * q2) + 1e-12:
        raise DomainError("|u| must not exceed sqrt(q1 q2)")
    det = a1 * a2 - lam * lam
    if det <= 0.0 or a1 <= 0.0:
        raise DomainError("A_1 must be positive definite")
    b1, b2 = model1.beta, model2.beta
    c1 = b1 ** 2 * q1 + model1.h ** 2
    c2 = b2 ** 2 * q2 + model2.h ** 2
    e = b1 * b2 * u + model1.h * model2.h
    return (
        0.5 * b1 ** 2 * (1.0 - q1) ** 2
        + 0.5 * b2 ** 2 * (1.0 - q2) ** 2
        + a1 + a2 - 2.0 + 2.0 * lam * u
        - math.log(det)
        + (a2 * c1 + a1 * c2 - 2.0 * e * lam) / det
    )


def coupled_field_dU_dlambda(model1: ModelSpec, model2: ModelSpec, u: float, a1: float, a2: float,
                             lam: float = 0.0, method: str = "closed", step: float = FD_STEP) -> float:
    """dU/dlambda, in closed form or by central differences."""
    if method == "fd":
        return central_difference(lambda t: coupled_field_bound_U(model1, model2, u, a1, a2, t), lam, step)
    if method != "closed":
        raise ValueError("method must be 'closed' or 'fd'")
    q1, q2 = _q2(model1), _q2(model2)
    b1, b2 = model1.beta, model2.beta
    c1 = b1 ** 2 * q1 + model1.h ** 2
    c2 = b2 ** 2 * q2 + model2.h ** 2
    e = b1 * b2 * u + model1.h * model2.h
    det = a1 * a2 - lam * lam
    num = a2 * c1 + a1 * c2 - 2.0 * e * lam
    return 2.0 * u + 2.0 * lam / det - 2.0 * e / det + 2.0 * lam * num / det ** 2


def natural_field_parameters(model1: ModelSpec, model2: ModelSpec) -> tuple[float, float]:
    """a_j = 1 / (1 - q_j), at which U/2 equals P(beta1, h1) + P(beta2, h2) for lambda = 0."""
    return 1.0 / (1.0 - _q2(model1)), 1.0 / (1.0 - _q2(model2))


def trivial_sum_2spin(*models: ModelSpec) -> float:
    return float(sum(free_energy_2spin(mdl) for mdl in models))


# --- pure p-spin, two systems -----------------------------------------------


def _pspin_pair(model1: ModelSpec, model2: ModelSpec):
    if model1.p != model2.p or model1.p < 4:
        raise ValueError("both models need the same even p >= 4")
    if model1.h != 0.0 or model2.h != 0.0:
        raise ValueError("fields must vanish")
    return pspin_critical(model1), pspin_critical(model2)


def pspin_m0(model1: ModelSpec, model2: ModelSpec) -> float:
    """m_0 with 1/m_0 = 1/m_1 + 1/m_2."""
    c1, c2 = _pspin_pair(model1, model2)
    return 1.0 / (1.0 / c1.m + 1.0 / c2.m)


def _pspin_base(model: ModelSpec, q: float) -> float:
    b2 = model.beta ** 2
    b = 1.0 / (1.0 - q)
    return (
        -b2 * (theta(model, 1.0) - theta(model, q))
        + b2 * (dxi(model, 1.0) - dxi(model, q))
        + b - 1.0 - math.log(b)
    )


def _neglog_over(m: float, y: float) -> float:
    """-(1/m) log(1 - y)."""
    if y >= 1.0:
        raise DomainError("logarithm of a nonpositive number")
    return -math.log1p(-y) / m


def pspin_coupled_U(model1: ModelSpec, model2: ModelSpec, c: float, m: float) -> float:
    """Bound for two p-spin systems at overlap u = c sqrt(q1 q2), as a function of m."""
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    if m <= 0.0:
        raise DomainError("m must be positive")
    c1, c2 = _pspin_pair(model1, model2)
    p = model1.p
    pars = [(model1, c1), (model2, c2)]
    cp, cp1 = c ** p, c ** (p - 1)
    base = sum(_pspin_base(mdl, cr.q) for mdl, cr in pars)
    th = [mdl.beta ** 2 * theta(mdl, cr.q) for mdl, cr in pars]
    cross = 2.0 * model1.beta * model2.beta * theta(model1, math.sqrt(c1.q * c2.q))
    term_i = -(c1.m * th[0] + c2.m * th[1]) * (1.0 - cp) - m * (th[0] + th[1] + cross) * cp
    term_ii = 0.0
    S = 0.0
    for mdl, cr in pars:
        g = mdl.beta ** 2 * dxi(mdl, cr.q)
        b = 1.0 / (1.0 - cr.q)
        term_ii += _neglog_over(cr.m, cr.m * g * (1.0 - cp1) / b)
        S += g * cp1 / (b - cr.m * g * (1.0 - cp1))
    term_ii += _neglog_over(m, m * S)
    return float(base + term_i + term_ii)


def pspin_coupled_U_reduced(model1: ModelSpec, model2: ModelSpec, c: float, m: float) -> float:
    """Same bound after substituting the critical-point identities (cross-check path)."""
    c1, c2 = _pspin_pair(model1, model2)
    p = model1.p
    inv = 1.0 / c1.m + 1.0 / c2.m
    cp, cp1 = c ** p, c ** (p - 1)
    delta, gamma = c1.delta, c1.gamma
    base = _pspin_base(model1, c1.q) + _pspin_base(model2, c2.q)
    term_i = -inv * gamma * (1.0 - cp) - m * inv ** 2 * gamma * cp
    inner = 1.0 - delta * (1.0 - cp1)
    term_ii = -inv * math.log(inner) + _neglog_over(m, m * inv * delta * cp1 / inner)
    return float(base + term_i + term_ii)


def pspin_dc(model1: ModelSpec, model2: ModelSpec, c: float) -> float:
    """Closed-form dU/dm at m = m_0."""
    c1, _ = _pspin_pair(model1, model2)
    m0 = pspin_m0(model1, model2)
    p = model1.p
    x = c1.x
    val = -(p - 1) / p * x * x / (1.0 + x) * c ** p - math.log1p(x * c ** (p - 1)) + x * c ** (p - 1)
    return val / m0 ** 2


def pspin_dU_dm_fd(model1: ModelSpec, model2: ModelSpec, c: float, step: float = FD_STEP) -> float:
    m0 = pspin_m0(model1, model2)
    return central_difference(lambda t: pspin_coupled_U(model1, model2, c, t), m0, step)


def _pspin_single(model: ModelSpec):
    if model.p < 4 or model.h != 0.0:
        raise ValueError("needs p >= 4 and h = 0")
    return pspin_critical(model)


def pspin_tail_a0(model: ModelSpec, u: float) -> float:
    crit = _pspin_single(model)
    return 1.0 / (1.0 - crit.q) + model.beta ** 2 * (dxi(model, u) - dxi(model, crit.q))


def pspin_tail_U(model: ModelSpec, u: float, n_param: float, a: float) -> float:
    """Bound excluding same-temperature overlaps u above q, as a function of (n, a).

    The theta weights telescope as 1 on [u, 1], n on [q, u] and m on [0, q];
    the last logarithm carries beta^2 in its denominator like the others.
    """
    crit = _pspin_single(model)
    q, m = crit.q, crit.m
    if not q <= u <= 1.0:
        raise DomainError("need q <= u <= 1")
    if n_param <= 0.0:
        raise DomainError("n must be positive")
    b2 = model.beta ** 2
    jump = b2 * (dxi(model, u) - dxi(model, q))
    inner = a - n_param * jump
    inner2 = inner - m * b2 * dxi(model, q)
    if a <= 0.0 or inner <= 0.0 or inner2 <= 0.0:
        raise DomainError("logarithm of a nonpositive number")
    return float(
        -b2 * (theta(model, 1.0) - theta(model, u))
        - n_param * b2 * (theta(model, u) - theta(model, q))
        - m * b2 * theta(model, q)
        + b2 * (dxi(model, 1.0) - dxi(model, u))
        + a - 1.0 - math.log(a)
        - math.log(inner / a) / n_param
        - math.log(inner2 / inner) / m
    )


def pspin_tail_d(model: ModelSpec, u: float) -> float:
    """Closed-form dU(n, a_0)/dn at n = 1."""
    crit = _pspin_single(model)
    q, m = crit.q, crit.m
    b2 = model.beta ** 2
    w = b2 * (dxi(model, u) - dxi(model, q)) * (1.0 - q)
    return float(
        -b2 * (theta(model, u) - theta(model, q))
        + (1.0 - 1.0 / m) * w
        + w / (m * (1.0 - m * b2 * dxi(model, q) * (1.0 - q)))
        - math.log1p(w)
    )


def pspin_tail_d_fd(model: ModelSpec, u: float, step: float = FD_STEP) -> float:
    a0 = pspin_tail_a0(model, u)
    return central_difference(lambda t: pspin_tail_U(model, u, t, a0), 1.0, step)


def pspin_tail_d_prime(model: ModelSpec, u: float) -> float:
    """d'(u) in the factored form beta^2 xi''(u) (...)."""
    crit = _pspin_single(model)
    q, m = crit.q, crit.m
    b2 = model.beta ** 2
    jump = b2 * (dxi(model, u) - dxi(model, q))
    g = b2 * dxi(model, q) * (1.0 - q) ** 2
    return float(b2 * d2xi(model, u) * (
        -u + jump * (1.0 - q) ** 2 / (1.0 + jump * (1.0 - q)) + g / (1.0 - m * b2 * dxi(model, q) * (1.0 - q))
    ))


def pspin_overlap_support(model1: ModelSpec, model2: ModelSpec) -> tuple[float, float]:
    """The two admissible |overlap| values 0 and sqrt(q1 q2) for p >= 4 without field."""
    c1, c2 = _pspin_pair(model1, model2)
    return 0.0, math.sqrt(c1.q * c2.q)


# --- Gaussian reference value -----------------------------------------------


def lemma4_objective(A, Q, Delta0) -> float:
    """(Tr(AQ) + Tr(A^-1 Delta0) - n - log|A|) / 2."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    return 0.5 * (float(np.sum(A * Q)) + float(np.sum(sym_inv(A) * Delta0)) - n - sym_logdet(A))


def gaussian_F(A, Delta0) -> float:
    """Free energy of the decoupled Gaussian system with quadratic weight A."""
    B = np.asarray(A, dtype=float) + np.eye(np.shape(A)[0])
    return 0.5 * (float(np.sum(sym_inv(B) * Delta0)) - sym_logdet(B))


def lemma4_gradient(A, Q, Delta0) -> np.ndarray:
    """Q - A^-1 - A^-1 Delta0 A^-1 (half the gradient over symmetric matrices)."""
    X = sym_inv(A)
    return np.asarray(Q) - X - X @ Delta0 @ X


def _basis(n: int):
    out = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return out


def _newton(Q, D0, A, tol: float, max_iter: int):
    n = Q.shape[0]
    basis = _basis(n)
    f = lambda M: lemma4_objective(M, Q, D0)
    fa = f(A)
    for _ in range(max_iter):
        X = np.linalg.inv(A)
        X = 0.5 * (X + X.T)
        G = Q - X - X @ D0 @ X
        if np.max(np.abs(G)) <= tol:
            return A, fa, True
        XD = X @ D0
        XE = [X @ E for E in basis]
        grad = np.array([0.5 * np.sum(E * G) for E in basis])
        H = np.empty((len(basis), len(basis)))
        for a, Ea in enumerate(XE):
            for b in range(a, len(basis)):
                Eb = XE[b]
                prod = Ea @ Eb
                val = 0.5 * (np.trace(prod @ XD) + np.trace(Eb @ Ea @ XD) + np.trace(prod))
                H[a, b] = H[b, a] = val
        step = -np.linalg.solve(H, grad)
        dA = sum(s * E for s, E in zip(step, basis))
        t = 1.0
        slope = float(grad @ step)
        gnorm = np.max(np.abs(G))
        while t > 1e-12:
            cand = A + t * dA
            try:
                fc = f(cand)
            except DomainError:
                fc = math.inf
            if fc <= fa + 1e-4 * t * slope:
                break
            # near the optimum the objective is flat to rounding; fall back on the gradient
            if math.isfinite(fc) and fc - fa <= 1e-13 * max(1.0, abs(fa)):
                if np.max(np.abs(lemma4_gradient(cand, Q, D0))) < gnorm:
                    break
            t *= 0.5
        else:
            return A, fa, bool(gnorm <= 1e3 * tol)
        A, fa = 0.5 * (cand + cand.T), fc
    return A, fa, False


def lemma4_value(Q, Delta0, tol: float = 1e-11, max_iter: int = 100):
    """Infimum over positive definite A of (Tr(AQ) + Tr(A^-1 Delta0) - n - log|A|)/2.

    Newton's method on the upper-triangular coordinates with a backtracking
    line search that keeps A positive definite; the objective is convex, so
    the stationary point is the global minimizer. A derivative-free pass is
    used if Newton stalls.

    Returns:
        ``(value, A_min)``.
    """
    Q = np.asarray(Q.entries if isinstance(Q, OverlapMatrix) else Q, dtype=float)
    D0 = np.asarray(Delta0, dtype=float)
    if sym_eigen(Q).eigenvalues[0] <= 0.0:
        raise InvalidMatrix("Q must be positive definite")
    if not psd_check(D0):
        raise InvalidMatrix("Delta0 must be nonnegative definite")
    A0 = sym_inv(Q)
    A, val, ok = _newton(Q, D0, A0, tol, max_iter)
    if not ok and np.max(np.abs(lemma4_gradient(A, Q, D0))) > TOL_GRAD:
        n = Q.shape[0]
        iu = np.triu_indices(n)

        def g(v):
            L = np.zeros((n, n))
            L[iu[1], iu[0]] = v
            M = L @ L.T
            try:
                return lemma4_objective(M, Q, D0)
            except DomainError:
                return math.inf

        L0 = np.linalg.cholesky(A)
        res = minimize(g, L0[iu[1], iu[0]], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000})
        L = np.zeros((n, n))
        L[iu[1], iu[0]] = res.x
        A, val, ok = _newton(Q, D0, L @ L.T, tol, max_iter)
    if np.max(np.abs(lemma4_gradient(A, Q, D0))) > TOL_GRAD:
        raise NoConvergence("stationarity not reached")
    return float(val), A


def phi0_value(Q, Delta0, Delta1) -> float:
    """Interpolation starting value Tr(Q Delta1)/2 + lemma4 infimum."""
    Qa = np.asarray(Q.entries if isinstance(Q, OverlapMatrix) else Q, dtype=float)
    return 0.5 * float(np.sum(Qa * Delta1)) + lemma4_value(Qa, Delta0)[0]


def psi_t(beta: float, n: int, t: float) -> float:
    """n/2 (3 beta - 2 - log beta - t (beta - 1/2))."""
    if beta <= 1.0:
        raise ValueError("needs beta > 1")
    return 0.5 * n * (3.0 * beta - 2.0 - math.log(beta) - t * (beta - 0.5))


def tau(a: float) -> float:
    """Large-deviation rate (a - 1 - log a) / 2."""
    if a <= 0.0:
        raise DomainError("tau needs a > 0")
    return 0.5 * (a - 1.0 - math.log(a))
