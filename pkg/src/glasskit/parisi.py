"""Single-system free-energy functionals and their minimizers.

Inverse temperature is always passed explicitly through ``ModelSpec`` and
enters by replacing xi with beta^2 xi (and theta with beta^2 theta). The
external field is not rescaled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .core import (
    DomainError,
    GlasskitError,
    ModelSpec,
    NoConvergence,
    dxi,
    theta,
    xi,
)

TOL_ROOT = 1e-12
TOL_IDENTITY = 1e-10
TOL_GRAD = 1e-6
TOL_ZERO = 1e-12
MAX_ITER = 10_000
SCAN_POINTS = 10_000


class TrivialPhase(GlasskitError):
    """The minimizing overlap is q = 0; carries ``q = 0.0``."""

    def __init__(self, msg: str, q: float = 0.0):
        super().__init__(msg)
        self.q = q


class MultipleRoots(GlasskitError):
    pass


class NoRoot(GlasskitError):
    pass


@dataclass(frozen=True)
class RsbScheme:
    """Order parameters of a k-step scheme.

    ``m = (m_0, ..., m_k)`` with ``0 = m_0 <= ... <= m_k = 1`` and
    ``q = (q_0, ..., q_{k+1})`` nondecreasing in [0, 1] with ``q_{k+1} = 1``.
    ``b`` is only used by the representation with the auxiliary parameter.
    """

    m: tuple
    q: tuple
    b: float | None = None

    def __post_init__(self):
        m = tuple(float(v) for v in self.m)
        q = tuple(float(v) for v in self.q)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)
        if len(m) < 2 or len(q) != len(m) + 1:
            raise ValueError("need len(m) = k + 1 >= 2 and len(q) = k + 2")
        tol = 1e-12
        if abs(m[0]) > tol or abs(m[-1] - 1.0) > tol:
            raise ValueError("m must start at 0 and end at 1")
        if any(b < a - tol for a, b in zip(m, m[1:])):
            raise ValueError("m must be nondecreasing")
        if abs(q[-1] - 1.0) > tol:
            raise ValueError("q must end at 1")
        if any(v < -tol or v > 1.0 + tol for v in q):
            raise ValueError("q must lie in [0, 1]")
        if any(b < a - tol for a, b in zip(q, q[1:])):
            raise ValueError("q must be nondecreasing")
        if self.b is not None:
            object.__setattr__(self, "b", float(self.b))

    @property
    def k(self) -> int:
        return len(self.m) - 1

    @classmethod
    def replica_symmetric(cls, q1: float, b: float | None = None) -> "RsbScheme":
        return cls(m=(0.0, 1.0), q=(0.0, q1, 1.0), b=b)

    @classmethod
    def two_step(cls, m1: float, q1: float, q2: float, b: float | None = None) -> "RsbScheme":
        return cls(m=(0.0, m1, 1.0), q=(0.0, q1, q2, 1.0), b=b)


def _log1p_over(m: float, x: float) -> float:
    """log(1 + m x) / m, continuous at m = 0."""
    if m == 0.0:
        return x
    y = m * x
    if y <= -1.0:
        raise DomainError("logarithm of a nonpositive number")
    return math.log1p(y) / m


def eval_parisi_13(model: ModelSpec, scheme: RsbScheme) -> float:
    """Value of the auxiliary-parameter functional whose infimum is P(beta, h)."""
    if scheme.b is None:
        raise ValueError("this representation needs the parameter b")
    b2 = model.beta ** 2
    m = np.asarray(scheme.m)
    q = np.asarray(scheme.q)
    k = scheme.k
    b = scheme.b
    # jumps[l] = beta^2 (xi'(q_{l+1}) - xi'(q_l)), l = 0..k
    jumps = b2 * (dxi(model, q[1:]) - dxi(model, q[:-1]))
    # D[l] for l = 1..k+1, D[k+1] = b
    D = np.empty(k + 2)
    D[k + 1] = b
    for l in range(k, 0, -1):
        D[l] = D[l + 1] - m[l] * jumps[l]
    if b <= 0.0 or np.any(D[1:] <= 0.0):
        raise DomainError("D_l = b - d_l must be positive for every l")
    val = b - 1.0 - math.log(b) + (model.h ** 2 + b2 * dxi(model, q[1])) / D[1]
    for l in range(1, k + 1):
        val -= _log1p_over(m[l], -jumps[l] / D[l + 1])
        val -= m[l] * b2 * (theta(model, q[l + 1]) - theta(model, q[l]))
    return 0.5 * float(val)


def eval_cs_14(model: ModelSpec, scheme: RsbScheme) -> float:
    """Value of the Crisanti-Sommers functional at ``scheme``."""
    b2 = model.beta ** 2
    m = np.asarray(scheme.m)
    q = np.asarray(scheme.q)
    k = scheme.k
    # delta[l] for l = 1..k+1, delta[k+1] = 0
    delta = np.zeros(k + 2)
    for l in range(k, 0, -1):
        delta[l] = delta[l + 1] + m[l] * (q[l + 1] - q[l])
    if np.any(delta[1 : k + 1] <= 0.0):
        raise DomainError("delta_l must be positive for every l <= k")
    val = model.h ** 2 * delta[1] + q[1] / delta[1] + math.log(delta[k])
    for l in range(1, k):
        val += _log1p_over(m[l], (q[l + 1] - q[l]) / delta[l + 1])
    for l in range(1, k + 1):
        val += m[l] * b2 * (xi(model, q[l + 1]) - xi(model, q[l]))
    return 0.5 * float(val)


def rs_functional(model: ModelSpec, q: float) -> float:
    """Replica-symmetric Crisanti-Sommers value at overlap q."""
    if not 0.0 <= q < 1.0:
        raise DomainError("q must lie in [0, 1)")
    b2 = model.beta ** 2
    return 0.5 * (
        model.h ** 2 * (1.0 - q)
        + q / (1.0 - q)
        + math.log1p(-q)
        + b2 * xi(model, 1.0)
        - b2 * xi(model, q)
    )


def free_energy_2spin_closed(beta: float) -> float:
    """P(beta) of the 2-spin model without field."""
    if beta <= 1.0:
        return beta ** 2 / 4.0
    return 0.5 * (2.0 * beta - 1.5 - math.log(beta))


# --- minimization -----------------------------------------------------------

_Q_MAX = 1.0 - 1e-10
_LOGD_BOUNDS = (-25.0, 25.0)


def _layout(k: int, form: int):
    names = []
    if form == 13:
        names.append("logD1")
    if k == 1:
        names.append("q1")
    else:
        names += ["m1", "q1", "t"]
    bounds = {
        "logD1": _LOGD_BOUNDS,
        "q1": (0.0, _Q_MAX),
        "m1": (0.0, 1.0),
        "t": (0.0, _Q_MAX),
    }
    return names, [bounds[n] for n in names]


def _scheme_from(z, names, model: ModelSpec, form: int) -> RsbScheme:
    v = dict(zip(names, z))
    q1 = v["q1"]
    if "m1" in v:
        m = (0.0, v["m1"], 1.0)
        q = (0.0, q1, q1 + v["t"] * (1.0 - q1), 1.0)
    else:
        m = (0.0, 1.0)
        q = (0.0, q1, 1.0)
    b = None
    if form == 13:
        # b = D_1 + d_1
        b2 = model.beta ** 2
        qa = np.asarray(q)
        d1 = float(np.sum(np.asarray(m[1:]) * b2 * (dxi(model, qa[2:]) - dxi(model, qa[1:-1]))))
        b = math.exp(v["logD1"]) + d1
    return RsbScheme(m=m, q=q, b=b)


def _starts(k: int, form: int):
    base = []
    if k == 1:
        for q1 in (0.05, 0.5, 0.9):
            base.append({"q1": q1})
    else:
        for m1 in (0.3, 0.8):
            for q1 in (0.0, 0.3):
                for t in (0.5, 0.9):
                    base.append({"m1": m1, "q1": q1, "t": t})
    for s in base:
        if form == 13:
            s["logD1"] = 0.5
    return base


def _projected_gradient(f, z, bounds, step: float = 1e-6) -> np.ndarray:
    g = np.zeros(len(z))
    for i, (lo, hi) in enumerate(bounds):
        zp = z.copy()
        zm = z.copy()
        up = min(step, hi - z[i])
        dn = min(step, z[i] - lo)
        zp[i] += up
        zm[i] -= dn
        if up + dn == 0.0:
            continue
        gi = (f(zp) - f(zm)) / (up + dn)
        if (z[i] - lo <= step and gi > 0.0) or (hi - z[i] <= step and gi < 0.0):
            gi = 0.0
        g[i] = gi
    return g


def _coordinate_polish(f, z, bounds, sweeps: int = 60):
    fz = f(z)
    for _ in range(sweeps):
        start = fz
        for i, (lo, hi) in enumerate(bounds):
            def line(t, i=i):
                w = z.copy()
                w[i] = t
                return f(w)

            res = minimize_scalar(line, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13, "maxiter": 500})
            for cand, val in ((res.x, res.fun), (lo, line(lo)), (hi, line(hi))):
                if val < fz:
                    z = z.copy()
                    z[i] = cand
                    fz = val
        if start - fz <= 1e-15:
            break
    return z, fz


def minimize_parisi(model: ModelSpec, k: int = 1, form: int = 14,
                    tol_grad: float = TOL_GRAD, max_iter: int = MAX_ITER):
    """Minimize a k-step functional (k in {1, 2}).

    Nelder-Mead from a small deterministic set of starts in box coordinates
    (q2 parameterized as a fraction of the gap 1 - q1, D_1 = b - d_1 on a log
    scale), followed by coordinate-wise bounded golden/Brent refinement and
    a projected finite-difference stationarity check.

    Returns:
        ``(scheme, value)``.

    Raises:
        NoConvergence: if the projected gradient exceeds ``tol_grad``.
    """
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    if form not in (13, 14):
        raise ValueError("form must be 13 or 14")
    evaluate = eval_parisi_13 if form == 13 else eval_cs_14
    names, bounds = _layout(k, form)

    def f(z):
        try:
            return evaluate(model, _scheme_from(z, names, model, form))
        except (DomainError, ValueError, OverflowError):
            return math.inf

    best = None
    for start in _starts(k, form):
        z0 = np.array([start[n] for n in names], dtype=float)
        res = minimize(f, z0, method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-8, "fatol": 1e-14, "maxiter": max_iter // 5,
                                "adaptive": len(z0) > 2})
        if best is None or res.fun < best[1]:
            best = (np.asarray(res.x, dtype=float), float(res.fun))
    z, fz = _coordinate_polish(f, best[0], bounds)
    res = minimize(f, z, method="Nelder-Mead", bounds=bounds,
                   options={"xatol": 1e-12, "fatol": 1e-16, "maxiter": max_iter // 5,
                            "initial_simplex": _small_simplex(z, bounds)})
    if res.fun < fz:
        z, fz = np.asarray(res.x, dtype=float), float(res.fun)
    z, fz = _coordinate_polish(f, z, bounds)
    if not math.isfinite(fz):
        raise NoConvergence("no feasible point found")
    g = _projected_gradient(f, z, bounds)
    if np.max(np.abs(g)) > tol_grad:
        raise NoConvergence(f"projected gradient {np.max(np.abs(g)):.3g} exceeds {tol_grad:g}")
    return _scheme_from(z, names, model, form), fz


def _small_simplex(z, bounds, size: float = 1e-4):
    pts = [z.copy()]
    for i, (lo, hi) in enumerate(bounds):
        w = z.copy()
        w[i] = w[i] + size if w[i] + size <= hi else w[i] - size
        pts.append(np.clip(w, [b[0] for b in bounds], [b[1] for b in bounds]))
    return np.array(pts)


# --- 2-spin fixed point -----------------------------------------------------


def _q_equation_2spin(model: ModelSpec, q):
    # (h^2 + beta^2 q)(1-q)^2 - q, same sign and roots on (0,1) as the fixed-point equation
    return (model.h ** 2 + model.beta ** 2 * q) * (1.0 - q) ** 2 - q


def solve_q_2spin(model: ModelSpec) -> float:
    """Minimizing overlap of the 2-spin replica-symmetric functional.

    ``1 - 1/beta`` when h = 0 and beta > 1; otherwise the unique root in
    (0, 1) of h^2 + beta^2 q = q / (1 - q)^2.

    Raises:
        TrivialPhase: h = 0 and beta <= 1 (``exc.q == 0``).
        MultipleRoots: the sign scan sees more than one crossing.
    """
    if model.p != 2:
        raise ValueError("solve_q_2spin needs p = 2")
    if model.h == 0.0:
        if model.beta <= 1.0:
            raise TrivialPhase(f"beta = {model.beta} <= 1 without field: q = 0", q=0.0)
        return 1.0 - 1.0 / model.beta
    grid = np.linspace(0.0, 1.0, SCAN_POINTS + 1)[1:-1]
    vals = _q_equation_2spin(model, grid)
    crossings = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
    # the equation is positive at q = 0 and -> -1 at q = 1
    if len(crossings) > 1:
        raise MultipleRoots(f"{len(crossings)} sign changes on (0, 1)")
    if len(crossings) == 0:
        lo, hi = (0.0, grid[0]) if vals[0] < 0 else (grid[-1], 1.0)
    else:
        i = crossings[0]
        lo, hi = grid[i], grid[i + 1]
    q = brentq(lambda t: _q_equation_2spin(model, t), lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps,
               maxiter=MAX_ITER)
    resid = abs(_q_equation_2spin(model, q))
    if resid > TOL_ROOT:
        raise NoConvergence(f"root residual {resid:.3g}")
    return float(q)


def free_energy_2spin(model: ModelSpec) -> float:
    """P(beta, h) for p = 2 from the replica-symmetric functional."""
    try:
        q = solve_q_2spin(model)
    except TrivialPhase:
        q = 0.0
    return rs_functional(model, q)


# --- pure p-spin, p >= 4, no field ------------------------------------------


def _x_equation(p: int, x: float) -> float:
    return (1.0 + x) / x ** 2 * math.log1p(x) - 1.0 / x - 1.0 / p


def solve_x(p: int) -> float:
    """Unique positive root x of 1/p = (1+x)/x^2 log(1+x) - 1/x; 0 for p = 2."""
    if int(p) != p or p < 2 or p % 2:
        raise ValueError("p must be an even integer >= 2")
    if p == 2:
        return 0.0
    lo, hi = 1e-6, 10.0
    while _x_equation(p, hi) > 0.0:
        hi *= 2.0
    x = brentq(lambda t: _x_equation(p, t), lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps,
               maxiter=MAX_ITER)
    resid = abs(_x_equation(p, x))
    if resid > TOL_ROOT:
        raise NoConvergence(f"x residual {resid:.3g}")
    return float(x)


def eval_pspin_2rsb(model: ModelSpec, q: float, m: float) -> float:
    """Two-step functional with q_1 = 0 (no field), as a function of (q, m)."""
    if not (0.0 <= q < 1.0 and 0.0 < m <= 1.0):
        raise DomainError("need 0 <= q < 1 and 0 < m <= 1")
    b2 = model.beta ** 2
    return 0.5 * (
        b2 * xi(model, 1.0)
        + (m - 1.0) * b2 * xi(model, q)
        + (1.0 - 1.0 / m) * math.log1p(-q)
        + math.log1p(-q * (1.0 - m)) / m
    )


def check_trivial_phase(model: ModelSpec, tol_zero: float = TOL_ZERO) -> bool:
    """True iff sup over s in [0, 1) of beta^2 xi(s) + log(1-s) + s is <= tol_zero."""
    b2 = model.beta ** 2

    def g(s):
        return b2 * xi(model, s) + np.log1p(-s) + s

    s = np.linspace(0.0, 1.0, SCAN_POINTS + 1)[:-1]
    vals = g(s)
    i = int(np.argmax(vals))
    sup = float(vals[i])
    lo = s[max(i - 1, 0)]
    hi = s[min(i + 1, len(s) - 1)]
    if hi > lo:
        res = minimize_scalar(lambda t: -g(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-14})
        sup = max(sup, -float(res.fun))
    return sup <= tol_zero


@dataclass(frozen=True)
class PspinCritical:
    x: float
    delta: float
    gamma: float
    q: float
    m: float


def critical_residuals(model: ModelSpec, q: float, m: float) -> tuple[float, float]:
    """Residuals of the two stationarity equations of the (q, m) functional."""
    b2 = model.beta ** 2
    a = 1.0 - q
    c = 1.0 - q + q * m
    r1 = b2 * dxi(model, q) - (1.0 / a - 1.0 / c) / m
    r2 = b2 * xi(model, q) - (math.log(c / a) / m ** 2 - q / (m * c))
    return float(r1), float(r2)


def lemma3_residuals(model: ModelSpec, crit: PspinCritical) -> tuple[float, float, float]:
    b2 = model.beta ** 2
    q, m = crit.q, crit.m
    return (
        q * m - crit.x * (1.0 - q),
        m * b2 * dxi(model, q) * (1.0 - q) - crit.delta,
        m * m * b2 * theta(model, q) - crit.gamma,
    )


def pspin_critical(model: ModelSpec) -> PspinCritical:
    """Critical (q, m) of the two-step functional and the associated x, delta, gamma.

    Candidate overlaps solve beta^2 q^(p-2) (1-q)^2 (1+x) = 1; each is lifted
    to m = x (1-q) / q and the feasible candidate (0 < m <= 1) with the
    smallest functional value wins.

    Raises:
        TrivialPhase: the minimizing overlap is 0.
        NoRoot: no feasible candidate.
    """
    p = model.p
    if p < 4:
        raise ValueError("pspin_critical needs p >= 4")
    if model.h != 0.0:
        raise ValueError("pspin_critical needs h = 0")
    if check_trivial_phase(model):
        raise TrivialPhase(f"p = {p}, beta = {model.beta} is in the trivial phase", q=0.0)
    x = solve_x(p)
    delta = x / (1.0 + x)
    gamma = (p - 1) / p * x * x / (1.0 + x)
    b2 = model.beta ** 2

    def reduced(q):
        return b2 * q ** (p - 2) * (1.0 - q) ** 2 * (1.0 + x) - 1.0

    grid = np.linspace(0.0, 1.0, SCAN_POINTS + 1)[1:-1]
    vals = reduced(grid)
    idx = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
    best = None
    for i in idx:
        q = brentq(reduced, grid[i], grid[i + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps)
        m = x * (1.0 - q) / q
        if not 0.0 < m <= 1.0:
            continue
        val = eval_pspin_2rsb(model, q, m)
        if best is None or val < best[0]:
            best = (val, q, m)
    if best is None:
        raise NoRoot(f"no feasible critical point for p = {p}, beta = {model.beta}")
    _, q, m = best
    crit = PspinCritical(x=x, delta=delta, gamma=gamma, q=float(q), m=float(m))
    r1, r2 = critical_residuals(model, q, m)
    if max(abs(r1), abs(r2)) > 1e3 * TOL_ROOT:
        raise NoConvergence(f"critical point residuals ({r1:.3g}, {r2:.3g})")
    return crit


def pspin_free_energy(model: ModelSpec, crit: PspinCritical | None = None) -> float:
    """P(beta) for p >= 4 without field, assembled from the critical point.

    In the trivial phase this is beta^2 xi(1) / 2.
    """
    if crit is None:
        try:
            crit = pspin_critical(model)
        except TrivialPhase:
            return 0.5 * model.beta ** 2 * xi(model, 1.0)
    b2 = model.beta ** 2
    q, m = crit.q, crit.m
    b = 1.0 / (1.0 - q)
    two_p = (
        b2 * dxi(model, 1.0) - b2 * dxi(model, q)
        + b - 1.0 - math.log(b)
        - math.log1p(-crit.delta) / m
        - crit.gamma / m
        - b2 * (theta(model, 1.0) - theta(model, q))
    )
    return 0.5 * float(two_p)


def free_energy(model: ModelSpec) -> float:
    """P(beta, h): closed paths for p = 2 and for p >= 4 at h = 0, else numeric."""
    if model.p == 2:
        return free_energy_2spin(model)
    if model.h == 0.0:
        return pspin_free_energy(model)
    return minimize_parisi(model, k=2, form=14)[1]
