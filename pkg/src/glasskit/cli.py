"""Command-line entry point: ``glasskit {parisi,bound,simulate} ...``.

Every run emits one record ``{command, parameters, values, residuals,
verdict, seed, version}`` as JSON, or as CSV rows. Exit codes: 0 success,
2 invalid input, 3 numeric failure, 4 insufficient sampling.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bounds import (
    BoundInput,
    bound_theorem1,
    chaos_u0,
    coupled_field_bound_U,
    coupled_field_dU_dlambda,
    guerra_bound,
    lemma4_gradient,
    lemma4_value,
    natural_field_parameters,
    phi0_value,
    pspin_coupled_U,
    pspin_dc,
    pspin_dU_dm_fd,
    pspin_m0,
    pspin_tail_a0,
    pspin_tail_d,
    pspin_tail_d_fd,
    pspin_tail_U,
    remark_parameters,
    theorem1_parameters,
    trivial_sum_2spin,
    u0_in_window,
    ultrametricity_verdict,
)
from .core import GlasskitError, ModelSpec, NoConvergence, OverlapMatrix
from .parisi import (
    MultipleRoots,
    NoRoot,
    TrivialPhase,
    free_energy_2spin_closed,
    lemma3_residuals,
    minimize_parisi,
    pspin_critical,
    pspin_free_energy,
    solve_q_2spin,
)
from .simulator import ChainTooShort, McConfig, estimate_overlap_moments, lemma2_check, run_overlaps

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_SAMPLING = 0, 2, 3, 4


class UsageError(GlasskitError):
    pass


# --- parsing helpers --------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _range(text: str) -> np.ndarray:
    """``start:stop:step`` inclusive of ``stop`` up to rounding."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("ranges are written start:stop:step")
    a, b, h = (float(v) for v in parts)
    if h <= 0 or b < a:
        raise UsageError("need start <= stop and step > 0")
    n = int(math.floor((b - a) / h + 1e-9))
    return a + h * np.arange(n + 1)


def _matrix_file(path: str) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(v) for v in line.replace(",", " ").split()])
    if not rows or any(len(r) != len(rows) for r in rows):
        raise UsageError(f"{path}: expected a square matrix, one row per line")
    return np.array(rows)


def _square(values: list[float], name: str) -> np.ndarray:
    n = int(round(math.sqrt(len(values))))
    if n * n != len(values) or n == 0:
        raise UsageError(f"{name}: {len(values)} entries do not form a square matrix")
    return np.array(values).reshape(n, n)


def _matrix(args, flag: str, required: bool = True):
    inline = getattr(args, flag, None)
    path = getattr(args, f"{flag}_file", None)
    if inline and path:
        raise UsageError(f"give --{flag} or --{flag}-file, not both")
    if inline:
        return _square(_floats(inline), f"--{flag}")
    if path:
        return _matrix_file(path)
    if required:
        raise UsageError(f"--{flag} or --{flag}-file is required")
    return None


def _per_replica(values: list[float], n: int, name: str) -> np.ndarray:
    if len(values) == 1:
        return np.full(n, values[0])
    if len(values) != n:
        raise UsageError(f"{name}: need 1 or {n} values")
    return np.array(values)


def _clean(x):
    """Convert numpy containers and scalars to plain JSON-able Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def make_record(command: str, parameters: dict, values, residuals=None, verdict=None, seed=None) -> dict:
    return _clean({
        "command": command,
        "parameters": parameters,
        "values": values,
        "residuals": residuals or {},
        "verdict": verdict,
        "seed": seed,
        "version": __version__,
    })


def _csv_text(record: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    rows = record["values"].get("rows") if isinstance(record["values"], dict) else None
    if rows:
        cols = list(rows[0].keys())
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in cols])
        return buf.getvalue()
    w.writerow(["section", "key", "value"])
    for section in ("parameters", "values", "residuals"):
        for k, v in (record[section] or {}).items():
            w.writerow([section, k, json.dumps(v)])
    for k in ("command", "verdict", "seed", "version"):
        w.writerow(["meta", k, json.dumps(record[k])])
    return buf.getvalue()


def emit(record: dict, fmt: str, output: str | None) -> None:
    text = json.dumps(record, indent=2) + "\n" if fmt == "json" else _csv_text(record)
    if output:
        with open(output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    env = os.environ.get("GLASSKIT_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError("GLASSKIT_SEED must be an integer") from exc
    return int(args.seed)


def _model(p, beta, h=0.0) -> ModelSpec:
    try:
        return ModelSpec(p, beta, h)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --- parisi -----------------------------------------------------------------


def cmd_parisi(args) -> dict:
    model = _model(args.p, args.beta, args.h)
    params = {"p": model.p, "beta": model.beta, "h": model.h, "k": args.k, "form": args.form}
    values, resid = {}, {}
    verdict = None
    if model.p >= 4 and model.h == 0.0:
        try:
            crit = pspin_critical(model)
        except TrivialPhase:
            values = {"value": pspin_free_energy(model), "q": 0.0, "m": None}
            verdict = "trivial phase"
            return make_record("parisi", params, values, resid, verdict, args.seed_value)
        values["closed_value"] = pspin_free_energy(model, crit)
        values.update({"q": crit.q, "m": crit.m, "x": crit.x, "delta": crit.delta, "gamma": crit.gamma})
        r = lemma3_residuals(model, crit)
        resid.update({"lemma3_qm": r[0], "lemma3_delta": r[1], "lemma3_gamma": r[2]})
    k = args.k if args.k is not None else (1 if model.p == 2 else 2)
    params["k"] = k
    scheme, value = minimize_parisi(model, k=k, form=args.form)
    values.update({"value": value, "scheme_m": list(scheme.m), "scheme_q": list(scheme.q)})
    if scheme.b is not None:
        values["scheme_b"] = scheme.b
    if model.p == 2:
        try:
            q = solve_q_2spin(model)
        except TrivialPhase:
            q = 0.0
        values["q_fixed_point"] = q
        if model.h == 0.0:
            closed = free_energy_2spin_closed(model.beta)
            values["closed_value"] = closed
            resid["value_minus_closed"] = value - closed
    elif "closed_value" in values:
        resid["value_minus_closed"] = value - values["closed_value"]
    return make_record("parisi", params, values, resid, verdict, args.seed_value)


# --- bound ------------------------------------------------------------------


def _verdict_dict(v) -> dict:
    return {"bound": v.bound, "trivial_sum": v.trivial_sum, "excluded": v.excluded,
            "margin_used": v.margin_used, "criterion": v.criterion,
            "eigenvalues": list(v.eigenvalues), "reason": v.reason}


def cmd_bound(args) -> dict:
    return _BOUND[args.which](args)


def _b_theorem1(args) -> dict:
    Q = OverlapMatrix(_matrix(args, "q"))
    betas = _per_replica(_floats(args.betas), Q.n, "--betas")
    v = bound_theorem1(Q, betas)
    params = {"q": Q.entries, "betas": betas}
    verdict = "excluded" if v.excluded else "not excluded"
    return make_record("bound theorem1", params, _verdict_dict(v), {}, verdict, args.seed_value)


def _b_ultrametric(args) -> dict:
    v = ultrametricity_verdict(args.beta)
    values = _verdict_dict(v)
    values["q"] = 1.0 - 1.0 / args.beta
    values["r3"] = v.min_eigenvalue
    verdict = "excluded" if v.excluded else "not excluded"
    return make_record("bound ultrametric", {"beta": args.beta}, values, {}, verdict, args.seed_value)


def _b_chaos(args) -> dict:
    m1 = _model(2, args.beta1, args.h1)
    m2 = _model(2, args.beta2, args.h2)
    u0 = chaos_u0(m1, m2)
    a1, a2 = natural_field_parameters(m1, m2)
    values = {
        "u0": u0,
        "q1": solve_q_2spin(m1),
        "q2": solve_q_2spin(m2),
        "in_window": u0_in_window(m1, m2),
        "half_U_at_u0": 0.5 * coupled_field_bound_U(m1, m2, u0, a1, a2, 0.0),
        "trivial_sum": trivial_sum_2spin(m1, m2),
    }
    resid = {
        "dU_dlambda_closed": coupled_field_dU_dlambda(m1, m2, u0, a1, a2, 0.0, "closed"),
        "dU_dlambda_fd": coupled_field_dU_dlambda(m1, m2, u0, a1, a2, 0.0, "fd"),
    }
    params = {"beta1": args.beta1, "h1": args.h1, "beta2": args.beta2, "h2": args.h2}
    verdict = "u0 inside analyzed window" if values["in_window"] else "u0 outside analyzed window"
    return make_record("bound chaos-u0", params, values, resid, verdict, args.seed_value)


def _b_pspin_coupled(args) -> dict:
    betas = _floats(args.betas)
    if len(betas) != 2:
        raise UsageError("--betas needs two values")
    m1, m2 = _model(args.p, betas[0]), _model(args.p, betas[1])
    if args.p < 4:
        raise UsageError("pspin-coupled needs p >= 4")
    m0 = pspin_m0(m1, m2)
    target = 2 * pspin_free_energy(m1) + 2 * pspin_free_energy(m2)
    rows = []
    for c in _range(args.scan_c):
        c = float(min(c, 1.0))
        rows.append({"c": c, "U_m0": pspin_coupled_U(m1, m2, c, m0), "d": pspin_dc(m1, m2, c),
                     "d_fd": pspin_dU_dm_fd(m1, m2, c)})
    resid = {"max_U_minus_2P": max(abs(r["U_m0"] - target) for r in rows),
             "max_d_closed_minus_fd": max(abs(r["d"] - r["d_fd"]) for r in rows)}
    params = {"p": args.p, "betas": betas, "scan_c": args.scan_c}
    return make_record("bound pspin-coupled", params, {"m0": m0, "two_P_sum": target, "rows": rows}, resid,
                       None, args.seed_value)


def _b_pspin_tail(args) -> dict:
    model = _model(args.p, args.beta)
    if args.p < 4:
        raise UsageError("pspin-tail needs p >= 4")
    crit = pspin_critical(model)
    grid = _range(args.scan_u) if args.scan_u else np.linspace(crit.q, 1.0, 21)
    rows = []
    for u in grid:
        u = float(min(max(u, crit.q), 1.0))
        a0 = pspin_tail_a0(model, u)
        rows.append({"u": u, "U_1_a0": pspin_tail_U(model, u, 1.0, a0), "d": pspin_tail_d(model, u),
                     "d_fd": pspin_tail_d_fd(model, u)})
    P2 = 2 * pspin_free_energy(model, crit)
    resid = {"max_U_minus_2P": max(abs(r["U_1_a0"] - P2) for r in rows),
             "d_at_q": pspin_tail_d(model, crit.q)}
    params = {"p": args.p, "beta": args.beta, "scan_u": args.scan_u}
    return make_record("bound pspin-tail", params, {"q": crit.q, "m": crit.m, "two_P": P2, "rows": rows}, resid,
                       None, args.seed_value)


def _b_guerra(args) -> dict:
    Q = OverlapMatrix(_matrix(args, "q"))
    betas = _per_replica(_floats(args.betas), Q.n, "--betas")
    hs = _per_replica(_floats(args.hs), Q.n, "--hs")
    if args.construct == "remark":
        if len(set(betas.tolist())) != 1 or np.any(hs != 0):
            raise UsageError("the remark construction needs equal betas and zero fields")
        inp = remark_parameters(Q, float(betas[0]))
    elif args.construct == "diagonal":
        if np.any(hs != 0):
            raise UsageError("the diagonal construction needs zero fields")
        inp = theorem1_parameters(Q, betas)
    else:
        Q1 = _matrix(args, "q1")
        A = _matrix(args, "a")
        inp = BoundInput(Q=Q, betas=betas, hs=hs, m=(1.0,), Qseq=(Q1,), A=A, p=args.p)
    value = guerra_bound(inp)
    params = {"q": Q.entries, "betas": betas, "hs": hs, "construct": args.construct, "p": inp.p}
    values = {"bound": value, "q1": inp.Qseq[0], "a": inp.A}
    if inp.p == 2 and np.all(hs == 0) and np.all(betas > 1):
        values["trivial_sum"] = float(sum(free_energy_2spin_closed(b) for b in betas))
    return make_record("bound guerra", params, values, {}, None, args.seed_value)


def _b_lemma4(args) -> dict:
    Q = _matrix(args, "q")
    D0 = _matrix(args, "delta0")
    value, A = lemma4_value(Q, D0)
    values = {"value": value, "a_min": A}
    D1 = _matrix(args, "delta1", required=False)
    if D1 is not None:
        values["phi0"] = phi0_value(Q, D0, D1)
    resid = {"stationarity_max": float(np.max(np.abs(lemma4_gradient(A, Q, D0))))}
    return make_record("bound lemma4", {"q": Q, "delta0": D0}, values, resid, None, args.seed_value)


_BOUND = {
    "theorem1": _b_theorem1,
    "ultrametric": _b_ultrametric,
    "chaos-u0": _b_chaos,
    "pspin-coupled": _b_pspin_coupled,
    "pspin-tail": _b_pspin_tail,
    "guerra": _b_guerra,
    "lemma4": _b_lemma4,
}


# --- simulate ---------------------------------------------------------------


def _config(args) -> McConfig:
    try:
        return McConfig(N=args.N, sweeps=args.sweeps, burn_in=args.burn_in, replicas=2, seed=args.seed_value,
                        epsilon=args.epsilon, thin=args.thin, n_disorder=args.disorder, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _estimate_values(est) -> dict:
    return {"mean": est.mean, "std_error": est.std_error, "n_eff": est.n_eff, "mode": est.mode,
            "per_disorder": est.per_disorder, "histogram": est.histogram, "bin_edges": est.bin_edges}


def cmd_simulate(args) -> dict:
    if args.p != 2:
        raise UsageError("simulation supports p = 2 only")
    cfg = _config(args)
    base = {"N": cfg.N, "sweeps": cfg.sweeps, "burn_in": cfg.burn_in, "thin": cfg.thin,
            "n_disorder": cfg.n_disorder, "epsilon": cfg.epsilon}
    if args.which == "overlap":
        model = _model(2, args.beta, args.h)
        run = run_overlaps(model, model, cfg)
        est = estimate_overlap_moments(model, model, cfg, moment=args.moment, run=run)
        values = _estimate_values(est)
        try:
            q = solve_q_2spin(model)
        except TrivialPhase:
            q = 0.0
        values["prediction"] = q ** args.moment if args.moment % 2 == 0 or model.h != 0 else 0.0
        values["q"] = q
        params = dict(base, beta=args.beta, h=args.h, moment=args.moment)
        name = "simulate overlap"
    elif args.which == "chaos":
        m1 = _model(2, args.beta1, args.h1)
        m2 = _model(2, args.beta2, args.h2)
        run = run_overlaps(m1, m2, cfg)
        est = estimate_overlap_moments(m1, m2, cfg, moment=1, run=run)
        values = _estimate_values(est)
        values["prediction_u0"] = chaos_u0(m1, m2)
        params = dict(base, beta1=args.beta1, h1=args.h1, beta2=args.beta2, h2=args.h2)
        name = "simulate chaos"
    else:
        m1 = _model(2, args.beta1, args.h1)
        m2 = _model(2, args.beta2, args.h2)
        lhs, rhs, se = lemma2_check(m1, m2, cfg, args.k)
        values = {"lhs": lhs, "rhs": rhs, "combined_std_error": se}
        params = dict(base, beta1=args.beta1, h1=args.h1, beta2=args.beta2, h2=args.h2, k=args.k)
        rec = make_record("simulate lemma2", params, values, {"lhs_minus_rhs": lhs - rhs},
                          "holds" if lhs <= rhs + 3 * se else "violated", cfg.seed)
        return rec
    if args.trace:
        run.write_csv(args.trace)
    return make_record(name, params, values, {}, None, cfg.seed)


# --- argument parser --------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o", default=None, help="write here instead of stdout")
    p.add_argument("--seed", type=int, default=0, help="overridden by GLASSKIT_SEED")


def _matrix_arg(p, flag: str, help_text: str) -> None:
    p.add_argument(f"--{flag}", default=None, help=f"{help_text}, row-major comma list")
    p.add_argument(f"--{flag}-file", dest=f"{flag.replace('-', '_')}_file", default=None,
                   help="plain-text matrix, one row per line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glasskit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"glasskit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("parisi", help="minimize the single-system functional")
    pp.add_argument("--p", type=int, default=2)
    pp.add_argument("--beta", type=float, required=True)
    pp.add_argument("--h", type=float, default=0.0)
    pp.add_argument("--k", type=int, choices=(1, 2), default=None)
    pp.add_argument("--form", type=int, choices=(13, 14), default=14,
                    help="13: auxiliary-parameter form, 14: Crisanti-Sommers form")
    _common(pp)

    pb = sub.add_parser("bound", help="coupled-replica bounds and verdicts")
    bs = pb.add_subparsers(dest="which", required=True)
    b = bs.add_parser("theorem1")
    _matrix_arg(b, "q", "overlap constraint")
    b.add_argument("--betas", required=True)
    _common(b)
    b = bs.add_parser("ultrametric")
    b.add_argument("--beta", type=float, required=True)
    _common(b)
    b = bs.add_parser("chaos-u0")
    for name in ("beta1", "h1", "beta2", "h2"):
        b.add_argument(f"--{name}", type=float, required=True)
    _common(b)
    b = bs.add_parser("pspin-coupled")
    b.add_argument("--p", type=int, default=4)
    b.add_argument("--betas", required=True)
    b.add_argument("--scan-c", default="0:1:0.05")
    _common(b)
    b = bs.add_parser("pspin-tail")
    b.add_argument("--p", type=int, default=4)
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--scan-u", default=None, help="start:stop:step, clipped to [q, 1]")
    _common(b)
    b = bs.add_parser("guerra")
    _matrix_arg(b, "q", "overlap constraint")
    b.add_argument("--betas", required=True)
    b.add_argument("--hs", default="0")
    b.add_argument("--p", type=int, default=2)
    b.add_argument("--construct", choices=("remark", "diagonal", "explicit"), default="explicit")
    _matrix_arg(b, "q1", "inner level Q^1 (explicit)")
    _matrix_arg(b, "a", "top matrix A (explicit)")
    _common(b)
    b = bs.add_parser("lemma4")
    _matrix_arg(b, "q", "positive definite Q")
    _matrix_arg(b, "delta0", "nonnegative definite Delta0")
    _matrix_arg(b, "delta1", "optional Delta1 for the interpolation start value")
    _common(b)

    ps = sub.add_parser("simulate", help="Monte Carlo for p = 2")
    ss = ps.add_subparsers(dest="which", required=True)
    for name in ("overlap", "chaos", "lemma2"):
        s = ss.add_parser(name)
        s.add_argument("--p", type=int, default=2)
        s.add_argument("--N", type=int, default=400)
        s.add_argument("--sweeps", type=int, default=20_000)
        s.add_argument("--burn-in", type=int, default=5_000)
        s.add_argument("--thin", type=int, default=10)
        s.add_argument("--disorder", type=int, default=8)
        s.add_argument("--epsilon", type=float, default=0.02)
        s.add_argument("--workers", type=int, default=1)
        if name == "overlap":
            s.add_argument("--beta", type=float, required=True)
            s.add_argument("--h", type=float, default=0.0)
            s.add_argument("--moment", type=int, default=2)
        else:
            s.add_argument("--beta1", type=float, required=True)
            s.add_argument("--h1", type=float, default=0.0)
            s.add_argument("--beta2", type=float, required=True)
            s.add_argument("--h2", type=float, default=0.0)
        if name == "lemma2":
            s.add_argument("--k", type=int, default=2)
        else:
            s.add_argument("--trace", default=None, help="write the raw overlap trace CSV here")
        _common(s)
    return parser


_COMMANDS = {"parisi": cmd_parisi, "bound": cmd_bound, "simulate": cmd_simulate}


def run(argv=None) -> tuple[int, dict | None]:
    """Parse, execute and return ``(exit_code, record)`` without writing output."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), None
    try:
        args.seed_value = _seed(args)
        record = _COMMANDS[args.command](args)
    except (ChainTooShort,) as exc:
        print(f"glasskit: {exc}", file=sys.stderr)
        return EXIT_SAMPLING, None
    except (NoConvergence, MultipleRoots, NoRoot, FloatingPointError) as exc:
        print(f"glasskit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None
    except (UsageError, ValueError, OSError) as exc:
        print(f"glasskit: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID, None
    except GlasskitError as exc:
        print(f"glasskit: {exc}", file=sys.stderr)
        return EXIT_NUMERIC, None
    record["_format"] = args.format
    record["_output"] = args.output
    return EXIT_OK, record


def main(argv=None) -> int:
    code, record = run(argv)
    if record is not None:
        fmt = record.pop("_format")
        out = record.pop("_output")
        emit(record, fmt, out)
    return code


if __name__ == "__main__":
    sys.exit(main())
