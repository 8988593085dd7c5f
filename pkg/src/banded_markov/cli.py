"""Command-line front end.

Exit codes: 0 on success, 2 for package errors (error JSON on stderr),
1 for anything else.
"""
import argparse
import csv
import io
import json
import math
import sys
import traceback

import numpy as np

from .banded_core import load_spec, reflecting_truncation, truncate
from .config import DEFAULT_TOLERANCES
from .errors import BandedMarkovError, SpecFormatError
from .factorization import compute_pbf, reconstruct, stochastic_normalize
from .markov_analysis import (
    analyze,
    classify_infinite,
    detailed_balance_residual,
    doob_transform,
    kstep_matrix,
    stationary,
    time_reversal,
)
from .recursion_poly import InitialConditions, eval_recursions
from .simulate import SimConfig, simulate
from .spectral import (
    biorthogonality_check,
    eigensystem,
    eigenvector_sign_changes,
    interlaces,
    mass_bound,
    mixed_orthogonality_check,
    spectral_measure,
)

SCHEMA = "banded-markov/1"
COMMANDS = ("factorize", "spectrum", "analyze", "classify", "simulate", "verify", "poly")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(obj):
    """Canonical JSON: sorted keys, shortest round-trip floats, non-finite as null."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _tol_pair(text):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    if key not in DEFAULT_TOLERANCES.names():
        raise argparse.ArgumentTypeError(f"unknown tolerance {key!r}")
    try:
        v = float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} needs a number")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"tolerance {key!r} must be positive")
    return key, v


def _tol_help():
    return "tolerance override key=value (repeatable); defaults: " + ", ".join(
        f"{k}={getattr(DEFAULT_TOLERANCES, k)!r}" for k in DEFAULT_TOLERANCES.names())


def build_parser():
    ap = argparse.ArgumentParser(prog="banded-markov",
                                 description="Spectral analysis of banded stochastic matrices.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=True, help="matrix-spec JSON file")
    common.add_argument("--N", type=_int_list, help="truncation order(s), comma separated")
    common.add_argument("--ic", help="initial conditions as JSON {\"nu\": [[..]], \"xi\": [[..]]} or a file")
    common.add_argument("--tol", type=_tol_pair, action="append", default=[], metavar="KEY=VAL",
                        help=_tol_help())
    common.add_argument("--seed", type=int, default=0, help="random seed (simulate)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"),
                        help="output format (default json; csv for 'poly eval')")
    sub = ap.add_subparsers(dest="command", required=True)

    f = sub.add_parser("factorize", parents=[common], help="positive bidiagonal factorization")
    f.add_argument("--depth", type=int, help="rows to factor (generators; default N + 1)")
    f.add_argument("--theta", type=float, default=0.5, help="gauge for the free factor entries")
    sub.add_parser("spectrum", parents=[common], help="eigenvalues and spectral masses")
    sub.add_parser("analyze", parents=[common], help="finite-truncation chain report")
    c = sub.add_parser("classify", parents=[common], help="recurrence/ergodicity trends over N")
    c.add_argument("--N-list", dest="N_list", type=_int_list, help="increasing truncation orders")
    c.add_argument("--s-grid", dest="s_grid", type=_float_list, help="generating-function arguments")
    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimates")
    s.add_argument("--steps", type=int, default=10 ** 5)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--burn-in", dest="burn_in", type=int, default=0)
    s.add_argument("--k-max", dest="k_max", type=int, default=4)
    s.add_argument("--size", type=int, help="reflecting truncation size for generators (default 10 N)")
    sub.add_parser("verify", parents=[common], help="run the invariant suites")
    p = sub.add_parser("poly", parents=[common], help="recursion polynomial tables")
    p.add_argument("action", choices=("eval",))
    p.add_argument("--x", type=_float_list, required=True, help="evaluation points")
    return ap


def _load_ic(text):
    if text is None:
        return None
    if not text.lstrip().startswith("{"):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    try:
        d = json.loads(text)
        return InitialConditions(np.array(d["nu"], dtype=float), np.array(d["xi"], dtype=float))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SpecFormatError(f"bad initial conditions: {exc}") from exc


def _orders(args, T, default=None):
    if args.N:
        return args.N
    if not T.is_generator:
        return [T.size - 1 if default is None else min(default, T.size - 1)]
    raise SpecFormatError("--N is required for generator matrices")


def _cmd_factorize(args, T, tol, ic):
    depth = args.depth
    if depth is None and T.is_generator:
        depth = _orders(args, T)[-1] + 1
    chain = compute_pbf(T, depth=depth, theta=args.theta, tol=tol)
    st = stochastic_normalize(chain, T_is_stochastic=T.mode == "stochastic", tol=tol)
    A = truncate(T, chain.depth - 1)
    result = {
        "raw": chain.to_dict(),
        "stochastic": st.to_dict(),
        "reconstruction_error": float(np.max(np.abs(reconstruct(chain) - A))),
    }
    if args.format == "csv":
        rows = []
        for name, ch in (("raw", chain), ("stochastic", st)):
            for i, fac in enumerate(list(ch.lowers) + list(ch.uppers)):
                for n, d in enumerate(fac.diag):
                    off = fac.offdiag[n] if n < len(fac.offdiag) else float("nan")
                    rows.append((name, i, fac.kind, n, d, off))
        return result, _csv(["form", "factor", "kind", "n", "diag", "offdiag"], rows)
    return result, None


def _cmd_spectrum(args, T, tol, ic):
    out, rows = [], []
    for N in _orders(args, T):
        m = spectral_measure(T, N, ic, tol)
        out.append({"N": N, "lambdas": m.lambdas, "masses": m.masses, "mu": m.mu, "rho": m.rho,
                    "christoffel_positive": m.christoffel_positive,
                    "mass_sum_error": float(np.max(np.abs(m.mass_sum() - mass_bound(m.ic))))})
        for k, lam in enumerate(m.lambdas):
            rows.append([N, k, lam] + m.masses[k].ravel().tolist())
    header = ["N", "k", "lambda"] + [f"M_{b}_{a}" for b in range(T.q) for a in range(T.p)]
    return {"spectra": out}, _csv(header, rows) if args.format == "csv" else None


def _cmd_analyze(args, T, tol, ic):
    reports = [analyze(T, N, ic, tol) for N in _orders(args, T)]
    rows = [(r.N, n, r.pi[n], r.return_times[n]) for r in reports for n in range(r.N + 1)]
    text = _csv(["N", "n", "pi", "return_time"], rows) if args.format == "csv" else None
    return {"reports": [r.to_dict() for r in reports]}, text


def _cmd_classify(args, T, tol, ic):
    N_list = args.N_list or args.N
    if not N_list:
        raise SpecFormatError("classify needs --N-list (or --N) with increasing orders")
    kw = {"s_grid": tuple(args.s_grid)} if args.s_grid else {}
    res = classify_infinite(T, N_list, tol=tol, **kw)
    text = None
    if args.format == "csv":
        s_keys = list(res["rows"][0]["integral"])
        rows = [[r["N"], r["lambda0"], r["gap"], r["mass11"]] + [r["integral"][s] for s in s_keys]
                for r in res["rows"]]
        text = _csv(["N", "lambda0", "gap", "mass11"] + [f"integral_estimate_at_{s}" for s in s_keys], rows)
    return res, text


def _cmd_simulate(args, T, tol, ic):
    if T.is_generator:
        size = args.size or 10 * _orders(args, T)[-1]
        M = reflecting_truncation(T, size)
    elif T.mode == "substochastic":
        M = doob_transform(T, T.size - 1)
    else:
        M = T
    cfg = SimConfig(seed=args.seed, steps=args.steps, replicas=args.replicas,
                    start_state=args.start, burn_in=args.burn_in)
    est = simulate(M, cfg, k_max=args.k_max)
    targets = ("kstep", "stationary", "first_passage", "return_time")
    result = {
        "config": est["config"],
        "samples": est["samples"],
        "estimates": {t: est[t]["estimate"] for t in targets},
        "standard_errors": {t: est[t]["se"] for t in targets},
        "extra": {"first_passage": {k: v for k, v in est["first_passage"].items() if k not in ("estimate", "se")},
                  "return_counts": est["return_time"]["count"]},
    }
    text = None
    if args.format == "csv":
        pi, se = est["stationary"]["estimate"], est["stationary"]["se"]
        rt, rse = est["return_time"]["estimate"], est["return_time"]["se"]
        text = _csv(["n", "pi", "pi_se", "return_time", "return_time_se"],
                    [(n, pi[n], se[n], rt[n], rse[n]) for n in range(len(pi))])
    return result, text


def _suite(checks):
    return {"passed": all(ok for ok, _ in checks.values()),
            "checks": {k: {"passed": bool(ok), "value": v} for k, (ok, v) in checks.items()}}


def verify_suites(T, N, ic=None, tol=DEFAULT_TOLERANCES):
    """Run the invariant suites on ``T^{[N]}``; returns a JSON-ready dict."""
    suites = {}
    n = N + 1
    depth = n if T.is_generator else T.size
    chain = compute_pbf(T, depth=depth, tol=tol)
    A = truncate(T, depth - 1)
    err = float(np.max(np.abs(reconstruct(chain) - A)))
    suites["factorization"] = _suite({"reconstruction": (err <= tol.recon * depth, err)})
    st = stochastic_normalize(chain, T_is_stochastic=T.mode == "stochastic", tol=tol)
    rows = chain.exact_rows
    rs = max(float(np.max(np.abs(f.dense().sum(axis=1)[:rows] - 1)))
             for f in list(st.lowers) + list(st.uppers))
    suites["stochastic_factors"] = _suite({"factor_row_sums": (rs <= tol.row, rs)})

    sys_ = eigensystem(T, N, ic, tol)
    lam = sys_.lambdas_mp
    gaps = min((float(lam[k] - lam[k + 1]) for k in range(N)), default=math.inf)
    signs = all(eigenvector_sign_changes(sys_, k, "right") == (k, k) for k in range(n))
    spec_checks = {
        "simple": (gaps > tol.sep * float(lam[0]), gaps),
        "positive": (float(lam[-1]) > 0, float(lam[-1])),
        "perron_at_most_one": (float(lam[0]) <= 1 + tol.row, float(lam[0])),
        "sign_changes": (signs, None),
    }
    if N >= 1:
        prev = eigensystem(T, N - 1, ic, tol, check=False)
        spec_checks["interlacing"] = (interlaces(lam, prev.lambdas_mp), None)
    suites["spectrum"] = _suite(spec_checks)

    m = spectral_measure(T, N, ic, tol, sys=sys_)
    bio = biorthogonality_check(m)
    mix = mixed_orthogonality_check(m)
    ms = float(np.max(np.abs(m.mass_sum() - mass_bound(m.ic))))
    suites["measure"] = _suite({
        "biorthogonality": (bio <= tol.bio * n, bio),
        "mass_sum": (ms <= tol.meas * n, ms),
        "mixed_orthogonality": (mix <= tol.meas * n, mix),
    })

    T_hat = doob_transform(T, N, sys_)
    km = max(float(np.max(np.abs(kstep_matrix(sys_, k) - np.linalg.matrix_power(T_hat, k))))
             for k in range(min(20, 2 * n) + 1))
    suites["karlin_mcgregor"] = _suite({"kstep_vs_power": (km <= tol.km, km)})

    pis = [stationary(T, N, sys_, meth) for meth in ("eigenvector", "christoffel", "determinantal")]
    spread = max(float(np.max(np.abs(a - b))) for a in pis for b in pis)
    inv = float(np.max(np.abs(pis[0] @ T_hat - pis[0])))
    suites["stationary"] = _suite({
        "formula_agreement": (spread <= tol.stat * 10, spread),
        "invariance": (inv <= tol.stat * n, inv),
    })

    T_tilde = time_reversal(T, N, sys_)
    trs = float(np.max(np.abs(T_tilde.sum(axis=1) - 1)))
    db = detailed_balance_residual(T_hat, T_tilde, pis[0])
    suites["time_reversal"] = _suite({
        "stochastic": (trs <= tol.row, trs),
        "detailed_balance": (db <= tol.spec * n, db),
    })
    return {"N": N, "suites": suites, "all_passed": all(s["passed"] for s in suites.values())}


def _cmd_verify(args, T, tol, ic):
    results = [verify_suites(T, N, ic, tol) for N in _orders(args, T, default=25)]
    text = None
    if args.format == "csv":
        rows = [(r["N"], name, chk, c["passed"], c["value"])
                for r in results for name, s in r["suites"].items() for chk, c in s["checks"].items()]
        text = _csv(["N", "suite", "check", "passed", "value"], rows)
    return {"results": results, "all_passed": all(r["all_passed"] for r in results)}, text


def _cmd_poly(args, T, tol, ic):
    N = _orders(args, T)[-1]
    tables = [eval_recursions(T, x, N, ic).to_float() for x in args.x]
    p, q = T.p, T.q
    header = (["x", "P_N", "P_N+1"] + [f"A{a}_{j}" for a in range(p) for j in range(N + p)]
              + [f"B{b}_{j}" for b in range(q) for j in range(N + q)])
    rows = [[t.x, t.P[N], t.P[N + 1]] + t.A.ravel().tolist() + t.B.ravel().tolist() for t in tables]
    result = {"N": N, "tables": [{"x": t.x, "P": t.P, "Pprime": t.Pprime, "A": t.A, "B": t.B,
                                  "alpha": t.alpha, "beta": t.beta} for t in tables]}
    return result, _csv(header, rows) if args.format == "csv" else None


HANDLERS = {
    "factorize": _cmd_factorize,
    "spectrum": _cmd_spectrum,
    "analyze": _cmd_analyze,
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "poly": _cmd_poly,
}


def run(args):
    """Execute parsed arguments; returns the text to emit."""
    if args.format is None:
        args.format = "csv" if args.command == "poly" else "json"
    overrides = dict(args.tol)
    tol = DEFAULT_TOLERANCES.override(**overrides)
    try:
        T = load_spec(args.input, tol=tol.row)
    except OSError as exc:
        raise SpecFormatError(f"cannot read input: {exc}", path=args.input) from exc
    ic = _load_ic(args.ic)
    result, text = HANDLERS[args.command](args, T, tol, ic)
    if text is not None:
        return text
    payload = {
        "schema": SCHEMA,
        "command": args.command,
        "input": {"p": T.p, "q": T.q, "mode": T.mode,
                  "size": "generator" if T.is_generator else T.size},
        "tolerance_overrides": overrides,
        "tolerances": {k: getattr(tol, k) for k in tol.names()},
        "result": result,
    }
    if args.command == "simulate":
        payload["seed"] = args.seed
    return dumps(payload)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = run(args)
    except BandedMarkovError as exc:
        sys.stderr.write(dumps({"schema": SCHEMA, **exc.to_dict()}))
        return 2
    except Exception as exc:  # noqa: BLE001
        sys.stderr.write(dumps({"schema": SCHEMA, "error": "InternalError",
                                "message": f"{type(exc).__name__}: {exc}",
                                "context": {"traceback": traceback.format_exc()}}))
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
