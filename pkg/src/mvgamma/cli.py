"""Command-line frontend.

Subcommands: cdf, excess, check, fit, maxrho, mmatrix, sample, verify.
Exit codes: 0 success, 1 domain error, 2 non-convergence, 3 bad input.

Matrix files: first entry is the dimension n, followed by n*n entries in row
order; whitespace separates entries and '#' starts a comment.  Inline
matrices use ';' between rows and ',' or spaces within a row.  Evaluation
points accept 'inf' to marginalize a component.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import bounds, converge, engines, oracle
from .corrstruct import (
    BlockFactorialStructure,
    fit_block_factors,
    find_signature,
    is_m_matrix,
    one_factorial_exact,
    tree_structure,
    validate,
)
from .errors import ConvergenceError, DomainError, InputError, MvGammaError
from .quad import Tolerance

_EXIT = {DomainError: 1, ConvergenceError: 2, InputError: 3}


def _parse_matrix_text(text):
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.replace(",", " ").replace(";", " ").split())
    if not tokens:
        raise InputError("empty matrix input", module="cli")
    try:
        n = int(tokens[0])
        vals = [float(t) for t in tokens[1 : 1 + n * n]]
    except ValueError as exc:
        raise InputError(f"matrix parse error: {exc}", module="cli")
    if len(vals) != n * n:
        raise InputError(f"expected {n * n} entries after the dimension, got {len(vals)}", module="cli")
    return np.array(vals).reshape(n, n)


def _load_matrix(args):
    if getattr(args, "matrix_inline", None):
        rows = [r for r in args.matrix_inline.split(";") if r.strip()]
        vals = [[float(v) for v in r.replace(",", " ").split()] for r in rows]
        raw = np.array(vals)
    elif getattr(args, "matrix", None):
        try:
            with open(args.matrix) as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read matrix file: {exc}", module="cli")
        raw = _parse_matrix_text(text)
    else:
        raise InputError("a matrix is required (--matrix or --matrix-inline)", module="cli")
    try:
        return validate(raw)
    except InputError:
        raise
    except MvGammaError as exc:
        raise InputError(str(exc), module="cli")


def _parse_vector(text, n=None):
    vals = [float(v) for v in text.replace(",", " ").split()]
    if n is not None and len(vals) != n:
        raise InputError(f"expected {n} values, got {len(vals)}", module="cli")
    return np.array(vals)


def _emit(args, payload):
    if args.format == "json":
        print(json.dumps(payload, sort_keys=True))
    else:
        for key, val in payload.items():
            print(f"{key}: {val}")


def _detect_structure(r, tol=1e-7):
    """one-factorial, then tree, then two-block, then three-block."""
    s = one_factorial_exact(r, tol=tol)
    if s is not None:
        return "one-factorial", s
    t = tree_structure(r)
    if t is not None:
        return "tree", t
    m = r.entries
    n = r.n
    for n1 in range(2, n - 1):
        s = _match_blocks(m, (n1, n - n1), tol)
        if s is not None:
            return "two-block", s
    for n1 in range(2, n - 3):
        for n2 in range(2, n - n1 - 1):
            s = _match_blocks(m, (n1, n2, n - n1 - n2), tol)
            if s is not None:
                return "three-block", s
    raise DomainError("no supported structure detected (use --structure/--blocks to force)", module="cli")


def _match_blocks(m, sizes, tol):
    edges = np.cumsum((0,) + tuple(sizes))
    slices = [slice(int(edges[i]), int(edges[i + 1])) for i in range(len(sizes))]
    a = np.zeros(m.shape[0])
    for sl in slices:
        sub = one_factorial_exact(m[sl, sl], tol=tol)
        if sub is None or np.any(sub.a <= 0):
            return None
        a[sl] = sub.a
    p = len(sizes)
    theta = np.eye(p)
    for i in range(p):
        for j in range(i + 1, p):
            ratios = m[slices[i], slices[j]] / np.outer(a[slices[i]], a[slices[j]])
            if float(ratios.max() - ratios.min()) > 10 * tol:
                return None
            theta[i, j] = theta[j, i] = float(ratios.mean())
    try:
        return BlockFactorialStructure(tuple(sizes), a, theta)
    except MvGammaError:
        return None


def _tree_cdf(point, tree, tol):
    """Rectangle probability of a tree-type density by nested quadrature
    (small dimensions only)."""
    from .engines import pdf_tree
    from .quad import integrate_interval

    n = tree.n
    if n > 3:
        raise DomainError("tree-type cdf via quadrature is limited to n <= 3", module="cli")
    x = point.x

    if n == 1:
        f = lambda t: np.array([pdf_tree(np.array([v]), point.alpha, tree) for v in t])
        return integrate_interval(f, 0.0, float(x[0]), tol, initial_splits=4)

    if n == 2:
        def outer(t1values):
            out = []
            for v1 in t1values:
                inner = integrate_interval(
                    lambda t2: np.array([pdf_tree(np.array([v1, v2]), point.alpha, tree) for v2 in t2]),
                    0.0, float(x[1]), tol, initial_splits=2,
                )
                out.append(inner.value)
            return np.array(out)

        return integrate_interval(outer, 0.0, float(x[0]), tol, initial_splits=4)

    def outer(t1values):
        out = []
        for v1 in t1values:
            def mid(t2values, v1=v1):
                vals = []
                for v2 in t2values:
                    inner = integrate_interval(
                        lambda t3: np.array(
                            [pdf_tree(np.array([v1, v2, v3]), point.alpha, tree) for v3 in t3]
                        ),
                        0.0, float(x[2]), tol, initial_splits=2,
                    )
                    vals.append(inner.value)
                return np.array(vals)

            out.append(integrate_interval(mid, 0.0, float(x[1]), tol, initial_splits=2).value)
        return np.array(out)

    return integrate_interval(outer, 0.0, float(x[0]), tol, initial_splits=4)


def _cmd_cdf(args):
    r = _load_matrix(args)
    x = _parse_vector(args.x, r.n)
    point = engines.EvalPoint(x, args.alpha)
    tol = Tolerance(abs_tol=args.tol, rel_tol=args.tol * 10.0)
    if args.structure == "auto":
        kind, s = _detect_structure(r)
    else:
        kind = args.structure
        if kind == "one-factorial":
            s = one_factorial_exact(r)
            if s is None:
                raise DomainError("matrix is not one-factorial", module="cli")
        elif kind == "tree":
            s = tree_structure(r)
            if s is None:
                raise DomainError("matrix inverse is not tree-type", module="cli")
        else:
            if not args.blocks:
                raise InputError("--blocks is required with --structure two-block/three-block", module="cli")
            sizes = tuple(int(v) for v in args.blocks.split(","))
            s, _ = fit_block_factors(r, sizes)
    if kind == "tree":
        res = _tree_cdf(point, s, tol)
    else:
        res = engines.structured_cdf(point, s, tol)
    if not res.converged:
        raise ConvergenceError(f"cdf did not converge (estimate {res.value}, error {res.abs_error_estimate})",
                               module="cli")
    _emit(args, {
        "command": "cdf",
        "structure": kind,
        "value": res.real,
        "abs_error_estimate": res.abs_error_estimate,
        "terms_used": res.terms_used,
    })
    return 0


def _cmd_excess(args):
    r = _load_matrix(args)
    sizes = tuple(int(v) for v in args.blocks.split(","))
    x = _parse_vector(args.x, r.n)
    point = engines.EvalPoint(x, args.alpha)
    tol = Tolerance(abs_tol=args.tol, rel_tol=args.tol * 10.0)
    s, report = fit_block_factors(r, sizes)
    if len(sizes) == 2:
        from .corrstruct import theta_m_matrix_limit

        limit = theta_m_matrix_limit(s)
        if s.theta[0, 1] > limit:
            th = np.eye(2)
            th[0, 1] = th[1, 0] = limit
            s = BlockFactorialStructure(sizes, s.a, th)
        cert = bounds.excess_two_block(point, r, s, tol)
    else:
        params = engines.ThreeBlockSeriesParams(s, tol, max_total_degree=args.max_degree)
        cert = bounds.excess_three_block(point, params)
    _emit(args, {
        "command": "excess",
        "blocks": list(sizes),
        "theta": [float(v) for v in s.theta[np.triu_indices(len(sizes), 1)]],
        "lhs": cert.lhs,
        "rhs": cert.rhs,
        "excess_lower_bound": cert.margin,
        "verdict": cert.verdict,
        "method": cert.method,
        "binding_pairs": {f"{k}": list(v) for k, v in report.binding_cross_pairs.items()},
    })
    return 0


def _counterexample_3x3():
    m = np.array([[1.0, 0.75, 0.5], [0.75, 1.0, 0.0], [0.5, 0.0, 1.0]])
    x = np.array([2.6, 2.8, 3.0])
    return validate(m), x


def _cmd_check(args):
    tol = Tolerance()
    if args.preset == "gci-3x3-counterexample":
        r, x = _counterexample_3x3()
        alpha = 0.5
        part3 = bounds.Partition(((0,), (1,), (2,)))
        part2 = bounds.Partition(((0,), (1, 2)))
    elif args.preset:
        raise InputError(f"unknown preset {args.preset!r}", module="cli")
    else:
        r = _load_matrix(args)
        x = _parse_vector(args.x, r.n)
        alpha = args.alpha
        blocks = tuple(tuple(int(i) for i in b.split(",")) for b in args.partition.split("|"))
        if len(blocks) == 3:
            part3 = bounds.Partition(blocks)
            part2 = bounds.Partition((blocks[0], blocks[1] + blocks[2]))
        else:
            part3 = None
            part2 = bounds.Partition(blocks)
    nu = round(2 * alpha)
    if abs(2 * alpha - nu) > 1e-12:
        raise DomainError("Monte Carlo checks need 2*alpha integer", module="cli")
    batch = oracle.sample_chi_square(r, nu, args.samples, args.seed)
    ev = bounds.MCEvaluator(batch)
    results = {"command": "check", "seed": args.seed, "samples": args.samples}
    cert_orthant = bounds.check_orthant_inequality(ev, x, part2)
    results["orthant-product"] = {
        "lhs": cert_orthant.lhs, "rhs": cert_orthant.rhs, "margin": cert_orthant.margin,
        "uncertainty": cert_orthant.abs_uncertainty, "verdict": cert_orthant.verdict,
    }
    if part3 is not None:
        c1, c2 = bounds.check_three_event_inequalities(ev, x, part3)
        for name, c in (("cancelling", c1), ("three-event-sum", c2)):
            results[name] = {
                "lhs": c.lhs, "rhs": c.rhs, "margin": c.margin,
                "uncertainty": c.abs_uncertainty, "verdict": c.verdict,
            }
    _emit(args, results)
    return 0


def _cmd_fit(args):
    r = _load_matrix(args)
    sizes = tuple(int(v) for v in args.blocks.split(","))
    s, report = fit_block_factors(r, sizes)
    payload = {
        "command": "fit",
        "blocks": list(sizes),
        "factors": [float(v) for v in s.a],
        "theta": [[float(v) for v in row] for row in s.theta],
        "lambda_per_block": list(report.lambda_per_block),
        "binding_cross_pairs": {f"{k[0]},{k[1]}": list(v) for k, v in report.binding_cross_pairs.items()},
        "within_block_min_slack": report.within_block_min_slack,
    }
    if len(sizes) == 3:
        payload["mmatrix_criterion"] = bounds.three_block_gate(s)
        tt = converge.theta_tilde_from_structure(s)
        mr = converge.max_rho_sq(tt, run_grid=False)
        payload["max_rho_sq"] = mr.max_rho_sq
    _emit(args, payload)
    return 0


def _cmd_maxrho(args):
    theta = _parse_vector(args.theta, 3)
    d = _parse_vector(args.d, 3)
    if np.any(d < 0) or np.any(d >= 1):
        raise DomainError("d values must lie in [0, 1)", module="cli")
    vals = (
        float(theta[0]) * math.sqrt(d[1] * d[2]),
        float(theta[1]) * math.sqrt(d[0] * d[2]),
        float(theta[2]) * math.sqrt(d[0] * d[1]),
    )
    tt = converge.ThetaTilde(vals, tuple(float(v) for v in d))
    res = converge.max_rho_sq(tt)
    _emit(args, {
        "command": "maxrho",
        "theta_tilde": list(vals),
        "max_rho_sq": res.max_rho_sq,
        "argmax_t": list(res.argmax_t),
        "branch": res.branch,
        "converged": res.converged,
        "grid_value": res.grid_value,
        "sufficient_condition": converge.sufficient_condition(tt),
        "series_convergent": res.max_rho_sq < 1.0,
    })
    return 0


def _cmd_mmatrix(args):
    r = _load_matrix(args)
    inv = np.linalg.inv(r.entries)
    direct = is_m_matrix(inv)
    sig = find_signature(r)
    _emit(args, {
        "command": "mmatrix",
        "inverse_is_m_matrix": direct,
        "signature_found": sig is not None,
        "signature": [int(v) for v in sig.signs] if sig is not None else None,
        "all_alpha_admissible": sig is not None,
    })
    return 0


def _cmd_sample(args):
    r = _load_matrix(args)
    if args.nu is not None:
        batch = oracle.sample_chi_square(r, args.nu, args.count, args.seed)
    else:
        s = one_factorial_exact(r)
        if s is None:
            raise DomainError("matrix is not one-factorial; use --nu for the chi-square route", module="cli")
        batch = oracle.sample_one_factorial(s, args.alpha, args.count, args.seed)
    batch.save(args.out)
    payload = {"command": "sample", "n": batch.n, "count": batch.count, "seed": batch.seed, "out": args.out}
    if args.x:
        x = _parse_vector(args.x, r.n)
        est = oracle.mc_cdf(batch, x)
        payload["mc_cdf"] = est.mean
        payload["mc_std_error"] = est.std_error
    _emit(args, payload)
    return 0


def _cmd_verify(args):
    from .specfun import (
        NonCentralParams,
        nc_gamma_cdf,
        nc_gamma_cdf_erf_route,
        nc_gamma_cdf_finite_correction_route,
    )

    rng = np.random.default_rng(7)
    checks = []

    def record(name, ok, detail):
        checks.append((name, ok))
        print(f"[{'pass' if ok else 'FAIL'}] {name}: {detail}")

    worst = 0.0
    for _ in range(20):
        x, y = rng.uniform(0.05, 10.0, 2)
        n = int(rng.integers(0, 3))
        d = abs(nc_gamma_cdf(NonCentralParams(n + 0.5, x, y)).value - nc_gamma_cdf_erf_route(x, y, n + 0.5))
        worst = max(worst, d)
    record("half-odd closed form vs series", worst < 1e-10, f"max diff {worst:.2e}")

    worst = 0.0
    for _ in range(8):
        x, y = rng.uniform(0.05, 8.0, 2)
        n = int(rng.integers(1, 4))
        d = abs(nc_gamma_cdf(NonCentralParams(float(n), x, y)).value - nc_gamma_cdf_finite_correction_route(x, y, n))
        worst = max(worst, d)
    record("integer closed form vs series", worst < 1e-9, f"max diff {worst:.2e}")

    a = np.array([0.5, 0.6, 0.55, 0.45])
    th = 0.6
    s = BlockFactorialStructure((2, 2), a, np.array([[1.0, th], [th, 1.0]]))
    pt = engines.EvalPoint(np.array([1.5, 1.2, 1.0, 2.0]), 1.0)
    v1 = engines.cdf_two_block_laguerre(pt, s).value
    v2 = engines.cdf_two_block_kernel(pt, s).value
    v3 = engines.cdf_two_factorial(pt, s).value
    spread = max(v1, v2, v3) - min(v1, v2, v3)
    record("two-block engine agreement", spread < 1e-6, f"spread {spread:.2e}")

    from .corrstruct import assemble

    r = assemble(s)
    batch = oracle.sample_chi_square(r, 2, 200_000, args.seed)
    est = oracle.mc_cdf(batch, pt.x)
    z = abs(v1 - est.mean) / est.std_error
    record("engine vs Monte Carlo", z < 4.0, f"z = {z:.2f}")

    t = np.array([0.2, 0.1, 0.3, 0.15])
    lt_est = oracle.mc_laplace(batch, t)
    lt_val = oracle.lt_formula(r, 1.0, t)
    z = abs(lt_est.mean - lt_val) / lt_est.std_error
    record("Laplace transform law", z < 4.0, f"z = {z:.2f}")

    ok = True
    for _ in range(10):
        d = rng.uniform(0.1, 0.9, 3)
        thr = rng.uniform(0.1, 0.9, 3)
        vals = (
            thr[0] * math.sqrt(d[1] * d[2]),
            thr[1] * math.sqrt(d[0] * d[2]),
            thr[2] * math.sqrt(d[0] * d[1]),
        )
        tt = converge.ThetaTilde(vals, tuple(d))
        res = converge.max_rho_sq(tt)
        ok = ok and res.converged
    record("stationary-point solver vs grid", ok, "10 random instances")

    failed = [name for name, okay in checks if not okay]
    if failed:
        print(f"{len(failed)} verification check(s) failed")
        return 2
    print("all verification checks passed")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mvgamma",
        description="Multivariate gamma rectangle probabilities under structured "
        "correlation, excess lower bounds, and Monte Carlo validation.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, matrix=True):
        if matrix:
            p.add_argument("--matrix", help="matrix file (first entry n, then n*n entries; '#' comments)")
            p.add_argument("--matrix-inline", help="inline matrix: rows separated by ';'")
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("cdf", help="rectangle probability P(all X_i <= x_i) for a structured matrix "
                                   "(mixture, Laguerre series, kernel/angular integral, or tree density)")
    common(p)
    p.add_argument("--x", required=True, help="comma-separated thresholds; 'inf' marginalizes")
    p.add_argument("--alpha", type=float, required=True, help="shape alpha (= nu/2)")
    p.add_argument("--structure", choices=("auto", "one-factorial", "tree", "two-block", "three-block"),
                   default="auto")
    p.add_argument("--blocks", help="block sizes for forced two-/three-block structure")
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=_cmd_cdf)

    p = sub.add_parser("excess", help="certified positive lower bound for P(all) minus the product "
                                      "of block probabilities, from a fitted factorial minorant")
    common(p)
    p.add_argument("--x", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--blocks", required=True, help="e.g. 2,2 or 3,3,3")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-degree", type=int, default=30)
    p.set_defaults(func=_cmd_excess)

    p = sub.add_parser("check", help="Monte Carlo inequality certificates (orthant product, "
                                     "cancelling, three-event sum)")
    common(p)
    p.add_argument("--preset", help="gci-3x3-counterexample: the 3x3 instance where the "
                                    "three-event inequalities fail")
    p.add_argument("--x")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--partition", help="index blocks, e.g. '0,1|2'")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=20240)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("fit", help="factor-fit index blocks and the admissible cross correlations")
    common(p)
    p.add_argument("--blocks", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("maxrho", help="series convergence bound: maximize the expansion modulus "
                                      "rho^2 by the stationary-point equations plus grid check")
    p.add_argument("--theta", required=True, help="block correlations th1,th2,th3 (complementary labels)")
    p.add_argument("--d", required=True, help="per-block shrink ratios d1,d2,d3")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_cmd_maxrho)

    p = sub.add_parser("mmatrix", help="M-matrix analysis of the inverse and signature search")
    common(p)
    p.set_defaults(func=_cmd_mmatrix)

    p = sub.add_parser("sample", help="write a Monte Carlo batch (binary columnar format)")
    common(p)
    p.add_argument("--nu", type=int, help="integer degrees of freedom (chi-square route)")
    p.add_argument("--alpha", type=float, default=1.0, help="shape for the one-factorial route")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", help="optionally also report the empirical cdf at x")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("verify", help="run the built-in cross-validation suite")
    p.add_argument("--seed", type=int, default=11)
    p.set_defaults(func=_cmd_verify)
    return ap


def run(argv):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return args.func(args)
    except MvGammaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for klass, code in _EXIT.items():
            if isinstance(exc, klass):
                return code
        return 1


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
