"""Command-line front end.

Exit codes: 0 success, 1 property check failure, 2 invalid input,
3 numerical failure (non-convergence, spectral degeneracy, ill-conditioning).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .checks import BREAKABLE, run_checks
from .errors import DomainError, NumericalError, ValidationError
from .limit import limit_plan_derivative
from .oracle import FdConfig, fd_limit_derivative
from .piggyback import CSV_HEADER, fitted_decay_ratio, run_with_derivatives
from .problem import (
    generate_point_cloud_instance,
    instance_to_dict,
    load_instance,
    load_tangents,
    make_affine_parametrization,
    make_direct_marginal_parametrization,
    make_epsilon_parametrization,
    make_softmax_marginal_parametrization,
    zero_sum_basis,
)
from .sinkhorn import DEFAULT_MAX_ITER, DEFAULT_TOL, plan, solve, variation_seminorm

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

PARAM_KINDS = ("eps", "softmax-a", "softmax-b", "direct-a", "direct-b")


def _parse_generate(text: str):
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) not in (2, 3):
        raise ValidationError("--generate expects n,m or n,m,seed", field="generate")
    try:
        vals = [int(p) for p in parts]
    except ValueError as exc:
        raise ValidationError(f"--generate: {exc}", field="generate") from exc
    return vals[0], vals[1], (vals[2] if len(vals) == 3 else None)


def load_config_instance(args, default_size=None):
    """Instance from ``--instance`` or ``--generate``, with ``--epsilon`` applied."""
    if args.instance and args.generate:
        raise ValidationError("use either --instance or --generate", field="instance")
    if args.instance:
        inst = load_instance(args.instance)
        if args.epsilon is not None:
            inst = inst.replace(epsilon=args.epsilon)
        return inst
    if args.generate:
        n, m, seed = _parse_generate(args.generate)
    elif default_size is not None:
        (n, m), seed = default_size, None
    else:
        raise ValidationError("an instance is required: --instance PATH or --generate n,m,seed", field="instance")
    if seed is None:
        seed = args.seed
    eps = 0.01 if args.epsilon is None else args.epsilon
    if not eps > 0:
        raise ValidationError("--epsilon must be > 0", field="epsilon")
    return generate_point_cloud_instance(n, m, seed, eps)


def build_parametrization(inst, args):
    if getattr(args, "tangents", None):
        tangents, labels = load_tangents(args.tangents, inst)
        return make_affine_parametrization(inst, tangents, labels)
    kind = args.param
    n, m = inst.shape
    if kind == "eps":
        return make_epsilon_parametrization(inst)
    if kind == "softmax-a":
        return make_softmax_marginal_parametrization(inst, "source")
    if kind == "softmax-b":
        return make_softmax_marginal_parametrization(inst, "target")
    if kind == "direct-a":
        if n < 2:
            raise ValidationError("direct-a needs n >= 2", field="param")
        return make_direct_marginal_parametrization(inst, "source", zero_sum_basis(n))
    if kind == "direct-b":
        if m < 2:
            raise ValidationError("direct-b needs m >= 2", field="param")
        return make_direct_marginal_parametrization(inst, "target", zero_sum_basis(m))
    raise ValidationError(f"unknown parametrization {kind!r}", field="param")


def _write_json(obj, path):
    text = json.dumps(obj)
    if path:
        Path(path).write_text(text)
    else:
        print(text)


def cmd_generate(args) -> int:
    inst = load_config_instance(args)
    _write_json(instance_to_dict(inst), args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = load_config_instance(args)
    rep = solve(inst, tol=args.tol, max_iter=args.max_iter, mode=args.mode,
                record=bool(args.history), record_iterates=bool(args.history))
    P = plan(rep.x, inst, args.mode)
    st = rep.final_state
    _write_json(
        {
            "converged": rep.converged,
            "iterations": st.iteration,
            "marginal_violation": st.marginal_violation,
            "x": st.x.tolist(),
            "plan": P.tolist(),
        },
        args.out,
    )
    if args.history:
        with open(args.history, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("iter", "marginal_violation", "d_var_to_final"))
            for rec, xk in zip(rep.history, rep.iterates):
                w.writerow((rec.iteration, repr(rec.marginal_violation),
                            repr(variation_seminorm(xk - st.x))))
    print(
        f"converged={str(rep.converged).lower()} iterations={st.iteration} "
        f"marginal_violation={st.marginal_violation:.3e}",
        file=sys.stderr,
    )
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_differentiate(args) -> int:
    inst = load_config_instance(args)
    par = build_parametrization(inst, args)
    theta = par.theta0
    rep, dP_pig, _ = run_with_derivatives(
        par, theta, tol=args.tol, max_iter=args.max_iter, mode=args.mode,
        trace=False, instance=inst,
    )
    if not rep.converged:
        raise NumericalError(
            f"piggyback run did not converge in {args.max_iter} iterations"
        )
    xbar = solve(inst, x0=rep.x, tol=min(args.tol, 1e-12), max_iter=args.max_iter, mode=args.mode).x
    dP = limit_plan_derivative(xbar, par, theta, route=args.route, mode=args.mode, instance=inst)
    result = {
        "labels": list(dP.labels),
        "route": args.route,
        "closed_form": dP.to_dict(),
        "piggyback": dP_pig.to_dict(),
        "piggyback_iterations": rep.final_state.iteration,
        "agreement_frobenius": dP.distance(dP_pig),
    }
    lines = [f"agreement (Frobenius) piggyback vs closed form: {result['agreement_frobenius']:.3e}"]
    if args.oracle:
        cfg = FdConfig()
        worst = 0.0
        for j in range(len(dP)):
            fd = fd_limit_derivative(par, theta, j, cfg)
            worst = max(worst, float(np.max(np.abs(fd - dP[j]))))
        result["oracle_max_abs"] = worst
        lines.append(f"finite-difference oracle vs closed form (max abs): {worst:.3e}")
    _write_json(result, args.out)
    for line in lines:
        print(line, file=sys.stderr)
    return EXIT_OK


def cmd_study(args) -> int:
    inst = load_config_instance(args)
    par = build_parametrization(inst, args)
    rep, _, trace = run_with_derivatives(
        par, par.theta0, tol=args.tol, max_iter=args.max_iter, mode=args.mode,
        reference=args.reference, instance=inst,
    )
    if args.out:
        trace.to_csv(args.out)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(CSV_HEADER)
        for row in trace.rows():
            w.writerow([row[0], *(repr(v) for v in row[1:])])
    print(
        f"iterations={rep.final_state.iteration} converged={str(rep.converged).lower()} "
        f"plan_ratio={fitted_decay_ratio(trace.plan_err, 1e-10):.4f} "
        f"deriv_ratio={fitted_decay_ratio(trace.deriv_err, 1e-10):.4f}",
        file=sys.stderr,
    )
    return EXIT_OK if rep.converged else EXIT_NUMERIC


def cmd_check(args) -> int:
    inst = load_config_instance(args, default_size=(8, 6))
    if args.epsilon is None and not args.instance:
        inst = inst.replace(epsilon=0.5)
    results = run_checks(inst, seed=args.seed, breaks=tuple(args.break_ or ()))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} properties passed")
    return EXIT_CHECK if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("instance")
    src.add_argument("--instance", metavar="PATH", help="instance JSON file")
    src.add_argument("--generate", metavar="N,M[,SEED]",
                     help="square-to-circle point cloud instance")
    src.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    src.add_argument("--epsilon", type=float, default=None, help="regularization level")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL)
    common.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    common.add_argument("--mode", choices=("naive", "lse"), default="lse")
    common.add_argument("--out", metavar="PATH", help="output file (default stdout)")

    diff = argparse.ArgumentParser(add_help=False)
    diff.add_argument("--param", choices=PARAM_KINDS, default="eps")
    diff.add_argument("--tangents", metavar="PATH",
                      help="JSON file of instance tangents (overrides --param)")

    parser = argparse.ArgumentParser(
        prog="sinkdiff",
        description="Entropic OT via Sinkhorn-Knopp with convergent forward-mode derivatives.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="write a generated instance")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", parents=[common], help="solve and write the plan")
    p.add_argument("--history", metavar="PATH", help="per-iteration CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("differentiate", parents=[common, diff],
                       help="closed-form and piggyback plan derivatives")
    p.add_argument("--route", choices=("spectral", "resolvent"), default="resolvent")
    p.add_argument("--oracle", action="store_true", help="also compare to finite differences")
    p.set_defaults(func=cmd_differentiate)

    p = sub.add_parser("study", parents=[common, diff],
                       help="per-iteration convergence CSV of plan and derivative")
    p.add_argument("--reference", choices=("final-iterate", "closed-form"),
                   default="final-iterate")
    p.set_defaults(func=cmd_study, tol=1e-14)

    p = sub.add_parser("check", parents=[common], help="run the property suite")
    p.add_argument("--break", dest="break_", action="append", choices=BREAKABLE,
                   help="inject a defect (negative control)")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DomainError) as exc:
        field = getattr(exc, "field", None)
        prefix = f"invalid input ({field})" if field else "invalid input"
        print(f"{prefix}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
