"""Command-line entry point: ``lstarf <subcommand> [flags]``.

Exit status is 0 on success, 1 when a certificate fails or the lemma suite
finds a violation, and 2 on usage errors.  Outputs default to the directory
named by ``LSTARF_OUT_DIR`` (or the working directory).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bench, certify, ripest, solve
from .errors import LstarfError
from .matcore import as_matrix
from .measure import KINDS, NOISE_KINDS, build_operator, load_instance, load_operator, make_instance, \
    random_low_rank, save_instance, save_operator
from .mtx import atomic_write_text, read_mtx
from .seeding import check_seed, rng_for

OUT_DIR_ENV = "LSTARF_OUT_DIR"


class UsageError(Exception):
    pass


def _out_path(given, default_name: str) -> Path:
    if given is not None:
        return Path(given)
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / default_name


def _dump(path: Path, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _announce(cmd: str, args: argparse.Namespace) -> None:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")}
    print(f"lstarf {cmd} config: {json.dumps(cfg, sort_keys=True, default=str)}", file=sys.stderr)
    print(f"lstarf {cmd} seed: {getattr(args, 'seed', None)}", file=sys.stderr)


def _csv_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str) -> tuple:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _operator_params(args) -> dict:
    return {"a": args.a} if args.a is not None else {}


# --- subcommands -----------------------------------------------------------

def cmd_gen(args) -> int:
    op = build_operator(args.kind, args.m, args.n, args.l, args.seed, _operator_params(args))
    if args.what == "operator":
        out = _out_path(args.out, "operator.json")
        save_operator(op, out)
    else:
        if args.rank is None:
            raise UsageError("--rank is required for an instance (or use --what operator)")
        x = random_low_rank(args.m, args.n, args.rank, rng_for(args.seed, "ground-truth"))
        inst = make_instance(op, x, args.noise, args.epsilon, args.seed)
        inst.meta["rank"] = args.rank
        out = _out_path(args.out, "instance.json")
        save_instance(inst, out)
    print(out)
    return 0


def _solver_config(args) -> solve.SolverConfig:
    return solve.SolverConfig(
        max_outer=args.max_outer, max_inner=args.max_inner, tol_outer=args.tol_outer,
        tol_inner=args.tol_inner, step_rule=args.step_rule, acceleration=not args.no_acceleration,
        init="adjoint" if args.init == "truth" else args.init, seed=args.seed,
    )


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    cfg = _solver_config(args)
    x0 = None
    if args.init == "truth":
        if inst.x_true is None:
            raise UsageError("--init truth needs an instance with a ground truth")
        x0 = inst.x_true
    if args.method in ("dca", "nuclear") and args.lam is None:
        raise UsageError(f"--lambda is required for --method {args.method}")
    if args.method == "dca":
        res = solve.dca_solve(inst, args.lam, cfg, x0)
    elif args.method == "nuclear":
        res = solve.nuclear_solve(inst, args.lam, cfg, x0)
    elif args.method == "path":
        res = solve.penalty_path_solve(inst, args.lambda0, args.decay, args.feas_tol, cfg,
                                       args.max_steps, x0=x0)
    else:
        res = solve.discrepancy_solve(inst, args.epsilon, None, cfg)
    out = _out_path(args.out, "result.json")
    solve.save_result(res, out)
    print(json.dumps({"status": res.status, "residual": res.residual, "objective": res.objective,
                      "lambda_used": res.lambda_used}, sort_keys=True))
    return 0


def cmd_rip(args) -> int:
    if (args.operator is None) == (args.instance is None):
        raise UsageError("give exactly one of --operator or --instance")
    op = load_operator(args.operator) if args.operator else load_instance(args.instance).operator
    est = ripest.estimate_delta(op, args.r, args.restarts, args.iterations, args.seed, args.threads)
    out = _out_path(args.out, "rip.json")
    ripest.save_estimate(est, out)
    print(json.dumps({"r": est.r, "delta": est.delta, "certainty": est.certainty}, sort_keys=True))
    return 0


def cmd_certify(args) -> int:
    inst = load_instance(args.instance)
    cand = as_matrix(read_mtx(args.candidate))
    out = _out_path(args.out, "certificate.json")
    if args.mode == "constrained":
        if args.r is None or args.k is None:
            raise UsageError("--r and --k are required for --mode constrained")
        if args.delta is not None:
            big = args.delta if args.delta_big is None else args.delta_big
            eps = inst.epsilon if args.epsilon is None else args.epsilon
            params, source = certify.ConstrainedBoundParams(args.r, args.k, args.delta, big, eps), "given"
        else:
            params, source = certify.params_from_operator(inst, args.r, args.k, args.epsilon, seed=args.seed)
        rep = certify.check_constrained_recovery(inst, cand, params, source).to_dict()
    elif args.mode == "regularized":
        if args.k is None or args.lam is None:
            raise UsageError("--k and --lambda are required for --mode regularized")
        delta = args.delta
        if delta is None:
            if inst.operator.exact_delta is None:
                raise UsageError("operator has no exact isometry constant; pass --delta")
            delta = float(inst.operator.exact_delta)
        rep = certify.check_regularized_recovery(inst, cand, args.t, args.k, delta, args.lam).to_dict()
    else:
        if args.r is None or args.k is None:
            raise UsageError("--r and --k are required for --mode replay")
        rep = {"kind": "replay",
               "constrained": certify.proof_replay_constrained(inst, cand, args.r, args.k)}
        verdicts = [rep["constrained"]["verdict"]]
        if args.lam is not None:
            rep["spectral_tail"] = certify.spectral_tail_replay(inst, cand, args.t, args.k, args.lam)
            verdicts.append(rep["spectral_tail"]["verdict"])
        rep["verdict"] = certify.FAIL if certify.FAIL in verdicts else verdicts[0]
    _dump(out, rep)
    print(json.dumps({"verdict": rep["verdict"], "report": str(out)}, sort_keys=True))
    return 1 if rep["verdict"] == certify.FAIL else 0


def cmd_lemmas(args) -> int:
    rep = bench.run_lemma_suite(args.seed, record_timing=args.timing)
    out = _out_path(args.out, "lemmas.json")
    _dump(out, rep)
    print(json.dumps({"ok": rep["ok"], "total_violations": rep["total_violations"],
                      "report": str(out)}, sort_keys=True))
    return 0 if rep["ok"] else 1


def cmd_bench(args) -> int:
    sizes = []
    for tok in args.sizes.split(","):
        try:
            m, n = tok.lower().split("x")
            sizes.append((int(m), int(n)))
        except ValueError:
            raise UsageError(f"--sizes entries look like 10x12, got {tok!r}") from None
    spec = bench.ExperimentSpec(
        sizes=tuple(sizes), ranks=_csv_ints(args.ranks), measurements=_csv_ints(args.l),
        epsilons=_csv_floats(args.eps), lambda_policy=args.lambda_policy,
        solvers=tuple(args.solvers.split(",")), trials=args.trials, operator=args.kind,
        operator_params=_operator_params(args), base_seed=args.seed,
        success_threshold=args.success_threshold, certify=args.certify, record_timing=args.timing,
        solver_config=solve.SolverConfig(max_outer=args.max_outer, max_inner=args.max_inner),
    )
    out = _out_path(args.out, "bench.csv")
    records = bench.run_experiment(spec, out, threads=args.threads)
    summary = bench.success_summary(records, spec.success_threshold)
    stem = out.name[:-4] if out.name.endswith(".csv") else out.name
    _dump(out.parent / f"{stem}.summary.json", summary)
    print(json.dumps({"records": len(records), "csv": str(out)}, sort_keys=True))
    failed = spec.certify and any(r.verdict == certify.FAIL for r in records)
    return 1 if failed else 0


# --- parser ------------------------------------------------------------------

def _seed(text: str) -> int:
    try:
        return check_seed(int(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lstarf", description="Nuclear-minus-Frobenius low-rank recovery toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=_seed, default=seed_default)
        sp.add_argument("--out", default=None, help=f"output path (default: ${OUT_DIR_ENV} or cwd)")
        sp.add_argument("--threads", type=_positive_int, default=1)

    g = sub.add_parser("gen", help="generate an operator or a problem instance")
    common(g)
    g.add_argument("--what", choices=("instance", "operator"), default="instance")
    g.add_argument("--kind", choices=KINDS, required=True)
    g.add_argument("--m", type=_positive_int, required=True)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--l", type=_positive_int, required=True)
    g.add_argument("--a", type=float, default=None, help="scaled-identity factor")
    g.add_argument("--rank", type=_positive_int, default=None)
    g.add_argument("--noise", choices=NOISE_KINDS, default="none")
    g.add_argument("--epsilon", type=float, default=0.0)
    g.set_defaults(func=cmd_gen)

    def solver_flags(sp):
        sp.add_argument("--max-outer", type=_positive_int, default=500)
        sp.add_argument("--max-inner", type=_positive_int, default=300)

    s = sub.add_parser("solve", help="run a solver on an instance")
    common(s)
    solver_flags(s)
    s.add_argument("--instance", required=True)
    s.add_argument("--method", choices=("dca", "nuclear", "path", "discrepancy"), default="dca")
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--lambda0", type=float, default=0.1)
    s.add_argument("--decay", type=float, default=0.5)
    s.add_argument("--feas-tol", type=float, default=1e-8)
    s.add_argument("--max-steps", type=_positive_int, default=60)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--tol-outer", type=float, default=1e-10)
    s.add_argument("--tol-inner", type=float, default=1e-10)
    s.add_argument("--step-rule", choices=solve.STEP_RULES, default="fixed")
    s.add_argument("--no-acceleration", action="store_true")
    s.add_argument("--init", choices=solve.INITS + ("truth",), default="adjoint")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("rip", help="estimate a restricted isometry constant")
    common(r)
    r.add_argument("--operator", default=None)
    r.add_argument("--instance", default=None)
    r.add_argument("--r", type=_positive_int, required=True)
    r.add_argument("--restarts", type=_positive_int, default=16)
    r.add_argument("--iterations", type=_positive_int, default=200)
    r.set_defaults(func=cmd_rip)

    c = sub.add_parser("certify", help="check a candidate against a recovery bound")
    common(c)
    c.add_argument("--instance", required=True)
    c.add_argument("--candidate", required=True)
    c.add_argument("--mode", choices=("constrained", "regularized", "replay"), required=True)
    c.add_argument("--r", type=_positive_int, default=None)
    c.add_argument("--k", type=_positive_int, default=None)
    c.add_argument("--t", type=int, default=2)
    c.add_argument("--lambda", dest="lam", type=float, default=None)
    c.add_argument("--delta", type=float, default=None)
    c.add_argument("--delta-big", type=float, default=None)
    c.add_argument("--epsilon", type=float, default=None)
    c.set_defaults(func=cmd_certify)

    lm = sub.add_parser("lemmas", help="run the randomized lemma suite")
    common(lm)
    lm.add_argument("--timing", action="store_true", help="include runtimes (output is then not reproducible)")
    lm.set_defaults(func=cmd_lemmas)

    b = sub.add_parser("bench", help="run a recovery experiment grid")
    common(b)
    solver_flags(b)
    b.add_argument("--kind", choices=KINDS, default="gaussian")
    b.add_argument("--a", type=float, default=None)
    b.add_argument("--sizes", default="10x10")
    b.add_argument("--ranks", default="1")
    b.add_argument("--l", default="100")
    b.add_argument("--eps", default="0")
    b.add_argument("--lambda-policy", default="fixed:1e-3")
    b.add_argument("--solvers", default="discrepancy")
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--success-threshold", type=float, default=1e-3)
    b.add_argument("--certify", action="store_true")
    b.add_argument("--timing", action="store_true", help="record wall times (output is then not reproducible)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _announce(args.command, args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lstarf {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, LstarfError, FileNotFoundError, KeyError) as exc:
        print(f"lstarf {args.command}: error: {exc} (check the flags and input files; see --help)",
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
