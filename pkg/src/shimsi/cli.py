"""Command line interface: ``shimsi {synth,fit,infer,experiment,bench,verify}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import InputError, ShimError
from .experiment import TEST_COLUMNS, flatten_tests, pruning_benchmark, run_experiment
from .inference import estimate_sigma2, infer_all
from .io import dump_csv, dumps_json, load_csv, write_json, write_rows_csv
from .lasso_path import check_kkt, lambda_max, lambda_path
from .synth import ExperimentConfig, parse_true_model, synth_generate
from .tau_path import fit_at


def _emit(obj, out):
    if out:
        write_json(obj, out)
    else:
        sys.stdout.write(dumps_json(obj))


def _model_dict(model) -> dict:
    return {
        "lambda": model.lam,
        "patterns": [list(p) for p in model.patterns],
        "beta": list(model.beta),
        "signs": list(model.signs),
    }


def _resolve_lambda(args, data) -> float:
    if args.lam is not None:
        if not args.lam > 0:
            raise InputError("--lambda must be positive")
        return args.lam
    lam0, _, _ = lambda_max(data, max_order=args.max_order)
    return args.lambda_frac * lam0


def cmd_synth(args) -> int:
    cfg = ExperimentConfig(n=args.n, m=args.m, d=1, zeta=args.zeta, sigma=args.sigma,
                           n_trials=1, seed=args.seed,
                           true_model=parse_true_model(args.true_model or ""))
    data = synth_generate(cfg)
    dump_csv(data, args.out)
    return 0


def cmd_fit(args) -> int:
    data = load_csv(args.data, args.response)
    lam_target = args.lam
    res = lambda_path(data, lam_target, max_order=args.max_order, k_max=args.k_max,
                      alpha_ridge=args.ridge, lam_frac=args.lambda_frac, certify=True)
    _emit({
        "lambda_max": res.lam_max,
        "first": list(res.first),
        "d": args.max_order,
        "ridge": args.ridge,
        "kinks": [{"lambda": b.param, "event": b.event, "pattern": list(b.pattern),
                   "active": [list(p) for p in b.active_after], "beta": list(b.beta_after),
                   "nodes_visited": b.nodes_visited} for b in res.breakpoints],
        "final": _model_dict(res.final),
        "names": [data.label(p) for p in res.final.patterns],
    }, args.out)
    return 0


def cmd_infer(args) -> int:
    data = load_csv(args.data, args.response, sigma2=args.sigma ** 2 if args.sigma else 1.0)
    if args.k_max is not None:
        fit = lambda_path(data, args.lam, max_order=args.max_order, k_max=args.k_max,
                          alpha_ridge=args.ridge, lam_frac=args.lambda_frac).final
        lam = fit.lam
    else:
        lam = _resolve_lambda(args, data)
        fit = fit_at(data, data.y, lam, max_order=args.max_order, alpha_ridge=args.ridge)
    sigma_estimated = args.sigma is None
    sigma2 = args.sigma ** 2 if args.sigma else estimate_sigma2(data, fit)
    if not len(fit):
        results = []
    else:
        results = infer_all(data, lam, fit, args.alpha, args.method, max_order=args.max_order,
                            sigma2=sigma2, split_seed=args.seed)
    _emit({
        "lambda": lam,
        "d": args.max_order,
        "method": args.method,
        "seed": args.seed,
        "alpha_sig": args.alpha,
        "ridge": args.ridge,
        "sigma2": sigma2,
        "sigma2_estimated": sigma_estimated,
        "results": [{
            "pattern": list(r.pattern),
            "name": data.label(r.pattern),
            "beta": r.beta_hat,
            "stat": r.stat,
            "p_selective": r.p_selective,
            "ci": list(r.ci),
            "region": r.region.as_list() if r.region is not None else None,
            "kinks": r.diagnostics.get("kinks"),
            "nodes_visited": r.diagnostics.get("nodes_visited"),
            **({"error": r.diagnostics["error"]} if "error" in r.diagnostics else {}),
        } for r in results],
    }, args.out)
    return 0


def cmd_experiment(args) -> int:
    if args.config:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        raw.setdefault("jobs", args.jobs)
        cfg = ExperimentConfig.from_dict(raw)
    else:
        cfg = ExperimentConfig(
            n=args.n, m=args.m, d=args.max_order, zeta=args.zeta, sigma=args.sigma_true,
            n_trials=args.trials, alpha_sig=args.alpha, methods=args.methods.split(","),
            seed=args.seed, true_model=parse_true_model(args.true_model or ""),
            lam=args.lam, lam_scale=args.lam_scale, alpha_ridge=args.ridge, k_max=args.k_max,
            jobs=args.jobs,
        )
    report = run_experiment(cfg, timings=args.timings)
    out = Path(args.out)
    write_json(report, out.with_suffix(".json"))
    write_rows_csv(flatten_tests(report), out.with_suffix(".tests.csv"), TEST_COLUMNS)
    summary_cols = ["method", "n_tests", "n_false_tests", "false_rejections", "fpr",
                    "tpr", "ci_length_mean", "ci_length_median", "ci_unbounded"]
    write_rows_csv([{"method": k, **v} for k, v in report["methods"].items()],
                   out.with_suffix(".summary.csv"), summary_cols)
    return 0


def cmd_bench(args) -> int:
    orders = tuple(int(d) for d in args.orders.split(","))
    report = pruning_benchmark(args.n, args.m, args.zeta, orders, seed=args.seed,
                               lam_frac=args.lambda_frac, max_paths=args.max_paths,
                               unpruned_cap=args.unpruned_cap)
    if not args.timings:
        for row in report["orders"]:
            for p in row["paths"]:
                p.pop("seconds")
    _emit(report, args.out)
    if args.csv:
        write_rows_csv([{k: v for k, v in r.items() if k != "paths"} for r in report["orders"]],
                       args.csv, ["d", "tree_size", "n_selected", "mean_nodes_per_kink",
                                  "mean_nodes_per_path", "mean_fraction_of_tree"])
    return 0


def cmd_verify(args) -> int:
    from .oracle import dense_expand, dense_lasso_path

    data = load_csv(args.data, args.response)
    lam0, _, _ = lambda_max(data, max_order=args.max_order)
    lam = args.lam if args.lam is not None else args.lambda_frac * lam0
    X, patterns = dense_expand(data, args.max_order)
    fast = lambda_path(data, lam, max_order=args.max_order)
    slow = lambda_path(data, lam, max_order=args.max_order, prune=False)
    dense = dense_lasso_path(X, data.y, lam)

    def sig(kinks):
        return [(k.param, k.event, tuple(k.pattern)) for k in kinks]

    a, b = sig(fast.breakpoints), sig(slow.breakpoints)
    c = [(k.param, k.event, patterns[k.index]) for k in dense.kinks]
    tol = 1e-9 * lam0

    def same(u, v):
        return len(u) == len(v) and all(
            x[1:] == y[1:] and abs(x[0] - y[0]) <= tol for x, y in zip(u, v))

    report = check_kkt(data, fast.final, data.y, fast.final.lam, max_order=args.max_order)
    ok = same(a, b) and same(a, c) and report.ok(1e-6 * lam0)
    _emit({
        "lambda": lam, "d": args.max_order, "kinks": len(a),
        "pruned_equals_unpruned": same(a, b), "pruned_equals_dense": same(a, c),
        "kkt_ok": report.ok(1e-6 * lam0),
        "nodes_pruned": int(sum(fast.nodes_visited)),
        "nodes_unpruned": int(sum(slow.nodes_visited)),
    }, args.out)
    return 0 if ok else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shimsi", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def data_args(sp):
        sp.add_argument("--data", required=True, help="CSV file with a header row")
        sp.add_argument("--response", default="y", help="response column (default: y)")
        sp.add_argument("-d", "--max-order", type=int, default=3)
        sp.add_argument("--out", help="output path (default: stdout)")

    def lambda_args(sp, frac_default):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--lambda", dest="lam", type=float, help="absolute penalty")
        g.add_argument("--lambda-frac", type=float, default=frac_default,
                       help=f"penalty as a fraction of lambda_max (default: {frac_default})")
        sp.add_argument("--ridge", type=float, default=0.0, help="elastic-net L2 weight")
        sp.add_argument("--k-max", type=int, help="stop once this many patterns are active")

    sp = sub.add_parser("synth", help="generate a synthetic CSV")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--m", type=int, default=10)
    sp.add_argument("--zeta", type=float, default=0.95)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--true-model", help='e.g. "0.5:1; -2:2,3; 3:4,5,6"')
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("fit", help="regularization path down to a target lambda")
    data_args(sp)
    lambda_args(sp, 0.01)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("infer", help="selective p-values and confidence intervals")
    data_args(sp)
    lambda_args(sp, 0.1)
    sp.add_argument("--alpha", type=float, default=0.05, help="significance level")
    sp.add_argument("--sigma", type=float, help="noise s.d. (estimated from residuals if absent)")
    sp.add_argument("--method", choices=["homo", "poly", "ds"], default="homo")
    sp.add_argument("--seed", type=int, default=0, help="split seed for ds")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("experiment", help="Monte Carlo FPR/TPR/CI study")
    sp.add_argument("--config", help="JSON experiment configuration (overrides flags)")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--m", type=int, default=8)
    sp.add_argument("-d", "--max-order", type=int, default=3)
    sp.add_argument("--zeta", type=float, default=0.95)
    sp.add_argument("--sigma", dest="sigma_true", type=float, default=1.0)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--methods", default="homo,poly,ds")
    sp.add_argument("--true-model", help='e.g. "0.5:1; -2:2,3; 3:4,5,6" (default: null model)')
    sp.add_argument("--lambda", dest="lam", type=float, help="absolute penalty")
    sp.add_argument("--lam-scale", type=float, default=0.5,
                    help="penalty = scale * sigma * max column norm when --lambda is absent")
    sp.add_argument("--ridge", type=float, default=0.0)
    sp.add_argument("--k-max", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--timings", action="store_true", help="include wall-clock times")
    sp.add_argument("--out", required=True, help="output prefix (.json, .tests.csv, .summary.csv)")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("bench", help="pruning effectiveness versus maximum order")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--m", type=int, default=30)
    sp.add_argument("--zeta", type=float, default=0.95)
    sp.add_argument("--orders", default="5,8,10,12")
    sp.add_argument("--lambda-frac", type=float, default=0.3)
    sp.add_argument("--max-paths", type=int, default=5)
    sp.add_argument("--unpruned-cap", type=int, default=0,
                    help="also run without pruning when the tree has at most this many nodes")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--timings", action="store_true")
    sp.add_argument("--out")
    sp.add_argument("--csv", help="plot-ready per-order CSV")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("verify", help="compare pruned, unpruned and dense solvers")
    data_args(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--lambda-frac", type=float, default=0.05)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ShimError as exc:
        print(f"shimsi: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"shimsi: error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
