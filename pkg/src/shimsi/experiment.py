"""Monte Carlo harness: rejection rates, CI lengths and pruning statistics."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.stats import binom, kstest

from .baselines import data_split_inference, split_rows
from .errors import ShimError
from .inference import infer_all
from .lasso_path import lambda_max, lambda_path
from .patterns import tree_size
from .synth import ExperimentConfig, design_lambda, synth_generate
from .tau_path import fit_at

TEST_COLUMNS = ["trial", "method", "pattern", "is_true", "beta", "stat", "p_selective",
                "ci_lo", "ci_hi", "ci_length", "n_intervals", "kinks", "nodes_visited"]


def trial_seeds(seed: int, n_trials: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_trials)]


def _pattern_str(p) -> str:
    return "-".join(str(j) for j in p)


def run_trial(config: ExperimentConfig, trial: int, seed: int) -> dict:
    """One synthetic data set, one selection, every requested method."""
    t0 = time.perf_counter()
    data = synth_generate(config, seed)
    truth = {p for p, _ in config.true_model}
    lam = config.lam if config.lam is not None else design_lambda(data.Z, config.sigma, config.lam_scale)
    record = {"trial": trial, "seed": seed, "lambda": lam, "tests": [], "selected": []}
    try:
        model = None
        if math.isfinite(lam) and np.any(data.Z):
            if config.k_max is not None:
                model = lambda_path(data, lam, max_order=config.d, k_max=config.k_max,
                                    alpha_ridge=config.alpha_ridge).final
                lam = model.lam
                record["lambda"] = lam
            else:
                model = fit_at(data, data.y, lam, max_order=config.d,
                               alpha_ridge=config.alpha_ridge)
        for method in config.methods:
            if method == "ds":
                sel_rows, _ = split_rows(data.n, seed)
                lam_sel = (config.lam if config.lam is not None
                           else design_lambda(data.Z[sel_rows], config.sigma, config.lam_scale))
                if not math.isfinite(lam_sel):
                    continue
                results = data_split_inference(data, lam_sel, seed, config.alpha_sig,
                                               max_order=config.d)
            elif model is not None and len(model):
                results = infer_all(data, lam, model, config.alpha_sig, method, max_order=config.d)
            else:
                results = []
            for r in results:
                if "error" in r.diagnostics:
                    record.setdefault("pattern_errors", []).append(
                        {"method": method, "pattern": list(r.pattern), "error": r.diagnostics["error"]})
                    continue
                lo, hi = r.ci
                record["tests"].append({
                    "trial": trial, "method": method, "pattern": _pattern_str(r.pattern),
                    "is_true": r.pattern in truth, "beta": r.beta_hat, "stat": r.stat,
                    "p_selective": r.p_selective, "ci_lo": lo, "ci_hi": hi, "ci_length": hi - lo,
                    "n_intervals": len(r.region.intervals) if r.region is not None else 0,
                    "kinks": r.diagnostics.get("kinks", 0),
                    "nodes_visited": r.diagnostics.get("nodes_visited", 0),
                })
        if model is not None:
            record["selected"] = [_pattern_str(p) for p in model.patterns]
    except ShimError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
    record["seconds"] = time.perf_counter() - t0
    return record


def _run_indexed(args):
    config, trial, seed = args
    return run_trial(config, trial, seed)


def binomial_band(n_tests: int, rate: float = 0.05, level: float = 0.95) -> tuple[float, float]:
    """Central acceptance band for an empirical rejection rate under ``Binomial(n, rate)``."""
    if n_tests == 0:
        return 0.0, 1.0
    tail = (1 - level) / 2
    return (float(binom.ppf(tail, n_tests, rate)) / n_tests,
            float(binom.ppf(1 - tail, n_tests, rate)) / n_tests)


def summarize(config: ExperimentConfig, trials: list[dict]) -> dict:
    out = {}
    n_true = len(config.true_model)
    for method in config.methods:
        tests = [t for tr in trials if "error" not in tr for t in tr["tests"] if t["method"] == method]
        false = [t for t in tests if not t["is_true"]]
        true = [t for t in tests if t["is_true"]]
        rej_false = sum(t["p_selective"] < config.alpha_sig for t in false)
        rej_true = sum(t["p_selective"] < config.alpha_sig for t in true)
        ok_trials = sum("error" not in tr for tr in trials)
        lengths = [t["ci_length"] for t in tests if math.isfinite(t["ci_length"])]
        pvals = [t["p_selective"] for t in false]
        band = binomial_band(len(false), config.alpha_sig)
        entry = {
            "n_tests": len(tests),
            "n_false_tests": len(false),
            "n_true_tests": len(true),
            "false_rejections": rej_false,
            "true_rejections": rej_true,
            "fpr": rej_false / len(false) if false else None,
            "fpr_band": list(band),
            "tpr": rej_true / (n_true * ok_trials) if n_true and ok_trials else None,
            "tpr_given_selected": rej_true / len(true) if true else None,
            "ci_length_mean": float(np.mean(lengths)) if lengths else None,
            "ci_length_median": float(np.median(lengths)) if lengths else None,
            "ci_unbounded": len(tests) - len(lengths),
            "null_pvalues": pvals,
        }
        if len(pvals) >= 2:
            entry["ks_pvalue"] = float(kstest(pvals, "uniform").pvalue)
        out[method] = entry
    return out


def run_experiment(config: ExperimentConfig, *, timings: bool = False) -> dict:
    """Run every trial (up to ``config.jobs`` at once) and aggregate in trial order."""
    seeds = trial_seeds(config.seed, config.n_trials)
    jobs = [(config, i, s) for i, s in enumerate(seeds)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            trials = list(pool.map(_run_indexed, jobs))
    else:
        trials = [_run_indexed(j) for j in jobs]
    trials.sort(key=lambda tr: tr["trial"])
    seconds = [tr.pop("seconds") for tr in trials]
    report = {
        "config": config.to_dict(),
        "methods": summarize(config, trials),
        "failures": [{"trial": tr["trial"], "seed": tr["seed"], "error": tr["error"]}
                     for tr in trials if "error" in tr],
        "trials": trials,
    }
    if timings:
        report["timings"] = {"trial_seconds": seconds, "total_seconds": float(sum(seconds))}
    return report


def flatten_tests(report: dict) -> list[dict]:
    return [t for tr in report["trials"] for t in tr["tests"]]


def pruning_benchmark(n: int = 200, m: int = 30, zeta: float = 0.95, orders=(5, 8, 10, 12), *,
                      seed: int = 0, sigma: float = 1.0, lam_frac: float = 0.3,
                      max_paths: int = 5, unpruned_cap: int = 0) -> dict:
    """Nodes visited per tau-path kink as the maximum order grows.

    The same data set is used for every order.  For each order the model is fit
    at ``lam_frac * lam_max``, and tau paths are run for up to ``max_paths``
    selected patterns.  Orders whose full tree has at most ``unpruned_cap``
    nodes are also run without pruning.
    """
    from .inference import TAU_WIDTH, nuisance_decomposition, test_direction
    from .tau_path import tau_path

    cfg = ExperimentConfig(n=n, m=m, d=max(orders), zeta=zeta, sigma=sigma, n_trials=1,
                           seed=seed, methods=["homo"])
    data = synth_generate(cfg)
    rows = []
    for d in orders:
        lam0, _, _ = lambda_max(data, max_order=d)
        lam = lam_frac * lam0
        model = fit_at(data, data.y, lam, max_order=d)
        size = tree_size(m, d)
        entry = {"d": d, "tree_size": size, "lambda": lam, "n_selected": len(model), "paths": []}
        for j, pattern in enumerate(model.patterns[:max_paths]):
            target = test_direction(j, model.columns, data.sigma2, data.y)
            pair = nuisance_decomposition(data.y, target.eta)
            w = TAU_WIDTH * target.sigma_eta
            runs = {"pruned": True}
            if size <= unpruned_cap:
                runs["unpruned"] = False
            for name, flag in runs.items():
                t0 = time.perf_counter()
                path = tau_path(data, lam, pair.b, pair.q, target.stat_obs - w, target.stat_obs + w,
                                max_order=d, prune=flag)
                steps = len(path.nodes_visited)
                entry["paths"].append({
                    "pattern": list(pattern), "mode": name, "kinks": len(path.kinks),
                    "nodes_visited": int(sum(path.nodes_visited)),
                    "nodes_per_kink": sum(path.nodes_visited) / steps,
                    "fraction_of_tree": sum(path.nodes_visited) / steps / size,
                    "seconds": time.perf_counter() - t0,
                })
        pr = [p for p in entry["paths"] if p["mode"] == "pruned"]
        if pr:
            entry["mean_nodes_per_kink"] = float(np.mean([p["nodes_per_kink"] for p in pr]))
            entry["mean_nodes_per_path"] = float(np.mean([p["nodes_visited"] for p in pr]))
            entry["mean_fraction_of_tree"] = float(np.mean([p["fraction_of_tree"] for p in pr]))
        rows.append(entry)
    return {"n": n, "m": m, "zeta": zeta, "seed": seed, "lam_frac": lam_frac, "orders": rows}
