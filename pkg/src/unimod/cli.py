"""``unimod`` command line: run a checker or experiment and write its report.

Exit codes: 0 all certificates passed, 1 a certificate failed, 2 bad
configuration, 3 a resource budget was exceeded.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .brownian import BrownianPathStore
from .config import COMMANDS, RunConfig, dump_config, parse_config
from .diffusion import (DiffusionModel, SaturatingDrift, Shifted, TanhSquaredVariance,
                        certify_stability, simulate_coupled)
from .errors import CertificationError, ConfigError, DomainError, ResourceError
from .experiments import Perturbation, run_cor41, run_cor42
from .grr import admitted_horizon, certify_grr
from .modcore import f_eps
from .modulus import estimate_M, exponential_moment_diagnostics
from .report import Certificate, Result, emit_report, load_summaries

__all__ = ["main", "build_parser", "run_command", "default_workers", "TAIL_LAMBDAS"]

WORKERS_ENV = "UNIMOD_WORKERS"
TAIL_LAMBDAS = (1e-4, 1e-3, 1.0 / 256.0)
TAIL_MIN_SAMPLES = 256
EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}", key=WORKERS_ENV) from None
    if n < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1", key=WORKERS_ENV)
    return n


def _pool_map(fn, tasks, workers: int):
    # Ordered map: results come back in task order whatever the scheduling.
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _modulus_task(args):
    seed, spec, p = args
    store = BrownianPathStore(seed)
    b = estimate_M(store, spec, p["t_min"], p["t_max"], p["levels"], max_points=p["max_points"])
    return (seed, p["t_min"], p["t_max"], p["levels"], b.lower, b.upper, b.argmax[0], b.argmax[1])


def _grr_task(args):
    seed, spec, p, tol = args
    cert = certify_grr(BrownianPathStore(seed), spec, T=p["T"], n=p["n"], n_pairs=p["n_pairs"],
                       pair_seed=seed, tolerance=tol)
    xi_T = f_eps(spec, p["T"]) * cert.B_T
    return (seed, p["T"], p["n"], xi_T, cert.B_T, cert.max_violation, cert.max_rel_violation, cert.passed)


def stability_models(p: dict):
    drift_bar = SaturatingDrift(K=p["drift_K"], a1=p["drift_slope"])
    sigma_bar = TanhSquaredVariance(s0=p["s0"], s1=p["s1"])
    model_bar = DiffusionModel(drift_bar, sigma_bar, 0.0)
    model = DiffusionModel(Shifted(drift_bar, p["shift_b"]), Shifted(sigma_bar, p["shift_sigma"]),
                           p["shift_x"])
    return model, model_bar


def _stability_task(args):
    seed, spec, p, tol, keep_path = args
    model, model_bar = stability_models(p)
    run = simulate_coupled(model, model_bar, BrownianPathStore(seed), p["dt"], p["T"], lbc_seed=seed)
    cert = certify_stability(run, spec, tolerance=tol)
    traj = None
    if keep_path:
        traj = list(zip(run.t.tolist(), run.X.tolist(), run.Xbar.tolist(), run.Lambda.tolist(),
                        run.LambdaBar.tolist()))
    return seed, cert.to_dict(), traj


def _cmd_modulus(cfg: RunConfig) -> Result:
    p = cfg.section()
    if not p["t_min"] < p["t_max"]:
        raise ConfigError("modulus.t_min must be below modulus.t_max", key="modulus.t_min")
    rows = _pool_map(_modulus_task, [(s, cfg.spec, p) for s in cfg.seed_list], cfg.workers)
    header = ("seed", "t_min", "t_max", "levels", "M_lower", "M_upper", "argmax_s", "argmax_t")
    lowers = np.array([r[4] for r in rows])
    certs = [Certificate(f"bracket_seed_{r[0]}", bool(r[4] <= r[5] and math.isfinite(r[5])),
                         {"M_lower": r[4], "M_upper": r[5]}) for r in rows]
    summary = {"window": [p["t_min"], p["t_max"]], "levels": p["levels"],
               "lower_max": float(lowers.max()), "lower_median": float(np.median(lowers))}
    if lowers.size < TAIL_MIN_SAMPLES:
        summary["tail"] = {"skipped": f"needs at least {TAIL_MIN_SAMPLES} seeds"}
    else:
        tail = exponential_moment_diagnostics(lowers, TAIL_LAMBDAS, min_samples=TAIL_MIN_SAMPLES)
        summary["tail"] = {"lambdas": tail.lambdas, "exp_means": tail.exp_means, "stable": tail.stable,
                           "slope": tail.tail_slope, "slope_ci": list(tail.tail_slope_ci),
                           "slope_plain": tail.tail_slope_plain, "n": tail.n}
    return Result("modulus", tables={"modulus": (header, rows)},
                  plots={"modulus_lower": [(r[0], r[4]) for r in rows],
                         "modulus_upper": [(r[0], r[5]) for r in rows]},
                  certificates=certs, summary=summary)


def _cmd_grr(cfg: RunConfig) -> Result:
    p = dict(cfg.section())
    p["T"] = admitted_horizon(p["T"])
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-6
    rows = _pool_map(_grr_task, [(s, cfg.spec, p, tol) for s in cfg.seed_list], cfg.workers)
    header = ("seed", "T", "n", "xi_T", "B_T", "max_violation")
    certs = [Certificate(f"grr_seed_{r[0]}", bool(r[7]), {"max_rel_violation": r[6]}) for r in rows]
    return Result("grr", tables={"grr": (header, [r[:6] for r in rows])},
                  plots={"grr_B_T": [(r[0], r[4]) for r in rows]}, certificates=certs,
                  summary={"T": p["T"], "n": p["n"], "n_pairs": p["n_pairs"], "tolerance": tol})


def _cmd_stability(cfg: RunConfig) -> Result:
    p = cfg.section()
    tol = cfg.tolerance if cfg.tolerance is not None else 1e-3
    seeds = cfg.seed_list
    tasks = [(s, cfg.spec, p, tol, i == 0) for i, s in enumerate(seeds)]
    out = _pool_map(_stability_task, tasks, cfg.workers)
    keys = ("gamma", "rhs", "M_used", "a1", "a2", "a3", "a4", "a5", "passed")
    rows = [(seed,) + tuple(d[k] for k in keys) + (";".join(d["broken_terms"]),) for seed, d, _ in out]
    certs = [Certificate(f"stability_seed_{seed}", bool(d["passed"]), d) for seed, d, _ in out]
    tables = {"stability": (("seed",) + keys + ("broken_terms",), rows)}
    traj = out[0][2]
    if traj is not None:
        tables[f"stability_trajectory_seed_{seeds[0]}"] = (("t", "X", "Xbar", "Lambda", "LambdaBar"), traj)
    return Result("stability", tables=tables,
                  plots={"stability_gamma": [(seed, d["gamma"]) for seed, d, _ in out],
                         "stability_rhs": [(seed, d["rhs"]) for seed, d, _ in out]},
                  certificates=certs, summary={"T": p["T"], "dt": p["dt"], "tolerance": tol})


def _fit_dict(fit):
    return None if fit is None else {"slope": fit.slope, "ci": [fit.ci_low, fit.ci_high],
                                     "corrected": fit.corrected, "n_used": fit.n_used}


def _cmd_rates(cfg: RunConfig) -> Result:
    p = cfg.section()
    pert = Perturbation(D_b=p["D_b"], D_sigma=p["D_sigma"], D_x=p["D_x"])
    runner = run_cor41 if cfg.command == "rates41" else run_cor42
    rep = runner(perturbation=pert, alpha=p["alpha"], eta=p["eta"], N_grid=p["N_grid"], T=p["T"],
                 dt=p["dt"], seeds=cfg.seed_list, workers=cfg.workers)
    name = cfg.command
    header = ("N", "seed", "sup_err", "weighted_sup_err", "xi_hat")
    plots = {f"{name}_loglog": [(math.log(N), math.log(e)) for N, e in zip(rep.N_grid, rep.sup_errors)
                                if e > 0.0]}
    summary = {"alpha": rep.alpha, "eta": rep.eta, "N_grid": rep.N_grid, "T": rep.T, "dt": rep.dt,
               "mean_weighted_sup_err": rep.sup_errors, "max_weighted_sup_err": rep.sup_errors_max,
               "xi_hat": rep.Xi_hat, "fit_corrected": _fit_dict(rep.fit),
               "fit_uncorrected": _fit_dict(rep.fit_uncorrected),
               "spearman": {"rho": rep.spearman_rho, "p_greater": rep.spearman_p},
               "tail_ratio": rep.extra.get("tail_ratio")}
    if rep.ode_fit is not None:
        summary["ode_errors"] = rep.ode_errors
        summary["fit_ode"] = _fit_dict(rep.ode_fit)
        plots[f"{name}_ode_loglog"] = [(math.log(N), math.log(e)) for N, e in
                                       zip(rep.N_grid, rep.ode_errors) if e > 0.0]
    certs = [Certificate("xi_hat_no_upward_trend", rep.trend_ok,
                         {"rho": rep.spearman_rho, "p_greater": rep.spearman_p})]
    return Result(name, tables={name: (header, rep.rows())}, plots=plots, certificates=certs,
                  summary=summary)


def _cmd_report(cfg: RunConfig) -> Result:
    own = os.path.join(cfg.output_dir, "summary.json")
    found = load_summaries(cfg.output_dir, skip=own) if os.path.isdir(cfg.output_dir) else []
    rows, certs = [], []
    for path, data in found:
        for entry in data.get("results", []):
            rows.append((path, entry["command"], bool(entry["passed"]), ";".join(entry.get("failures", []))))
            certs.append(Certificate(f"{path}:{entry['command']}", bool(entry["passed"]),
                                     {"failures": entry.get("failures", [])}))
    return Result("report", tables={"report": (("summary", "command", "passed", "failures"), rows)},
                  certificates=certs, summary={"summaries": len(found)})


_COMMANDS = {"modulus": _cmd_modulus, "grr": _cmd_grr, "stability": _cmd_stability,
             "rates41": _cmd_rates, "rates42": _cmd_rates, "report": _cmd_report}


def run_command(cfg: RunConfig) -> Result:
    return _COMMANDS[cfg.command](cfg)


def output_dir_for(cfg: RunConfig) -> str:
    """Each command writes into its own subdirectory; ``report`` writes at the top."""
    return cfg.output_dir if cfg.command == "report" else os.path.join(cfg.output_dir, cfg.command)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unimod", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="U64")
        sp.add_argument("--seeds", type=int, metavar="N")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--workers", type=int, metavar="N")
        sp.add_argument("--tolerance", type=float, metavar="F")
    return parser


def load_config(args) -> RunConfig:
    text = ""
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc.strerror}") from None
        except UnicodeDecodeError:
            raise ConfigError(f"config {args.config!r} is not UTF-8") from None
    workers = args.workers if args.workers is not None else None
    overrides = {"command": args.command, "seed": args.seed, "seeds": args.seeds, "out": args.out,
                 "workers": workers, "tolerance": args.tolerance}
    cfg = parse_config(text, overrides)
    if args.workers is None and "workers" not in _top_keys(text):
        cfg.workers = default_workers()
    return cfg


def _top_keys(text: str) -> set:
    keys = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line.startswith("["):
            break
        if "=" in line:
            keys.add(line.split("=", 1)[0].strip())
    return keys


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args)
        out_dir = output_dir_for(cfg)
        result = run_command(cfg)
        meta = {"version": __version__, "argv": list(argv if argv is not None else sys.argv[1:]),
                "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat()}
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.txt.partial"), "w", encoding="utf-8") as fh:
            fh.write(dump_config(cfg))
        os.replace(os.path.join(out_dir, "config.txt.partial"), os.path.join(out_dir, "config.txt"))
        code = emit_report([result], out_dir, metadata=meta)
    except ConfigError as exc:
        print(f"unimod: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"unimod: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"unimod: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (CertificationError, FloatingPointError) as exc:
        print(f"unimod: certification failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    status = "PASS" if code == EXIT_OK else "FAIL"
    print(f"{cfg.command}: {status} ({out_dir})")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
