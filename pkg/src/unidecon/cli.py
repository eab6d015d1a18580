"""``unidecon`` command line interface.

Exit codes: 0 ok, 1 usage or configuration, 2 data or domain, 3 numerical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .censor import to_current_status, to_interval_censoring
from .dist import DistributionModel, ObservationSet, SeedSpec, load_distribution, sample_fixed, sample_mixed
from .errors import AllMassInUnitInterval, ConfigurationError, DataError, NumericalError, UnideconError
from .io import RunManifest, read_csv, read_kv, write_csv
from .mc import FIGURE_GRID, SimConfig, an_bn_diagnostics, simulate_variance_curve
from .mle import ICMConfig, FenchelReport, cusum_pava_mle, fenchel_check, icm_solve, loglik
from .smoothfn import (
    KernelSpec,
    asymp_variance_kernel,
    kernel_cdf_estimate,
    kernel_density_estimate,
    mean_estimate,
    plugin_variance_mean,
    smooth_variance_mean,
)

DEFAULTS = {
    "model": "fixed",
    "f0": "truncexp:0:2",
    "fe": "uniform:0.5:1.5",
    "n": 1000,
    "replications": 1000,
    "grid": "0.1:1.9:0.1",
    "tol": 1e-8,
    "max_iter": 500,
}


class UsageError(ConfigurationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    env = os.environ.get("UNIDECON_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"UNIDECON_SEED must be an integer, got {env!r}") from None


def parse_grid(text: str) -> np.ndarray:
    """``a:b:step`` (inclusive of ``b``) or a comma separated list."""
    try:
        if ":" in text:
            a, b, step = (float(v) for v in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            k = int(round((b - a) / step))
            return np.round(a + step * np.arange(k + 1), 12)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use a:b:step or a comma list") from None


def _dist(spec: str, what: str) -> DistributionModel:
    try:
        return load_distribution(spec)
    except UnideconError:
        raise
    except (ValueError, OSError) as exc:
        raise UsageError(f"invalid {what} spec {spec!r}: {exc}") from None


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return v


def _icm_config(cfg: dict) -> ICMConfig:
    tol = float(cfg["tol"])
    return ICMConfig(fenchel_tolerance=tol, max_iterations=int(cfg["max_iter"]),
                     value_floor=min(1e-10, tol / 100))


def _load_obs(path) -> ObservationSet:
    cols = read_csv(path)
    if "s" not in cols:
        raise DataError(f"{path}: expected a column named s")
    if "e" in cols:
        return ObservationSet.mixed(cols["e"], cols["s"])
    return ObservationSet.fixed(cols["s"])


def _manifest_path(args, out) -> Path:
    return Path(args.manifest) if args.manifest else Path(str(out) + ".manifest.json")


# -- commands -------------------------------------------------------------------------


def cmd_sample(args):
    F0 = _dist(args.f0 or DEFAULTS["f0"], "F0")
    seed = SeedSpec(args.seed, args.stream)
    if args.model == "fixed":
        obs = sample_fixed(F0, args.n, seed)
        write_csv(args.out, {"s": obs.s_values})
        cfg = {"model": "fixed", "f0": F0.spec(), "n": args.n, "stream": args.stream}
    else:
        FE = _dist(args.fe or DEFAULTS["fe"], "FE")
        obs = sample_mixed(F0, FE, args.n, seed)
        write_csv(args.out, {"e": obs.e_values, "s": obs.s_values})
        cfg = {"model": "mixed", "f0": F0.spec(), "fe": FE.spec(), "n": args.n, "stream": args.stream}
    return [args.out], cfg


def cmd_transform(args):
    obs = _load_obs(args.input)
    if obs.model_kind != "fixed":
        raise UsageError("transforms are defined for the fixed model only (input has an e column)")
    if args.mode == "cs":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cs = to_current_status(obs)
        if cs.inconsistent:
            print("warning: sample has S > 2, inconsistent with F0(1) = 1", file=sys.stderr)
        write_csv(args.out, {"y": cs.y, "delta": cs.delta})
    else:
        if args.m is None:
            raise UsageError("--mode icm needs --m")
        ic = to_interval_censoring(obs, args.m)
        write_csv(args.out, {"y1": ic.y1, "bucket": ic.bucket})
    return [args.out], {"mode": args.mode, "m": args.m}


def _route_pava(obs: ObservationSet, force: bool) -> bool:
    if obs.model_kind != "fixed":
        if force:
            raise UsageError("--force-cs needs fixed-model data")
        return False
    # all S <= 2 forces F = 1 beyond m_n <= 1, so F0(1) = 1 and the
    # current-status MLE is exact
    return force or bool(np.max(obs.s_values) <= 2.0)


def fit(obs: ObservationSet, cfg: ICMConfig, force_cs: bool = False):
    """MLE plus a diagnostics record; chooses PAVA where it is exact."""
    if _route_pava(obs, force_cs):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = cusum_pava_mle(to_current_status(obs))
        try:
            report = fenchel_check(est, obs, cfg.fenchel_tolerance)
        except AllMassInUnitInterval:
            report = FenchelReport(0.0, 0.0, True, cfg.fenchel_tolerance)
        except NumericalError:
            report = FenchelReport(float("nan"), float("nan"), False, cfg.fenchel_tolerance)
        diag = {"solver": "pava", "iterations": 1}
    else:
        res = icm_solve(obs, cfg)
        est, report = res.estimate, res.report
        diag = {"solver": "icm", "iterations": res.iterations}
    diag.update(model=obs.model_kind, n=obs.n, max_tail_sum=report.max_tail_sum,
                inner_product=report.inner_product, satisfied=report.satisfied,
                tolerance=report.tolerance, loglik=loglik(est, obs))
    return est, diag


def cmd_estimate(args):
    obs = _load_obs(args.input)
    cfg = {"tol": args.tol, "max_iter": args.max_iter, "force_cs": args.force_cs}
    est, diag = fit(obs, _icm_config(cfg), args.force_cs)
    write_csv(args.out, {"point": est.points, "value": est.values})
    diag_path = Path(str(args.out) + ".diag.jsonl")
    diag_path.write_text(json.dumps(diag, sort_keys=True) + "\n")
    if not diag["satisfied"] and not args.allow_unconverged:
        raise NumericalError(
            f"Fenchel conditions not met (max tail sum {diag['max_tail_sum']:.3g}, "
            f"inner product {diag['inner_product']:.3g}); rerun with --allow-unconverged to keep it"
        )
    return [args.out, diag_path], {**cfg, "solver": diag["solver"]}


def cmd_functionals(args):
    obs = _load_obs(args.input)
    F0 = _dist(args.f0 or DEFAULTS["f0"], "F0")
    cfg = {"tol": args.tol, "max_iter": args.max_iter}
    est, diag = fit(obs, _icm_config(cfg))
    if not diag["satisfied"]:
        raise NumericalError("MLE did not converge")
    if args.density is not None or args.cdf is not None:
        which = "density" if args.density is not None else "cdf"
        t, h = args.density if args.density is not None else args.cdf
        k = KernelSpec(h)
        estimator = kernel_density_estimate if which == "density" else kernel_cdf_estimate
        value = estimator(est, k, t)
        plugin = asymp_variance_kernel(est, t, which)
        theory = asymp_variance_kernel(F0, t, which)
        cfg.update(functional=which, t=t, h=h)
    else:
        value = mean_estimate(est)
        plugin = plugin_variance_mean(est)
        theory = smooth_variance_mean(F0)
        cfg.update(functional="mean")
    cfg["f0"] = F0.spec()
    write_csv(args.out, {"estimate": [value], "plugin_variance": [plugin], "theory_variance": [theory]})
    return [args.out], cfg


def _resolve(args, keys) -> dict:
    """Flags override config-file values override built-in defaults."""
    cfg = {k: DEFAULTS[k] for k in keys if k in DEFAULTS}
    if getattr(args, "config", None):
        filecfg = read_kv(args.config)
        unknown = set(filecfg) - set(keys) - {"seed"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(filecfg)
        if "seed" in filecfg and args.seed_flag is None:
            args.seed = int(filecfg["seed"])
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def cmd_simulate(args):
    cfg = _resolve(args, ["model", "f0", "fe", "n", "replications", "grid", "tol", "max_iter"])
    try:
        for k, typ in (("n", int), ("replications", int), ("max_iter", int), ("tol", float)):
            cfg[k] = typ(cfg[k])
    except ValueError as exc:
        raise UsageError(f"bad config value: {exc}") from None
    cfg.pop("seed", None)
    model = cfg["model"]
    if model not in ("fixed", "mixed"):
        raise UsageError(f"model must be fixed or mixed, got {model!r}")
    F0 = _dist(cfg["f0"], "F0")
    FE = _dist(cfg["fe"], "FE") if model == "mixed" else None
    if model == "fixed":
        cfg.pop("fe", None)
    grid = parse_grid(str(cfg["grid"]))
    sim = SimConfig(model, F0, int(cfg["n"]), int(cfg["replications"]), grid, FE, args.seed,
                    _icm_config(cfg))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vc = simulate_variance_curve(sim, workers=args.threads)
    write_csv(args.out, {
        "t": vc.t,
        "empirical": vc.empirical_scaled_var,
        "theory_conjecture": vc.theory_conjecture,
        "theory_mixed": vc.theory_mixed,
        "failures": np.full(vc.t.size, vc.failures),
    })
    if vc.flagged:
        print(f"warning: {vc.failures} of {sim.replications} replications failed", file=sys.stderr)
    return [args.out], cfg


def cmd_diagnose_rates(args):
    F0 = _dist(args.f0 or DEFAULTS["f0"], "F0")
    try:
        n_values = [int(v) for v in args.n_values.split(",")]
    except ValueError:
        raise UsageError(f"bad --n-values {args.n_values!r}") from None
    cfg = {"tol": args.tol, "max_iter": args.max_iter}
    rd = an_bn_diagnostics(F0, n_values, args.t0, args.t_offset, args.R, args.seed, _icm_config(cfg),
                           workers=args.threads)
    footer = (f"fitted_slope_An={rd.fitted_slope_An:.17g} fitted_slope_Bn={rd.fitted_slope_Bn:.17g} "
              f"skipped={','.join(str(int(s)) for s in rd.skipped)}")
    write_csv(args.out, {"n": rd.n_values, "median_abs_An": rd.median_abs_An,
                         "median_abs_Bn": rd.median_abs_Bn}, footer=footer)
    cfg.update(f0=F0.spec(), n_values=n_values, t0=args.t0, t_offset=args.t_offset, R=args.R)
    return [args.out], cfg


# -- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="unidecon", description="NPMLE for uniform deconvolution")
    p.add_argument("--version", action="version", version=f"unidecon {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True, solver=True):
        sp.add_argument("--out", required=True, help="output CSV path")
        sp.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
        if seed:
            sp.add_argument("--seed", dest="seed_flag", type=int, default=None,
                            help="master seed (default: $UNIDECON_SEED or 0)")
        if solver:
            sp.add_argument("--tol", type=float, default=None, help="Fenchel tolerance")
            sp.add_argument("--max-iter", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1, help="worker processes (results do not depend on it)")

    sp = sub.add_parser("sample", help="draw a sample")
    sp.add_argument("--model", choices=["fixed", "mixed"], default="fixed")
    sp.add_argument("--f0")
    sp.add_argument("--fe")
    sp.add_argument("--n", type=_positive_int, required=True)
    sp.add_argument("--stream", type=int, default=0, help="random stream index under the master seed")
    common(sp, solver=False)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("transform", help="map a fixed-model sample to interval-censored data")
    sp.add_argument("--input", required=True)
    sp.add_argument("--mode", choices=["cs", "icm"], required=True)
    sp.add_argument("--m", type=_positive_int)
    common(sp, seed=False, solver=False)
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("estimate", help="compute the NPMLE")
    sp.add_argument("--input", required=True)
    sp.add_argument("--force-cs", action="store_true", help="use the current-status solver")
    sp.add_argument("--allow-unconverged", action="store_true")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("functionals", help="smooth functionals of the NPMLE")
    sp.add_argument("--input", required=True)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--functional", choices=["mean"], default="mean")
    g.add_argument("--density", nargs=2, type=float, metavar=("T", "H"))
    g.add_argument("--cdf", nargs=2, type=float, metavar=("T", "H"))
    sp.add_argument("--f0", help="distribution for the theoretical variance")
    common(sp, seed=False)
    sp.set_defaults(func=cmd_functionals)

    sp = sub.add_parser("simulate", help="Monte Carlo variance curve")
    sp.add_argument("--config", help="key=value file")
    sp.add_argument("--model", choices=["fixed", "mixed"])
    sp.add_argument("--f0")
    sp.add_argument("--fe")
    sp.add_argument("--n", type=_positive_int)
    sp.add_argument("--replications", type=_positive_int)
    sp.add_argument("--grid", help="a:b:step or comma list (default 0.1:1.9:0.1)")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("diagnose-rates", help="A_n / B_n order diagnostics")
    sp.add_argument("--f0")
    sp.add_argument("--n-values", default="250,500,1000,2000,4000")
    sp.add_argument("--t0", type=float, default=0.5)
    sp.add_argument("--t-offset", type=float, default=1.0)
    sp.add_argument("--R", type=_positive_int, default=200)
    common(sp)
    sp.set_defaults(func=cmd_diagnose_rates)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t_start = time.perf_counter()
    try:
        args.seed = args.seed_flag if getattr(args, "seed_flag", None) is not None else _default_seed()
        for k in ("tol", "max_iter"):
            if hasattr(args, k) and getattr(args, k) is None and args.command != "simulate":
                setattr(args, k, DEFAULTS[k])
        outputs, cfg = args.func(args)
    except UnideconError as exc:
        print(f"unidecon {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    manifest = RunManifest(
        command=args.command,
        argv=argv,
        config=cfg,
        master_seed=args.seed if hasattr(args, "seed_flag") else None,
        version=__version__,
        wall_clock_seconds=round(time.perf_counter() - t_start, 6),
    )
    for path in outputs:
        manifest.add_output(path)
    manifest.write(_manifest_path(args, args.out))
    return 0


if __name__ == "__main__":
    sys.exit(main())
