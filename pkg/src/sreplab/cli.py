"""Command-line entry point: ``sreplab <subcommand> [options]``.

Each subcommand writes ``report.json`` (verdicts and run manifest) and
``curves.csv`` (one row per level) into ``--out`` (default: ``$SREPLAB_OUT``
or ``./sreplab-out``).  Exit status: 0 when every verdict passes, 2 when a
verdict fails, 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
SUBCOMMANDS = ("constants", "simulate", "perpetuity", "truncmoment", "wlln", "clt", "fclt", "covprobe",
               "slowvary", "selftest")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _load_json(path: str | None, what: str) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} file {path} is not valid JSON: {exc}") from exc


def _resolve_config(args) -> dict:
    cfg = _load_json(getattr(args, "config", None), "config")
    law_file = getattr(args, "law", None)
    if law_file is not None:
        law = _load_json(law_file, "law")
        cfg["law"] = law.get("law", law)
    for key in ("reps",):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["seed"] = _seed(args, cfg)
    return cfg


def _seed(args, cfg) -> int:
    from .rng import parse_seed

    raw = args.seed if getattr(args, "seed", None) is not None else cfg.get("seed", 12345)
    try:
        return parse_seed(raw)
    except ValueError as exc:
        raise UsageError(f"bad seed {raw!r}") from exc


def _require(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise UsageError(f"configuration is missing {', '.join(missing)}")


def _law(cfg):
    from .laws import LawError, law_from_dict

    _require(cfg, "law")
    try:
        return law_from_dict(cfg["law"])
    except (LawError, TypeError, ValueError) as exc:
        raise UsageError(f"bad law specification: {exc}") from exc


def _noise(cfg):
    from .laws import noise_from_dict

    return noise_from_dict(cfg.get("noise", {"variant": "standard_normal"}))


def _lawY(spec: dict):
    from .slowvary import PositiveLawY, parse_ell

    v = spec.get("variant")
    if v == "pareto_one":
        return PositiveLawY.pareto_one()
    if v == "st_petersburg":
        return PositiveLawY.st_petersburg()
    if v == "bounded":
        return PositiveLawY.bounded(spec.get("points", spec.get("value")))
    if v == "sampled":
        return PositiveLawY.sampled(np.loadtxt(spec["source"], ndmin=1))
    if v == "analytic":
        return PositiveLawY.analytic(parse_ell(spec["ell"]))
    raise UsageError(f"unknown Y law variant {v!r}")


def _grid(cfg, name):
    """A grid given as a list or as {"log2": [...]} / {"log": [...]} / {"geom": [lo, hi, k]}."""
    g = cfg[name]
    if isinstance(g, dict):
        if "log2" in g:
            return [2.0**float(k) for k in g["log2"]]
        if "log" in g:
            return [math.exp(float(k)) for k in g["log"]]
        if "linspace_log" in g:
            lo, hi, k = g["linspace_log"]
            return list(np.exp(np.linspace(lo, hi, int(k))))
        if "geom" in g:
            lo, hi, k = g["geom"]
            return list(np.geomspace(lo, hi, int(k)))
        raise UsageError(f"unrecognized grid form for {name}")
    return [float(x) for x in g]


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("SREPLAB_OUT") or "sreplab-out")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def _curves_text(rows: list[dict]) -> str:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in cols])
    return buf.getvalue()


def _write(out: Path, report: dict, rows: list[dict]) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n",
                                         encoding="utf-8")
        (out / "curves.csv").write_text(_curves_text(rows), encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write output to {out}: {exc}") from exc


def _digest_rows(payload) -> str:
    import hashlib

    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


# ------------------------------------------------------------ subcommands


def cmd_constants(args, cfg):
    from .analytics import (InfiniteMomentError, c_lambda_z, d_constant, fit_profile, kesten_constant,
                            tilted_log_moment)
    from .laws import GarchLaw, check_conditions
    from .rng import make_stream

    law = _law(cfg)
    cond = check_conditions(law, cfg.get("kappa"))
    row = {"variant": law.variant, **{k: v for k, v in cond.as_dict().items() if k != "notes"}}
    if cond.kappa is None:
        return [row], [], {"conditions": cond.as_dict()}
    kappa = cond.kappa
    tlm = tilted_log_moment(law, kappa)
    row.update(m=tlm.value, m_plus=tlm.detail["plus"], m_minus=tlm.detail["minus"])
    D = d_constant(law, kappa, make_stream(cfg["seed"]), int(cfg.get("reps", 100_000)))
    row.update(D=D.value, D_se=D.std_error)
    prof = fit_profile(law, kappa, np.geomspace(1, 1e4, 41))
    row["branch"] = prof.branch
    if prof.branch == "finite":
        kc = kesten_constant(D.value, kappa, tlm.value, cond.nonarithmetic_logA)
        row.update(c_prime=kc.c_prime, tail_constant=kc.tail_constant, tail_note=kc.reason)
    else:
        row["rho"] = prof.rho
    if isinstance(law, GarchLaw) and abs(law.lam + law.delta - 1) < 1e-12:
        try:
            row["C_lambda_Z"] = c_lambda_z(law.noise, law.lam).value
        except InfiniteMomentError as exc:
            row["C_lambda_Z"] = None
            row["C_note"] = str(exc)
    if args.format == "json":
        print(json.dumps(row, sort_keys=True, indent=2, default=str))
    else:
        sys.stdout.write(_curves_text([row]))
    return [row], [], {"conditions": cond.as_dict()}


def cmd_simulate(args, cfg):
    from .laws import GarchLaw
    from .rng import make_stream
    from .sre import PathConfig, forward_path, garch_path

    law = _law(cfg)
    n = int(cfg.get("n", 1000))
    pc = PathConfig(n, cfg.get("u0_mode", "stationary"), float(cfg.get("u0_value", 0.0)), record="full")
    s = make_stream(cfg["seed"])
    if isinstance(law, GarchLaw):
        ps = garch_path(s, law.beta, law.lam, law.delta, law.noise, pc)
        rows = [{"j": j, "X_j": float(ps.path[j - 1]), "sigma2_j": float(ps.sigma2[j])} for j in range(1, n + 1)]
    else:
        ps = forward_path(s, law, pc, float(cfg.get("kappa", 1.0)))
        rows = [{"j": j, "U_j": float(u)} for j, u in enumerate(ps.path)]
    from .limitlab import Verdict

    v = [Verdict("no_flags", "flagged paths == 0", 0, int(ps.flagged), not ps.flagged)]
    extras = {"stationary": ps.stationary, "init": ps.truncation_diagnostics}
    return rows, v, extras


def cmd_perpetuity(args, cfg):
    from .limitlab import Verdict
    from .rng import make_stream
    from .sre import perpetuity_samples

    law = _law(cfg)
    reps = int(cfg.get("reps", 100_000))
    pb = perpetuity_samples(make_stream(cfg["seed"]), law, reps, float(cfg.get("tol", 1e-12)),
                            int(cfg.get("max_depth", 10**6)))
    qs = [0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999]
    rows = [{"quantile": q, "value": float(v)} for q, v in zip(qs, np.quantile(pb.values, qs))]
    v = [Verdict("no_flags", "flagged samples == 0", 0, pb.flagged, pb.flagged == 0)]
    extras = {"stops": pb.stop_counts(), "max_depth_used": int(pb.depth.max()),
              "mean_log_value": float(np.mean(np.log(pb.values[pb.values > 0])))}
    return rows, v, extras


def _run_report(rep):
    return rep.levels, rep.verdicts, rep.extras, rep


def cmd_truncmoment(args, cfg):
    from .limitlab import truncated_moment_experiment
    from .rng import make_stream

    law = _law(cfg)
    _require(cfg, "t_grid")
    kappa = cfg.get("kappa")
    if kappa is None:
        from .analytics import solve_kappa

        kappa = solve_kappa(law)
    exact = None
    if cfg.get("exact") == "three_point_garch":
        exact = lambda t: (lambda M: M - 1 + 2.0**-M)(math.floor(math.log2(t + 1)))
    band = cfg.get("ratio_band")
    rep = truncated_moment_experiment(
        law, float(kappa), _grid(cfg, "t_grid"), int(cfg.get("reps", 10**6)), make_stream(cfg["seed"]),
        method=cfg.get("method", "direct"), exact=exact, d_reps=int(cfg.get("d_reps", 100_000)),
        ratio_band=tuple(band) if band else None, slope_target=cfg.get("slope_target"),
        slope_tol=float(cfg.get("slope_tol", 0.1)), slope_window=cfg.get("slope_window", "full"),
        horizon_cap=int(cfg.get("horizon_cap", 1000)), trend=bool(cfg.get("trend", True)),
        scenario=cfg.get("scenario", "truncmoment"),
    )
    return _run_report(rep)


def cmd_wlln(args, cfg):
    from .limitlab import IIDSource, SRESource, wlln_experiment
    from .rng import make_stream

    _require(cfg, "n_grid")
    src = cfg.get("source", "sre")
    if src == "iid":
        _require(cfg, "lawY")
        source = IIDSource(_lawY(cfg["lawY"]), cfg.get("normalizer", "ell"))
    else:
        source = SRESource(_law(cfg), float(cfg.get("kappa", 1.0)))
    rep = wlln_experiment(source, [int(x) for x in _grid(cfg, "n_grid")], int(cfg.get("reps", 200)),
                          make_stream(cfg["seed"]), band=float(cfg.get("band", 0.15)),
                          truncation_check=bool(cfg.get("truncation_check", False)),
                          scenario=cfg.get("scenario", "wlln"))
    return _run_report(rep)


def _garch_params(cfg):
    _require(cfg, "beta", "lambda", "delta")
    return float(cfg["beta"]), float(cfg["lambda"]), float(cfg["delta"]), _noise(cfg)


def cmd_clt(args, cfg):
    from .limitlab import clt_experiment
    from .rng import make_stream

    _require(cfg, "n_grid")
    b, l, d, z = _garch_params(cfg)
    rep = clt_experiment(b, l, d, z, [int(x) for x in _grid(cfg, "n_grid")], int(cfg.get("reps", 1000)),
                         make_stream(cfg["seed"]), scale_tol=float(cfg.get("scale_tol", 0.15)),
                         var_tol=float(cfg.get("var_tol", 0.05)), lindeberg=bool(cfg.get("lindeberg", False)),
                         scenario=cfg.get("scenario", "clt"))
    return _run_report(rep)


def cmd_fclt(args, cfg):
    from .limitlab import fclt_experiment
    from .rng import make_stream

    _require(cfg, "n", "time_grid")
    b, l, d, z = _garch_params(cfg)
    rep = fclt_experiment(b, l, d, z, int(cfg["n"]), [float(t) for t in cfg["time_grid"]],
                          int(cfg.get("reps", 1000)), make_stream(cfg["seed"]),
                          scale_tol=float(cfg.get("scale_tol", 0.15)), corr_tol=float(cfg.get("corr_tol", 0.1)),
                          scenario=cfg.get("scenario", "fclt"))
    return _run_report(rep)


def cmd_covprobe(args, cfg):
    from .limitlab import covariance_decay_probe
    from .rng import make_stream

    _require(cfg, "h", "max_lag")
    source = _lawY(cfg["lawY"]) if cfg.get("source") == "iid" else _law(cfg)
    rep = covariance_decay_probe(source, float(cfg.get("kappa", 1.0)), float(cfg["h"]), int(cfg["max_lag"]),
                                 int(cfg.get("reps", 100_000)), make_stream(cfg["seed"]), h2=cfg.get("h2"),
                                 eta_max=cfg.get("eta_max"), scenario=cfg.get("scenario", "covprobe"))
    return _run_report(rep)


def cmd_slowvary(args, cfg):
    from .limitlab import Verdict
    from .slowvary import PositiveLawY, parse_ell, probe_condition, tail_ratio

    try:
        ell = parse_ell(args.ell)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grid = np.geomspace(args.grid_min, args.grid_max, args.grid_points)
    if args.probe in ("2a", "2b"):
        rep = probe_condition(ell, args.probe, grid, tolerance=args.tolerance)
        rows = rep.rows()
        extras = {"ell": ell.name, "probe": args.probe, "verdict": rep.verdict}
        v = [Verdict(f"probe_{args.probe}", "trend of the last 3 ratios", args.tolerance, rep.verdict, True)]
        if args.expect:
            v.append(Verdict("expected_verdict", "verdict == expected", args.expect, rep.verdict,
                             rep.verdict == args.expect))
    else:
        law = PositiveLawY.analytic(ell)
        rows = [{"x": float(x), "tail_ratio": tail_ratio(law, float(x))} for x in grid]
        r = [row["tail_ratio"] for row in rows]
        extras = {"ell": ell.name, "probe": "ap5"}
        v = [Verdict("tail_ratio_decreasing", "tail ratio decreasing along the grid", "monotone", r[-1],
                     bool(all(a >= b for a, b in zip(r, r[1:]))))]
    sys.stdout.write(_curves_text(rows))
    return rows, v, extras


def cmd_selftest(args, cfg):
    from .selftest import run_selftest

    results = run_selftest()
    from .limitlab import Verdict

    v = [Verdict(name, "elementary example", None, detail or "ok", ok) for name, ok, detail in results]
    rows = [{"check": name, "passed": ok} for name, ok, _ in results]
    return rows, v, {}


_COMMANDS = {
    "constants": cmd_constants,
    "simulate": cmd_simulate,
    "perpetuity": cmd_perpetuity,
    "truncmoment": cmd_truncmoment,
    "wlln": cmd_wlln,
    "clt": cmd_clt,
    "fclt": cmd_fclt,
    "covprobe": cmd_covprobe,
    "slowvary": cmd_slowvary,
    "selftest": cmd_selftest,
}


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sreplab", description="Perpetuity / SRE / critical GARCH laboratory")
    p.add_argument("--version", action="version", version=f"sreplab {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")

    def common(sp, law=False, config=True):
        if config:
            sp.add_argument("--config", help="experiment configuration (JSON)")
        if law:
            sp.add_argument("--law", help="law specification (JSON)")
        sp.add_argument("--seed", help="master seed, decimal or 0x-hex")
        sp.add_argument("--reps", type=int, help="replications (overrides the config)")
        sp.add_argument("--threads", type=int, help="worker threads (default: available cores)")
        sp.add_argument("--out", help="output directory (default: $SREPLAB_OUT or ./sreplab-out)")

    sp = sub.add_parser("constants", help="kappa, m, D, c', C_{lambda,Z} for a law")
    common(sp, law=True)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp = sub.add_parser("simulate", help="one recorded path")
    common(sp, law=True)
    sp = sub.add_parser("perpetuity", help="perpetuity sampler quantiles and stop diagnostics")
    common(sp, law=True)
    for name, h in (("truncmoment", "truncated moments E U^kappa 1{U<=t}"), ("wlln", "weak law of large numbers"),
                    ("clt", "CLT for GARCH partial sums"), ("fclt", "functional CLT snapshots"),
                    ("covprobe", "covariance decay of truncated U_j^kappa")):
        common(sub.add_parser(name, help=h), law=name not in ("clt", "fclt"))
    sp = sub.add_parser("slowvary", help="probes for slowly varying functions")
    common(sp, config=False)
    sp.add_argument("--ell", default="log", help="const[:c] | log | ap4:beta | path to x,l(x) table")
    sp.add_argument("--probe", choices=("2a", "2b", "ap5"), default="2a")
    sp.add_argument("--grid-min", type=float, default=10.0)
    sp.add_argument("--grid-max", type=float, default=1e300)
    sp.add_argument("--grid-points", type=int, default=60)
    sp.add_argument("--tolerance", type=float, default=0.02)
    sp.add_argument("--expect", choices=("converges_to_1", "diverges", "inconclusive"))
    sp = sub.add_parser("selftest", help="quick checks of elementary examples")
    common(sp, config=False)
    return p


def _set_threads(n: int | None) -> int:
    import numba

    cap = numba.config.NUMBA_NUM_THREADS
    if n is None:
        n = min(os.cpu_count() or 1, cap)
    if n < 1:
        raise UsageError("--threads must be >= 1")
    if n > cap:
        raise UsageError(f"--threads {n} exceeds the pool size {cap} (set NUMBA_NUM_THREADS)")
    numba.set_num_threads(n)
    return n


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("sreplab: error: a subcommand is required", file=sys.stderr)
        return EXIT_ERROR
    t0 = time.time()
    try:
        cfg = _resolve_config(args)
        threads = _set_threads(args.threads)
        out = _out_dir(args)
        result = _COMMANDS[args.command](args, cfg)
        rows, verdicts, extras = result[0], result[1], result[2]
        exp_report = result[3] if len(result) > 3 else None
        verdict_dicts = [v.as_dict() for v in verdicts]
        digest = exp_report.digest if exp_report is not None else _digest_rows(
            {"rows": rows, "verdicts": verdict_dicts, "extras": extras})
        passed = all(v["passed"] for v in verdict_dicts)
        report = {
            "passed": passed,
            "verdicts": verdict_dicts,
            "extras": extras,
            "manifest": {
                "tool_version": __version__,
                "subcommand": args.command,
                "config": cfg,
                "seed": cfg["seed"],
                "threads": threads,
                "wall_time_s": round(time.time() - t0, 3),
                "digest": digest,
            },
        }
        if exp_report is not None:
            report["scenario"] = exp_report.scenario
            report["levels"] = exp_report.levels
        _write(out, report, rows)
    except UsageError as exc:
        print(f"sreplab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"sreplab: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for v in verdict_dicts:
        print(f"{'PASS' if v['passed'] else 'FAIL'} {v['name']}: {v['value']}", file=sys.stderr)
    print(f"digest {digest}  report {out / 'report.json'}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
