"""Command-line interface.

Every command writes its data (CSV or JSON) to ``--out`` or stdout and a
JSON run manifest (command, arguments, seed, library versions) to stdout
when ``--out`` is given, otherwise to stderr. Exit status: 0 success,
1 invalid input, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .dynamics import MarketState, ModelParams, simulate
from .errors import NumericalError, ValidationError
from .stability import analyze, phase_portrait, region_map, trace_region_boundaries

SEED_ENV = "HYPEDYN_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw in (None, ""):
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default ${SEED_ENV} or 0)")
    p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")


def _model(p: argparse.ArgumentParser, alpha=None) -> None:
    p.add_argument("--alpha", type=float, required=alpha is None, default=alpha)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--capacity", type=float, default=0.0)


def _params(a) -> ModelParams:
    return ModelParams(alpha=a.alpha, beta=a.beta, gamma=a.gamma, lam=a.lam, capacity=a.capacity)


def _grid(a, prefix: str) -> np.ndarray:
    values = getattr(a, f"{prefix}_values")
    if values:
        return np.array([float(v) for v in values.split(",")])
    n = getattr(a, f"{prefix}_n")
    if n < 1:
        raise ValidationError(f"--{prefix}-n must be at least 1")
    return np.linspace(getattr(a, f"{prefix}_min"), getattr(a, f"{prefix}_max"), n)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, Path):
        return str(x)
    if hasattr(x, "value") and not isinstance(x, (str, int, bool)):
        return x.value
    return x


def _frame_text(frame: pd.DataFrame) -> str:
    buf = io.StringIO()
    frame.to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


# -- commands ------------------------------------------------------------------


def cmd_simulate(a):
    traj = simulate(_params(a), MarketState(a.phi0, a.r0), a.steps, a.noise_std, a.seed)
    frame = pd.DataFrame({"t": np.arange(len(traj)), "phi": traj.phi, "r": traj.ret})
    return _frame_text(frame), {"final_phi": traj.phi[-1], "final_r": traj.ret[-1]}


def cmd_stability(a):
    rep = analyze(_params(a), on_boundary=a.on_boundary)
    body = {
        "steady_states": [{"phi": s.phi, "r": s.ret, "kind": s.kind.value} for s in rep.steady_states],
        "jacobians": [j.as_array().tolist() for j in rep.jacobians],
        "eigenvalues": [[e.x1, e.x2] for e in rep.eigenvalues],
        "classes": [c.value if c else None for c in rep.classes],
        "zero_region": rep.zero_region,
        "nonzero_region": rep.nonzero_region,
        "at_bifurcation": rep.at_bifurcation,
    }
    return json.dumps(_jsonable(body), indent=2) + "\n", {"n_steady_states": len(rep.steady_states)}


def cmd_regions(a):
    alphas, cbetas = _grid(a, "alpha"), _grid(a, "cbeta")
    if a.boundaries:
        pts = trace_region_boundaries(alphas, float(cbetas.max()))
        frame = pd.DataFrame([(p.alpha, p.cbeta, p.state, p.kind) for p in pts],
                             columns=["alpha", "cbeta", "state", "kind"])
    else:
        frame = pd.DataFrame(region_map(alphas, cbetas, beta=a.beta),
                             columns=["alpha", "cbeta", "zero_region", "nonzero_region"])
    return _frame_text(frame), {"rows": len(frame)}


def cmd_phase(a):
    starts = []
    for s in a.start or []:
        r0, p0 = (float(v) for v in s.split(","))
        starts.append(MarketState(p0, r0))
    pp = phase_portrait(_params(a), (a.r_min, a.r_max, a.phi_min, a.phi_max), a.grid_n,
                        starts, steps=a.steps, h=a.h)
    frame = pd.DataFrame({"r": pp.r.ravel(), "phi": pp.phi.ravel(), "dr": pp.dr.ravel(), "dphi": pp.dphi.ravel()})
    summary = {"trajectories": len(pp.trajectories)}
    if a.trajectories_out:
        rows = [(k, i, x[0], x[1]) for k, path in enumerate(pp.trajectories) for i, x in enumerate(path)]
        pd.DataFrame(rows, columns=["trajectory", "step", "r", "phi"]).to_csv(a.trajectories_out, index=False)
        summary["trajectories_out"] = str(a.trajectories_out)
    return _frame_text(frame), summary


def _scan_config(a, noise_std):
    from .scans import ScanConfig

    return ScanConfig(vary=a.vary, grid=tuple(_grid(a, "grid")), params=_params(a), n_init=a.n_init,
                      iters=a.iters, burn_in=a.burn_in, init_r_std=a.init_r_std,
                      noise_std=noise_std, base_seed=a.seed)


def cmd_bifurcate(a):
    from .scans import bifurcation_scan

    pts = bifurcation_scan(_scan_config(a, a.noise_std))
    frame = pd.DataFrame([(p.value, p.run, p.final_phi, p.final_r) for p in pts],
                         columns=["value", "run", "final_phi", "final_r"])
    return _frame_text(frame), {"rows": len(frame)}


def cmd_volscan(a):
    from .scans import volatility_runs, volatility_scan, volatility_threshold

    cfg = _scan_config(a, a.noise_std)
    if a.per_run:
        pts = volatility_runs(cfg)
        frame = pd.DataFrame([(p.value, p.run, p.final_phi, p.final_r, p.std_r) for p in pts],
                             columns=["value", "run", "final_phi", "final_r", "std_r"])
        return _frame_text(frame), {"rows": len(frame)}
    curve = volatility_scan(cfg)
    frame = pd.DataFrame(curve, columns=["value", "mean_std_r"])
    return _frame_text(frame), {"threshold_10x": volatility_threshold(curve)}


def cmd_sir(a):
    from .sir import SirParams, derive_rates, final_size, integrate, outbreak_threshold, SirState

    c, r = a.c, a.r
    if a.tau is not None or a.contact_rate is not None or a.period is not None:
        if None in (a.tau, a.contact_rate, a.period):
            raise ValidationError("--tau, --contact-rate and --period go together")
        c, r = derive_rates(a.tau, a.contact_rate, a.period)
    if c is None or r is None:
        raise ValidationError("give --c and --r, or --tau, --contact-rate and --period")
    params = SirParams(c, r, a.N)
    series = integrate(params, SirState(a.N - a.A0, a.A0, 0.0), dt=a.dt, horizon=a.horizon)
    frame = pd.DataFrame({"t": series.t, "V": series.V, "A": series.A, "B": series.B})
    r0, outbreak = outbreak_threshold(params, a.N - a.A0)
    summary = {"c": c, "r": r, "R0": r0, "outbreak": outbreak}
    if 0 < a.A0 < a.N:
        fs = final_size(params, a.A0)
        summary.update(final_size=fs.value, below_threshold=fs.below_threshold)
    return _frame_text(frame), summary


def _weekly_input(a) -> pd.DataFrame:
    from .panel_io import load_calendar, load_comments, load_market, load_submissions, weekly_aggregate

    if a.weekly:
        path = Path(a.weekly)
        if not path.exists():
            raise ValidationError(f"{path}: no such file")
        return pd.read_csv(path)
    if not a.submissions:
        raise ValidationError("give --weekly, or --submissions (with --market)")
    return weekly_aggregate(
        load_submissions(a.submissions),
        load_market(a.market) if a.market else None,
        load_calendar(a.calendar) if a.calendar else None,
        benchmark_threshold=a.threshold,
        comments=load_comments(a.comments) if getattr(a, "comments", None) else None,
        denominator=a.denominator,
    )


def _records(path, loader):
    from .panel_io import records_frame

    return records_frame(loader(path))


def cmd_aggregate(a):
    frame = _weekly_input(a)
    return _frame_text(frame), {"rows": len(frame), "tickers": int(frame["ticker"].nunique()) if len(frame) else 0}


def cmd_estimate(a):
    from . import estimate
    from .panel_io import load_comments, load_submissions

    if a.model == "contagion":
        fit = estimate.contagion(_weekly_input(a), fe=a.fe, spec=a.spec)
        body = fit.to_dict()
    elif a.model == "impact":
        body = estimate.impact(_weekly_input(a)).to_dict()
    else:
        if not a.submissions:
            raise ValidationError("peers needs --submissions")
        subs = _records(a.submissions, load_submissions)
        com = _records(a.comments, load_comments) if a.comments else None
        body = estimate.peers(subs, com, method=a.method, placebo=not a.no_placebo, seed=a.seed).to_dict()
    return json.dumps(_jsonable(body), indent=2) + "\n", {"model": a.model}


def _parse_counts(text: str) -> dict:
    out = {}
    for item in filter(None, (text or "").split(";")):
        name, _, count = item.partition(":")
        out[name] = int(count)
    return out


def cmd_match(a):
    from .matching import UserProfile, optimal_match, score_matrix, treatment_effects

    prof = pd.read_csv(a.profiles, dtype={"user_id": str}, keep_default_na=False)
    need = {"user_id", "group", "first_active", "last_active", "avg_length", "avg_count", "external_posts", "activity"}
    if need - set(prof.columns):
        raise ValidationError(f"profiles lack columns {sorted(need - set(prof.columns))}")
    profiles = {}
    for row in prof.itertuples(index=False):
        activity = tuple(float(t) for t in filter(None, str(row.activity).split(";")))
        profiles[row.user_id] = (row.group, UserProfile(row.user_id, float(row.first_active), float(row.last_active),
                                                         float(row.avg_length), float(row.avg_count),
                                                         _parse_counts(str(row.external_posts)), activity))
    expo = pd.read_csv(a.exposures, dtype={"user_id": str})
    controls = [p for g, p in profiles.values() if g == "control"]
    rows = []
    for ticker, g in expo.groupby("ticker", sort=True):
        times = g.groupby("user_id")["timestamp_utc"].apply(list).to_dict()
        treated = [profiles[u][1] for u in sorted(times) if u in profiles]
        if not treated or not controls:
            continue
        problem = score_matrix(treated, controls, times)
        result = optimal_match(problem)
        for (t, c), s in zip(result.pairs, result.pair_scores):
            rows.append({"ticker": ticker, "treated": t, "control": c, "score": s,
                         "n_exposures": len(times[t])})
    pairs = pd.DataFrame(rows, columns=["ticker", "treated", "control", "score", "n_exposures"])
    summary = {"pairs": len(pairs)}
    if a.outcomes:
        out = pd.read_csv(a.outcomes, dtype={"user_id": str})
        posted = {(r.user_id, r.ticker): bool(r.posted) for r in out.itertuples(index=False)}
        pairs["treated_posted"] = [posted.get((u, t), False) for u, t in zip(pairs["treated"], pairs["ticker"])]
        pairs["control_posted"] = [posted.get((u, t), False) for u, t in zip(pairs["control"], pairs["ticker"])]
        effects = treatment_effects(pairs)
        if a.effects_out:
            effects.to_csv(a.effects_out, index=False)
            summary["effects_out"] = str(a.effects_out)
        summary["effects"] = effects.to_dict(orient="records")
    return _frame_text(pairs), summary


# -- parser --------------------------------------------------------------------


def _grid_args(p, prefix, lo, hi, n):
    p.add_argument(f"--{prefix}-min", type=float, default=lo)
    p.add_argument(f"--{prefix}-max", type=float, default=hi)
    p.add_argument(f"--{prefix}-n", type=int, default=n)
    p.add_argument(f"--{prefix}-values", default=None, help="comma-separated values (overrides min/max/n)")


def _weekly_args(p):
    p.add_argument("--weekly", help="weekly panel CSV (as written by `aggregate`)")
    p.add_argument("--submissions")
    p.add_argument("--market")
    p.add_argument("--calendar")
    p.add_argument("--comments")
    p.add_argument("--threshold", type=int, default=31, help="benchmark mention threshold")
    p.add_argument("--denominator", choices=["authors", "authors+commenters"], default="authors")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hypedyn", description="Sentiment-return dynamics, contagion and estimation tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="iterate the sentiment-return map")
    _model(p)
    p.add_argument("--phi0", type=float, default=0.0)
    p.add_argument("--r0", type=float, default=0.0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--noise-std", type=float, default=0.0)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stability", help="steady states, eigenvalues and region labels")
    _model(p)
    p.add_argument("--on-boundary", choices=["raise", "unstable"], default="unstable")
    _common(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("regions", help="region labels on an alpha x C*beta grid")
    _grid_args(p, "alpha", 0.05, 2.0, 40)
    _grid_args(p, "cbeta", 0.0, 4.0, 41)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--boundaries", action="store_true", help="emit traced boundary points instead")
    _common(p)
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("phase", help="continualised vector field and RK4 trajectories")
    _model(p)
    p.add_argument("--r-min", type=float, default=-1.0)
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--phi-min", type=float, default=-1.0)
    p.add_argument("--phi-max", type=float, default=1.0)
    p.add_argument("--grid-n", type=int, default=21)
    p.add_argument("--start", action="append", help="trajectory start 'r,phi' (repeatable)")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--trajectories-out", type=Path)
    _common(p)
    p.set_defaults(func=cmd_phase)

    for name, func, noise, helptext in (
        ("bifurcate", cmd_bifurcate, 0.0, "final states over a parameter grid"),
        ("volscan", cmd_volscan, 1e-3, "mean return volatility over a parameter grid"),
    ):
        p = sub.add_parser(name, help=helptext)
        _model(p, alpha=0.7)
        p.add_argument("--vary", choices=["capacity", "alpha"], default="capacity")
        _grid_args(p, "grid", 0.0, 4.0, 41)
        p.add_argument("--n-init", type=int, default=100)
        p.add_argument("--iters", type=int, default=1000)
        p.add_argument("--burn-in", type=int, default=50)
        p.add_argument("--init-r-std", type=float, default=0.5)
        p.add_argument("--noise-std", type=float, default=noise)
        if name == "volscan":
            p.add_argument("--per-run", action="store_true")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("sir", help="integrate the contagion (SIR) model")
    p.add_argument("--c", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--contact-rate", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--N", type=float, required=True)
    p.add_argument("--A0", type=float, required=True)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--horizon", type=float, default=100.0)
    _common(p)
    p.set_defaults(func=cmd_sir)

    p = sub.add_parser("aggregate", help="weekly ticker panel from submissions and market CSVs")
    _weekly_args(p)
    _common(p)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("estimate", help="fit the contagion, market-impact or peer-effect models")
    p.add_argument("model", choices=["contagion", "impact", "peers"])
    _weekly_args(p)
    p.add_argument("--fe", choices=["none", "ticker", "week"], default="none")
    p.add_argument("--spec", choices=["returns", "sentiment"], default="returns")
    p.add_argument("--method", choices=["frequent", "network"], default="frequent")
    p.add_argument("--no-placebo", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("match", help="match treated users to controls and estimate effects")
    p.add_argument("--profiles", required=True)
    p.add_argument("--exposures", required=True)
    p.add_argument("--outcomes")
    p.add_argument("--effects-out", type=Path)
    _common(p)
    p.set_defaults(func=cmd_match)
    return parser


def _manifest(args, summary) -> dict:
    inputs = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return _jsonable({
        "command": args.command,
        "inputs": inputs,
        "seed": args.seed,
        "versions": {
            "hypedyn": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "summary": summary,
    })


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.seed is None:
            args.seed = _default_seed()
        text, summary = args.func(args)
        manifest = json.dumps(_manifest(args, summary), indent=2, sort_keys=True)
        if args.out:
            Path(args.out).write_text(text)
            print(manifest)
        else:
            sys.stdout.write(text)
            print(manifest, file=sys.stderr)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
