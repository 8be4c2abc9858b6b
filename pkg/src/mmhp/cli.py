"""Command-line interface binding simulation, estimation, decoding and analytics."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import io
from .decode import OnlineDecoder, viterbi
from .em import FitConfig, fit, fit_mmpp, model_selection
from .errors import MMHPError
from .gof import qq_export, residuals
from .model import EventSequence
from .simulate import simulate_mmhp_continuous, simulate_mmhp_delta
from .trades import (build_detection_series, day_window_us, imbalance_at_transitions,
                     ingest_trades, price_response, read_lob_snapshots,
                     seasonality_profile)


def _fit_config(args, delta: float) -> FitConfig:
    kwargs = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            kwargs.update(json.load(fh))
    kwargs.setdefault("seed", getattr(args, "seed", None))
    kwargs.pop("delta", None)
    return FitConfig(delta=delta, **kwargs)


def _cmd_simulate(args) -> int:
    params, _ = io.load_model(args.model)
    sim_fn = simulate_mmhp_continuous if args.continuous else simulate_mmhp_delta
    result = sim_fn(params, n_events=args.events, horizon=args.horizon, seed=args.seed)
    io.write_events(result.events, args.out)
    if args.hidden:
        io.write_hidden_path(result.hidden_times, result.hidden_states, args.hidden)
    print(f"simulated {result.events.K} events over [0, {result.events.horizon:g}] "
          f"-> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    events = io.read_events(args.events)
    config = _fit_config(args, args.delta)
    result = fit_mmpp(events, args.M, config) if args.mmpp else fit(events, args.M, config)
    meta = {
        "fitted_loglik": result.loglik,
        "aic": result.aic,
        "bic": result.bic,
        "n_params": result.n_params,
        "n_steps": result.n_steps,
        "converged": result.converged,
        "model": "mmpp" if result.mmpp else "mmhp",
        "label_order": "ascending alpha, mu breaks ties",
    }
    io.save_model(result.params, args.out, meta=meta)
    print(f"loglik={result.loglik:.6f} aic={result.aic:.3f} bic={result.bic:.3f} "
          f"steps={result.n_steps} converged={result.converged}")
    print(f"mu={result.params.mu.tolist()} alpha={result.params.alpha.tolist()} "
          f"beta={result.params.beta.tolist()}")
    return 0


def _cmd_decode(args) -> int:
    params, _ = io.load_model(args.model)
    events = io.read_events(args.events)
    trace = viterbi(params, events)
    io.write_states(events.times, trace.states, args.out)
    occ = np.bincount(trace.states, minlength=params.M) / events.K
    print(f"decoded {events.K} events; state shares {np.round(occ, 4).tolist()}")
    return 0


def _cmd_stream(args) -> int:
    params, _ = io.load_model(args.model)
    decoder = OnlineDecoder(params)
    out = sys.stdout
    def emit(t):
        scores = ",".join(repr(float(v)) for v in decoder.log_eta)
        out.write(f"{t!r},{decoder.state + 1},{scores}\n")
    for line in sys.stdin:
        line = line.strip()
        if not line or line == "time_s":
            continue
        t = float(line)
        if args.tick:
            next_tick = (np.floor(decoder.t / args.tick) + 1) * args.tick
            while next_tick < t:
                decoder.advance(float(next_tick))
                emit(float(next_tick))
                next_tick += args.tick
        decoder.observe_event(t)
        emit(t)
    return 0


def _cmd_gof(args) -> int:
    params, _ = io.load_model(args.model)
    events = io.read_events(args.events)
    report = residuals(params, events)
    io.write_json({"n": events.K, "ks_statistic": report.ks_statistic,
                   "ks_pvalue": report.ks_pvalue, "loglik": report.loglik,
                   "tau_mean": float(report.tau.mean())}, args.out)
    if args.qq:
        qq_export(report, args.qq)
    print(f"KS={report.ks_statistic:.5f} p={report.ks_pvalue:.5f} on {events.K} residuals")
    return 0


def _cmd_select(args) -> int:
    events = io.read_events(args.events)
    M_grid = [int(v) for v in args.M_grid.split(",")]
    delta_grid = [float(v) for v in args.delta_grid.split(",")]
    config = _fit_config(args, delta_grid[0])
    rows = model_selection(events, M_grid, delta_grid, include_mmpp=args.mmpp,
                           config=config, n_jobs=args.jobs)
    io.write_ranking(rows, args.out)
    for r in sorted(rows, key=lambda r: r["rank"]):
        tag = f"delta={r['delta']:g}" if r["delta"] is not None else "mmpp"
        print(f"rank {r['rank']:2d}: M={r['M']} {tag:<12} aic={r['aic']:.3f}")
    return 0


def _cmd_analyze(args) -> int:
    trades = ingest_trades(args.trades)
    window = day_window_us(trades, args.window)
    series = build_detection_series(trades, args.side, window)
    if series.K == 0:
        print("warning: empty detection series", file=sys.stderr)
        io.write_json({"side": series.side, "n_events": 0,
                       "n_perturbed": series.n_perturbed}, args.out)
        return 0
    doc = {
        "side": series.side,
        "window_start_us": series.window_start_us,
        "window_end_us": series.window_end_us,
        "n_trades": len(trades),
        "n_events": series.K,
        "n_perturbed": series.n_perturbed,
    }
    intraday, weekday = seasonality_profile(trades)
    doc["seasonality"] = {
        "intraday": {str(k): v for k, v in intraday.items()},
        "weekday": {str(k): v for k, v in weekday.items()},
    }
    if args.model:
        params, _ = io.load_model(args.model)
        events = EventSequence(series.times)
        trace = viterbi(params, events)
        occupancy = np.bincount(trace.states, minlength=params.M) / series.K
        doc["decoded"] = {
            "state_event_share": occupancy.tolist(),
            "burst_state": params.M,  # highest label after canonicalization
            "burst_events": int((trace.states == params.M - 1).sum()),
        }
        if args.lob:
            snapshots = read_lob_snapshots(args.lob)
            groups, dropped = imbalance_at_transitions(snapshots, series, trace.states)
            doc["imbalance_at_transitions"] = {
                str(s + 1): {"mean": float(np.mean(v)), "n": len(v)}
                for s, v in sorted(groups.items())
            }
            doc["imbalance_dropped_stale"] = dropped
            mid_t, mid_p = _mid_changes(snapshots, series)
            table = price_response(mid_t, mid_p, series, trace.states,
                                   horizons=args.horizons)
            doc["price_response_bp"] = {
                f"h={h},state={s + 1}": {"mean": mean, "ci95": ci, "n": n,
                                         "low_support": low}
                for (h, s), (mean, ci, n, low) in sorted(table.items())
            }
    io.write_json(doc, args.out)
    print(f"analyzed {series.K} zero-return {series.side} events -> {args.out}")
    return 0


def _mid_changes(snapshots, series):
    """Mid-price change times (seconds, series clock) and the new mid values."""
    times, mids = [], []
    last = None
    for s in snapshots:
        mid = 0.5 * (s.bid + s.ask)
        if last is None or mid != last:
            times.append((s.timestamp_us - series.window_start_us) / 1e6)
            mids.append(mid)
            last = mid
    return np.asarray(times), np.asarray(mids)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmhp",
                                     description="Markov-modulated Hawkes toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample one path of the model")
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--events", type=int)
    group.add_argument("--horizon", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden")
    p.add_argument("--continuous", action="store_true",
                   help="simulate the continuous-kernel limit by thinning")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="EM estimation on an event file")
    p.add_argument("--events", required=True)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--config", help="JSON with FitConfig overrides")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--mmpp", action="store_true", help="fit the zero-excitation benchmark")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("decode", help="most likely hidden states at event times")
    p.add_argument("--model", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("stream", help="online decoding of an event feed on stdin")
    p.add_argument("--model", required=True)
    p.add_argument("--tick", type=float, default=None,
                   help="also advance the decoder on this wall-clock grid")
    p.set_defaults(func=_cmd_stream)

    p = sub.add_parser("gof", help="residual analysis against a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--qq", help="also write QQ pairs as CSV")
    p.set_defaults(func=_cmd_gof)

    p = sub.add_parser("select", help="AIC ranking over an (M, delta) grid")
    p.add_argument("--events", required=True)
    p.add_argument("--M-grid", dest="M_grid", required=True)
    p.add_argument("--delta-grid", dest="delta_grid", required=True)
    p.add_argument("--mmpp", action="store_true", help="include MMPP benchmarks")
    p.add_argument("--config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("analyze", help="trade-tape detection pipeline")
    p.add_argument("--trades", required=True)
    p.add_argument("--side", required=True, choices=["bid", "ask"])
    p.add_argument("--window", default="05:00-12:00")
    p.add_argument("--lob")
    p.add_argument("--model")
    p.add_argument("--horizons", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MMHPError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
