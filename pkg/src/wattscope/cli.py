"""Command-line front end.

Exit codes: 0 success, 1 domain error (printed as module.ErrorName on
stderr), 2 usage error. Usage errors are caught before anything touches
the filesystem; all outputs land under --out-dir.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from . import characterize as _char
from . import disagg as _disagg
from . import eval as _eval
from . import monitor as _monitor
from . import nn as _nn
from . import trace as _trace
from .errors import WattscopeError
from .library import ModelKey, ModelLibrary


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap-w", type=float, default=_trace.DEFAULT_CAP_W)
    p.add_argument("--interval-s", type=int, default=_trace.DEFAULT_INTERVAL_S)
    p.add_argument("--out-dir", default="out")
    p.add_argument(
        "--config-file",
        default=None,
        help="JSON object of flag defaults; explicit flags still win",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wattscope",
        description="Disaggregate server aggregate power into per-job estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate a synthetic server trace")
    _common_flags(p)
    p.add_argument("--n-samples", type=int, default=2592, help="samples per series")
    p.add_argument("--server-id", default="server0")
    p.add_argument(
        "--spec-json",
        default=None,
        help="JSON list of {job_id,cov,period,mean_w,score}; default: 5-job class mix",
    )

    p = sub.add_parser("characterize", help="profile every job in a trace directory")
    _common_flags(p)
    p.add_argument("--trace", required=True, help="directory from `synthesize`")

    p = sub.add_parser("train", help="train a sliding-window model for one job")
    _common_flags(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--job", required=True)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--config", choices=("desk", "paper"), default="desk")
    p.add_argument("--library", default=None, help="also store the model here")

    p = sub.add_parser("disaggregate", help="estimate per-job power from an aggregate")
    _common_flags(p)
    p.add_argument("--aggregate", required=True, help="PowerCsv file with the meter series")
    p.add_argument("--jobs", required=True, help="comma-separated job ids")
    p.add_argument("--library", required=True)
    p.add_argument("--reconcile", action="store_true")
    p.add_argument("--resample", type=int, default=1)

    p = sub.add_parser("evaluate", help="run a seeded experiment scenario")
    _common_flags(p)
    p.add_argument("--scenario", required=True, choices=_eval.SCENARIOS)
    p.add_argument("--train-samples", type=int, default=2016)
    p.add_argument("--test-samples", type=int, default=576)

    p = sub.add_parser("monitor", help="replay a trace through the drift monitor")
    _common_flags(p)
    p.add_argument("--aggregate", required=True, help="PowerCsv file with the meter series")
    p.add_argument("--inferred", required=True, help="directory of per-job PowerCsv files")
    p.add_argument("--threshold", type=float, default=_monitor.DEFAULT_THRESHOLD_NMAE)
    p.add_argument("--persistence", type=int, default=_monitor.DEFAULT_PERSISTENCE)
    return parser


def _find_config_file(argv: List[str]) -> Optional[str]:
    # pulled out by hand: file values must land in the parser as defaults
    # before the real parse so explicit flags keep precedence
    for i, tok in enumerate(argv):
        if tok == "--config-file" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config-file="):
            return tok.split("=", 1)[1]
    return None


def _flag_actions(parser: argparse.ArgumentParser) -> dict:
    dests = {}
    stack = [parser]
    while stack:
        p = stack.pop()
        for a in p._actions:
            if isinstance(a, argparse._SubParsersAction):
                stack.extend(a.choices.values())
            elif a.option_strings and a.dest not in ("help", "config_file"):
                dests.setdefault(a.dest, []).append(a)
    return dests


def _apply_config_file(parser: argparse.ArgumentParser, path: str) -> None:
    """Install file values as defaults: flags > config file > built-ins."""
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise ValueError("config file must be a JSON object of flag values")
    known = _flag_actions(parser)
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ValueError(f"unknown config key {key!r}")
        act = known[dest][0]
        coerced = act.type(value) if act.type and isinstance(value, str) else value
        # subparsers parse into a fresh namespace, so parser-level
        # set_defaults loses to their own defaults; patch the actions
        for a in known[dest]:
            a.default = coerced
            a.required = False  # the file satisfies it


def _read_power_series(path: str) -> _trace.JobSeries:
    with open(path) as f:
        jobs = _trace.parse_job_trace(f.read(), _trace.TraceFormat.PowerCsv)
    return jobs[0]


def _cmd_synthesize(args) -> int:
    if args.spec_json:
        with open(args.spec_json) as f:
            entries = json.load(f)
    else:
        entries = [
            {"job_id": j, "cov": c, "period": p, "mean_w": m, "score": s}
            for j, c, p, m, s in _eval._TABLE1_JOBS
        ]
    jobs = []
    for i, e in enumerate(entries):
        spec = _trace.SyntheticJobSpec(
            target_cov=e.get("cov", 0.0),
            period_samples=e.get("period"),
            period_score_target=e.get("score", 0.8),
            mean_power_w=e.get("mean_w", 50.0),
            noise_seed=args.seed * 1000 + i,
        )
        job = _trace.generate_synthetic_job(
            spec, args.n_samples, cap=args.cap_w, interval_s=args.interval_s
        )
        job.job_id = e.get("job_id", f"job{i}")
        jobs.append(job)
    server = _trace.synthesize_server(jobs, cap=args.cap_w, server_id=args.server_id)
    out = os.path.join(args.out_dir, args.server_id)
    _trace.save_server_trace(server, out)
    print(f"wrote {len(jobs)} jobs + aggregate to {out}")
    return 0


def _profile_record(name: str, series, cap: float) -> dict:
    prof = _char.profile(series, cap=cap)
    return {
        "job_id": name,
        "cov": None if prof.cov == float("inf") else prof.cov,
        "intensity_w": prof.intensity_w,
        "dominant_period": prof.dominant_period,
        "dominant_score": prof.dominant_score,
        "variability": prof.classes.variability.value,
        "regularity": prof.classes.regularity.value,
        "intensity": prof.classes.intensity.value,
    }


def _cmd_characterize(args) -> int:
    server = _trace.load_server_trace(args.trace)
    records = [_profile_record(j.job_id, j.power_w, args.cap_w) for j in server.jobs]
    records.append(_profile_record("aggregate", server.aggregate_w, args.cap_w))
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "profiles.json"), "w") as f:
        json.dump(records, f, indent=2, sort_keys=True)
    for r in records:
        print(json.dumps(r, sort_keys=True))
    return 0


def _cmd_train(args) -> int:
    server = _trace.load_server_trace(args.trace)
    job = server.job(args.job)
    train_T = max(int(server.T * args.train_frac), 1)
    cfg = (
        _nn.desk_config(seed=args.seed)
        if args.config == "desk"
        else _nn.NetworkConfig(seed=args.seed)
    )
    model = _nn.train(
        cfg, [(server.aggregate_w[:train_T], job.power_w[:train_T])], cap=args.cap_w
    )
    model_dir = os.path.join(args.out_dir, "models", args.job)
    _nn.save_model(model, model_dir)
    print(f"trained {args.job} on {train_T} samples; final loss {model.epoch_losses[-1]:.6f}")
    if args.library:
        prof = _char.profile(job.power_w[:train_T], cap=args.cap_w)
        key = ModelKey(
            variability=prof.classes.variability,
            regularity=prof.classes.regularity,
            intensity=prof.classes.intensity,
            n_background=len(server.jobs) - 1,
            model_type="SlidingWindow",
            job_tag=args.job,
        )
        stored = ModelLibrary(args.library).store(model, key, overwrite=True)
        print(f"stored as {stored} in {args.library}")
    print(f"wrote model to {model_dir}")
    return 0


def _cmd_disaggregate(args) -> int:
    agg = _read_power_series(args.aggregate)
    job_ids = [j for j in args.jobs.split(",") if j]
    result = _disagg.disaggregate(
        agg.power_w,
        job_ids,
        ModelLibrary(args.library),
        reconcile=args.reconcile,
        resample_factor=args.resample,
    )
    out = os.path.join(args.out_dir, "disagg")
    os.makedirs(out, exist_ok=True)
    interval = agg.sampling_interval_s * args.resample
    for job_id, series in result.per_job_w.items():
        with open(os.path.join(out, f"{job_id}.csv"), "w") as f:
            f.write(_trace._power_csv_text(job_id, series, interval))
    summary = {
        "reconciled": result.reconciled,
        "model_keys_used": [k.to_dict() for k in result.model_keys_used],
        "warnings": result.warnings,
        "n_samples": int(len(agg.power_w)),
    }
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"wrote {len(result.per_job_w)} job series to {out}")
    return 0


def _cmd_evaluate(args) -> int:
    sc = _eval.ScenarioConfig(
        name=args.scenario,
        seed=args.seed,
        cap_w=args.cap_w,
        interval_s=args.interval_s,
        train_samples=args.train_samples,
        test_samples=args.test_samples,
    )
    _reports, rows = _eval.run_experiment(sc, out_dir=args.out_dir)
    for row in rows:
        print(
            f"{args.scenario} {row['bucket']}: mean NMAE {row['mean_nmae']:.4f} "
            f"(p5 {row['p5']:.4f}, p95 {row['p95']:.4f}, n={row['n_jobs']})"
        )
    return 0


def _cmd_monitor(args) -> int:
    agg = _read_power_series(args.aggregate)
    inferred = {}
    for name in sorted(os.listdir(args.inferred)):
        if not name.endswith(".csv"):
            continue
        series = _read_power_series(os.path.join(args.inferred, name))
        inferred[series.job_id] = series.power_w
    if not inferred:
        raise WattscopeError(f"no per-job csv files in {args.inferred}")
    state = _monitor.MonitorState(threshold_nmae=args.threshold, persistence=args.persistence)
    timestamps = np.arange(agg.T) * agg.sampling_interval_s
    records = _monitor.monitor_stream(state, "server0", timestamps, agg.power_w, inferred)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "monitor_events.jsonl"), "w") as f:
        f.write(_monitor.records_to_jsonl(records))
    counts = {}
    for r in records:
        counts[r["event"]] = counts.get(r["event"], 0) + 1
    print(json.dumps(counts, sort_keys=True))
    return 0


_COMMANDS = {
    "synthesize": _cmd_synthesize,
    "characterize": _cmd_characterize,
    "train": _cmd_train,
    "disaggregate": _cmd_disaggregate,
    "evaluate": _cmd_evaluate,
    "monitor": _cmd_monitor,
}


def run(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    config_path = _find_config_file(argv)
    if config_path is not None:
        try:
            _apply_config_file(parser, config_path)
        except (OSError, ValueError) as exc:
            print(f"usage error: --config-file: {exc}", file=sys.stderr)
            return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        return _COMMANDS[args.command](args)
    except WattscopeError as exc:
        print(f"error: {exc.qualified_name}: {exc}", file=sys.stderr)
        return 1


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
