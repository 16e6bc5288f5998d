"""Command-line entry point.

Every subcommand writes its artifacts into --out together with a
manifest.json recording parameters, seed, input hashes, output hashes, and
versions; reruns with the same manifest produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import forecast, hdtga, hrlgen, intentd
from .. import validate as vd
from ..netsim import ScenarioConfig, Simulator
from . import artifacts, evalsuite, runs

PEAK_STATE = {"load": 60.0, "loss": 18.0, "power": 205.0}

DEFAULT_COLLECT_INTENTS = [
    {"metric": "throughput", "direction": "increase", "percent": 10},
    {"metric": "power", "direction": "decrease", "percent": 10},
]


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args) -> dict:
    return json.loads(args.scenario) if args.scenario else {}


def _run_config(args) -> dict:
    return {
        "seed": args.seed,
        "interval_ttis": args.interval_ttis,
        "budget_ms": args.budget_ms,
        "scenario": {**runs.DEFAULT_SCENARIO, **_scenario(args)},
        "dataset": args.dataset,
        "models": args.models,
        "thresholds": args.thresholds,
        "lookup": args.lookup,
    }


def _session_inputs(args) -> dict:
    return {name: getattr(args, name)
            for name in ("dataset", "models", "thresholds", "lookup")
            if getattr(args, name)}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = _outdir(args)
    if args.intent:
        config = _run_config(args)
        document = runs.run_intent_session(
            config, [(text, False) for text in args.intent])
        report = out / "report.json"
        runs.write_session_report(report, document)
        artifacts.write_manifest(
            out, "simulate", {"config": config, "intents": args.intent},
            args.seed, inputs=_session_inputs(args),
            artifacts={"report": report})
        return 0
    sim = Simulator(ScenarioConfig(**_scenario(args)), args.seed)
    records = [sim.step()[1] for _ in range(args.ttis)]
    kpis = out / "kpis.jsonl"
    kpis.write_text("".join(r.to_json() + "\n" for r in records))
    artifacts.write_manifest(
        out, "simulate", {"ttis": args.ttis, "scenario": _scenario(args)},
        args.seed, artifacts={"kpis": kpis})
    return 0


def cmd_collect(args) -> int:
    out = _outdir(args)
    intents = json.loads(args.intents) if args.intents \
        else DEFAULT_COLLECT_INTENTS
    cc = hrlgen.CollectConfig(episodes=args.episodes,
                              decisions_per_episode=args.decisions,
                              interval_ttis=args.interval_ttis, tau=args.tau)
    dataset = out / "dataset.jsonl"
    stats = hrlgen.collect(ScenarioConfig(**_scenario(args)), intents,
                           dataset, seed=args.seed, collect_cfg=cc)
    summary = out / "summary.json"
    summary.write_text(artifacts.canonical_json(
        {"records": stats["records"],
         "extrinsic_rewards": len(stats["extrinsic_rewards"])}))
    artifacts.write_manifest(
        out, "collect",
        {"episodes": args.episodes, "decisions": args.decisions,
         "interval_ttis": args.interval_ttis, "tau": args.tau,
         "intents": intents, "scenario": _scenario(args)},
        args.seed, artifacts={"dataset": dataset, "summary": summary})
    return 0


def cmd_train_forecaster(args) -> int:
    out = _outdir(args)
    result = forecast.run_benchmark(args.kind, seed=args.seed, n=args.n,
                                    split=args.split)
    model_path = out / "forecaster.bin"
    forecast.save_model(model_path, result["model"])
    metrics_path = out / "metrics.json"
    metrics_path.write_text(artifacts.canonical_json(
        {k: result[k] for k in ("mae", "mae_last_value", "mae_ar1",
                                "residual_mean", "residual_std")}))
    csv_path = out / "forecast.csv"
    ttis = [int(w.target_ttis[0]) for w in result["eval_windows"]]
    forecast.export_csv(csv_path, ttis, result["truth"].ravel(),
                        result["pred"].ravel())
    artifacts.write_manifest(
        out, "train-forecaster",
        {"kind": args.kind, "n": args.n, "split": args.split}, args.seed,
        artifacts={"model": model_path, "metrics": metrics_path,
                   "forecast_csv": csv_path})
    return 0


def demo_histories(n: int = 1001) -> dict:
    """Deterministic ramp histories with one significant KPI change per
    direction, yielding a usable threshold set without a live network."""
    ranges = {"load": (0.0, 100.0, 40.0, 5.0),
              "loss": (0.0, 20.0, 5.0, 0.5),
              "power": (90.0, 230.0, 180.0, 100.0)}
    histories = {}
    for metric, (lo, hi, target_u, target_l) in ranges.items():
        m_th = np.linspace(lo, hi, n)
        step = (hi - lo) / (n - 1)
        k_u = int(round((target_u - lo) / step))
        k_l = int(round((target_l - lo) / step))
        # two-valued alternating wiggle keeps the change-magnitude
        # percentile exact; only the injected spikes exceed it
        up = np.array([10.0 * (1.01 if i % 2 else 1.0) for i in range(n)])
        up[k_u] *= 8.0
        down = np.array([100.0 * (1.01 if i % 2 else 1.0) for i in range(n)])
        down[k_l] /= 8.0
        histories[metric] = vd.CalibrationHistory(
            metric=metric, m_th=list(m_th),
            kpi_a=vd.KpiTrack("delay_ms", True, list(up)),
            kpi_b=vd.KpiTrack("goodput_mbps", False, list(down)))
    return histories


def _histories_from_file(path) -> dict:
    data = json.loads(Path(path).read_text())
    out = {}
    for metric, h in data.items():
        out[metric] = vd.CalibrationHistory(
            metric=metric, m_th=h["m_th"],
            kpi_a=vd.KpiTrack(**h["kpi_a"]), kpi_b=vd.KpiTrack(**h["kpi_b"]))
    return out


def cmd_calibrate_thresholds(args) -> int:
    out = _outdir(args)
    if args.histories:
        histories = _histories_from_file(args.histories)
        inputs = {"histories": args.histories}
    else:
        histories = demo_histories()
        inputs = {}
    thresholds = vd.select_thresholds(histories)
    path = out / "thresholds.json"
    thresholds.to_json(path)
    artifacts.write_manifest(out, "calibrate-thresholds",
                             {"histories": args.histories}, None,
                             inputs=inputs, artifacts={"thresholds": path})
    return 0


def cmd_build_lookup(args) -> int:
    out = _outdir(args)
    thresholds = vd.ThresholdSet.from_json(args.thresholds)
    lc = vd.LookupConfig(**(json.loads(args.config) if args.config else {}))
    table = vd.build_lookup(thresholds, seed=args.seed, lc=lc)
    path = out / "lookup.json"
    table.to_json(path)
    artifacts.write_manifest(
        out, "build-lookup", {"config": vars(lc)}, args.seed,
        inputs={"thresholds": args.thresholds}, artifacts={"lookup": path})
    return 0


def cmd_train_hdtga(args) -> int:
    out = _outdir(args)
    overrides = json.loads(args.config) if args.config else {}
    cfg = hdtga.HdtgaConfig(**{**runs.TINY_HDTGA, **overrides})
    trajs = hdtga.split_trajectories(hrlgen.read_dataset(args.dataset))
    bundle = hdtga.train_hdtga(trajs, cfg)
    model_path = out / "hdtga.bin"
    hdtga.save_models(model_path, bundle, kind="hdtga")
    outputs = {"models": model_path}
    losses = {"meta": bundle["meta_losses"],
              "control": bundle["control_losses"]}
    if args.dt:
        dt = hdtga.train_dt(trajs, cfg)
        dt_path = out / "dt.bin"
        hdtga.save_models(dt_path, dt, kind="dt")
        outputs["dt"] = dt_path
        losses["dt"] = dt["losses"]
    losses_path = out / "losses.json"
    losses_path.write_text(artifacts.canonical_json(losses))
    outputs["losses"] = losses_path
    artifacts.write_manifest(
        out, "train-hdtga", {"config": vars(cfg), "dt": args.dt}, cfg.seed,
        inputs={"dataset": args.dataset}, artifacts=outputs)
    return 0


def cmd_validate(args) -> int:
    out = _outdir(args)
    intent = intentd.parse_intent(args.intent)
    thresholds = vd.ThresholdSet.from_json(args.thresholds) \
        if args.thresholds else runs.DEFAULT_THRESHOLDS
    table = vd.LookupTable.from_json(args.lookup) if args.lookup \
        else runs.permissive_table()
    values = json.loads(args.values) if args.values else dict(PEAK_STATE)
    verdict = vd.validate_intent(intent.t_y, values, table, thresholds,
                                 mode=args.mode)
    path = out / "verdict.json"
    path.write_text(artifacts.canonical_json(
        {"v": runs.SCHEMA_VERSION, "intent": intentd.render(intent),
         "t_y": intent.t_y, "values": values,
         "verdict": verdict.to_json_dict()}))
    inputs = {k: getattr(args, k) for k in ("thresholds", "lookup")
              if getattr(args, k)}
    artifacts.write_manifest(
        out, "validate",
        {"intent": args.intent, "values": values, "mode": args.mode},
        None, inputs=inputs, artifacts={"verdict": path})
    print(f"{'Valid' if verdict.valid else 'Invalid'}: "
          f"{intentd.render(intent)}")
    return 0


def cmd_eval(args) -> int:
    out = _outdir(args)
    if args.suite != "delays":
        raise SystemExit(f"unknown suite {args.suite!r}")
    overrides = json.loads(args.config) if args.config else {}
    cfg = hdtga.HdtgaConfig(**{**runs.TINY_HDTGA, **overrides})
    models = evalsuite.train_models(args.dataset, cfg)
    thresholds = vd.ThresholdSet.from_json(args.thresholds) \
        if args.thresholds else None
    lookup = vd.LookupTable.from_json(args.lookup) if args.lookup else None
    rows = evalsuite.delay_suite(models, seed=args.seed,
                                 decisions=args.decisions,
                                 eval_tail=args.eval_tail,
                                 thresholds=thresholds, lookup=lookup)
    path = out / "report.csv"
    hdtga.report_rows_csv(path, rows)
    inputs = {"dataset": args.dataset}
    inputs.update({k: getattr(args, k) for k in ("thresholds", "lookup")
                   if getattr(args, k)})
    artifacts.write_manifest(
        out, "eval",
        {"suite": args.suite, "decisions": args.decisions,
         "eval_tail": args.eval_tail, "config": vars(cfg)},
        args.seed, inputs=inputs, artifacts={"report": path})
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    serve(host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_session_flags(p):
    p.add_argument("--dataset", help="offline trajectory dataset (jsonl)")
    p.add_argument("--models", help="pretrained transformer bundle")
    p.add_argument("--thresholds", help="thresholds.json")
    p.add_argument("--lookup", help="lookup.json")
    p.add_argument("--interval-ttis", type=int, default=5)
    p.add_argument("--budget-ms", type=float, default=50.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ranloop",
        description="intent-driven RAN management workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the simulator / intent session")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ttis", type=int, default=200)
    p.add_argument("--scenario", help="JSON scenario overrides")
    p.add_argument("--intent", action="append", default=[],
                   help="run the full pipeline for this intent (repeatable)")
    p.add_argument("--out", required=True)
    _add_session_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("collect", help="generate an offline decision dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=2)
    p.add_argument("--decisions", type=int, default=40)
    p.add_argument("--interval-ttis", type=int, default=5)
    p.add_argument("--tau", type=int, default=10)
    p.add_argument("--scenario", help="JSON scenario overrides")
    p.add_argument("--intents", help="JSON list of goal intents")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train-forecaster", help="train the KPI forecaster")
    p.add_argument("--kind", default="periodic_load",
                   choices=forecast.SYNTHETIC_SUITE)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--n", type=int, default=700)
    p.add_argument("--split", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_forecaster)

    p = sub.add_parser("calibrate-thresholds",
                       help="derive classification thresholds")
    p.add_argument("--histories", help="JSON calibration histories")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate_thresholds)

    p = sub.add_parser("build-lookup", help="build the validation table")
    p.add_argument("--thresholds", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--config", help="JSON lookup-config overrides")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_lookup)

    p = sub.add_parser("train-hdtga", help="train the decision transformers")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", help="JSON model-config overrides")
    p.add_argument("--dt", action="store_true",
                   help="also train the return-conditioned baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_hdtga)

    p = sub.add_parser("validate", help="validate a single intent")
    p.add_argument("--intent", required=True)
    p.add_argument("--thresholds")
    p.add_argument("--lookup")
    p.add_argument("--values",
                   help="JSON {load, loss, power}; default: peak load")
    p.add_argument("--mode", default="strict", choices=("strict", "lenient"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("eval", help="run a policy evaluation suite")
    p.add_argument("--suite", default="delays")
    p.add_argument("--dataset", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--decisions", type=int, default=20)
    p.add_argument("--eval-tail", type=int, default=10)
    p.add_argument("--config", help="JSON model-config overrides")
    p.add_argument("--thresholds")
    p.add_argument("--lookup")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help="default: $RANLOOP_PORT or 8420")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
