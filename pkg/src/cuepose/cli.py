"""Operator entry points wrapping every pipeline stage.

Exit codes: 0 success, 1 validation error (bad inputs, bad files),
2 runtime error (bind failures, I/O trouble). Every subcommand accepts
``--json`` for machine-readable stdout.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading

from . import dataset as ds_mod
from . import metrics, mlp
from .cues import CueError
from .dataset import DatasetError
from .mlp import ModelError
from .pose import PoseError
from .server import ConfigError, EngineCore, SyncTrainer, load_config, replay_file
from .server.app import create_app
from .server.runtime import EngineRuntime
from .server.trace import TraceError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

VALIDATION_ERRORS = (ConfigError, DatasetError, ModelError, PoseError,
                     CueError, TraceError, FileNotFoundError)


def _print(doc: dict, as_json: bool, text: str | None = None) -> None:
    if as_json:
        print(json.dumps(doc, indent=2))
    elif text is not None:
        print(text)


def cmd_serve(args) -> int:
    import uvicorn

    config = load_config(args.config)
    runtime = EngineRuntime(config)
    try:
        runtime.start()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    banner = {
        "service": "cuepose",
        "osc_listen": f"{config.osc_listen[0]}:{config.osc_listen[1]}",
        "osc_out": f"{config.osc_out[0]}:{config.osc_out[1]}",
        "ws": f"ws://{config.ws_listen[0]}:{config.ws_listen[1]}/ws",
        "mode": config.mode,
    }
    _print(banner, args.json,
           "cuepose serving  osc-in {osc_listen}  osc-out {osc_out}  ui {ws}".format(**banner))
    app = create_app(runtime)
    server = uvicorn.Server(uvicorn.Config(
        app, host=config.ws_listen[0], port=config.ws_listen[1], log_level="warning"))

    def shutdown(signum, frame):
        server.should_exit = True

    signal.signal(signal.SIGINT, shutdown)
    signal.signal(signal.SIGTERM, shutdown)
    try:
        server.run()
    finally:
        runtime.stop()
    return EXIT_OK


def cmd_train(args) -> int:
    ds = ds_mod.load(args.dataset)
    cfg = mlp.TrainConfig(hidden_dims=tuple(args.hidden), seed=args.seed,
                          max_epochs=args.max_epochs)
    model, scaler, report = mlp.train(ds, cfg)
    mlp.save_model(model, scaler, args.out_model, args.out_scaler)
    rep = report.validation_report
    doc = {
        "model": args.out_model,
        "scaler": args.out_scaler,
        "epochs": report.epochs_run,
        "best_epoch": report.best_epoch,
        "validation": rep.to_json(),
    }
    _print(doc, args.json, rep.to_text())
    return EXIT_OK


def cmd_eval(args) -> int:
    model, scaler = mlp.load_model(args.model, args.scaler)
    ds = ds_mod.load(args.dataset)
    rep = metrics.cross_user_eval(model, scaler, ds)
    doc = {"dataset": args.dataset, "report": rep.to_json()}
    text = rep.to_text()
    if args.learning_curve:
        sizes = [int(s) for s in args.learning_curve.split(",")]
        curve = metrics.learning_curve(ds, mlp.TrainConfig(seed=args.seed), sizes,
                                       eval_split=0.25, seed=args.seed)
        doc["learning_curve"] = [{"samples_per_class": s, "accuracy": a}
                                 for s, a in curve.points]
        text += "\n\nlearning curve (samples/class -> accuracy):\n" + "\n".join(
            f"  {s:>4d}  {a:.3f}" for s, a in curve.points)
    _print(doc, args.json, text)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = ds_mod.make_synthetic_config(args.classes, args.per_class, args.noise,
                                       args.shift, args.seed)
    ds = ds_mod.generate_synthetic(cfg)
    ds_mod.save(ds, args.out)
    doc = {"out": args.out, "classes": len(ds.classes), "samples": len(ds),
           "noise": args.noise, "shift": args.shift, "seed": args.seed}
    _print(doc, args.json,
           f"wrote {len(ds)} samples over {len(ds.classes)} classes to {args.out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    config = load_config(args.config)

    def make_core():
        runtime = EngineRuntime(config)
        core = runtime.core
        core.trainer = SyncTrainer()  # replay trains inline, deterministically
        return core

    out_path = args.out or (args.trace + ".out.jsonl")
    runs = 10 if args.bench else 1
    results = [replay_file(args.trace, make_core,
                           out_path if i == runs - 1 else None)
               for i in range(runs)]
    stats = results[-1].stats
    doc = {"trace": args.trace, "out": out_path,
           "commands": len(results[-1].out_lines),
           "latency": stats.to_json() if stats else None}
    text = f"wrote command trace to {out_path}\nper-event compute latency: {stats}" \
        if stats else f"wrote command trace to {out_path} (no input events)"
    if args.bench and stats:
        p99s = [r.stats.p99 for r in results if r.stats]
        maxes = [r.stats.max for r in results if r.stats]
        identical = len({r.trace_bytes() for r in results}) == 1
        doc["bench"] = {"runs": runs, "p99_min": min(p99s), "p99_max": max(p99s),
                        "max_min": min(maxes), "max_max": max(maxes),
                        "outputs_identical": identical}
        text += (f"\nbench over {runs} runs: p99 {min(p99s):.3f}..{max(p99s):.3f} ms, "
                 f"max {min(maxes):.3f}..{max(maxes):.3f} ms, "
                 f"outputs identical: {identical}")
    _print(doc, args.json, text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cuepose",
                                     description="gesture-to-sound-control engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the engine server")
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("train", help="train a model from a dataset file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-scaler", required=True)
    p.add_argument("--hidden", type=int, nargs="+", default=[64])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--scaler", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--learning-curve", metavar="SIZES",
                   help="comma-separated samples-per-class sizes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--shift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("replay", help="replay a recorded trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output command trace path")
    p.add_argument("--bench", action="store_true", help="repeat 10x and report dispersion")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
