"""Command line entry points: serve the worker, or run one job locally."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .evaluate import WorkerSettings, evaluate_candidate
from .finetune import load_samples, run_finetune


def _settings_from_args(args) -> WorkerSettings:
    return WorkerSettings.from_env(
        train_samples=args.train_samples,
        test_samples=args.test_samples,
        seed=args.seed,
        data_root=args.data_root,
        time_budget_s=args.time_budget,
    )


def _add_settings_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--train-samples", type=int, default=1024, help="training split size")
    p.add_argument("--test-samples", type=int, default=256, help="test split size")
    p.add_argument("--seed", type=int, default=0, help="worker-side seed")
    p.add_argument("--data-root", default=None, help="directory holding real dataset files")
    p.add_argument("--time-budget", type=float, default=840.0, help="per-job seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augforge-worker",
        description="Evaluation and fine-tuning worker.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("serve", formatter_class=fmt, help="run the HTTP worker")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8801)
    _add_settings_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("evaluate", formatter_class=fmt, help="score one candidate file")
    p.add_argument("--file", required=True, help="candidate source file")
    p.add_argument("--config", default=None, help="JSON file with the training config")
    _add_settings_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("finetune", formatter_class=fmt, help="train adapters on a dataset")
    p.add_argument("--data", required=True, help="JSONL file with prompt/output rows")
    p.add_argument("--out", required=True, help="adapter output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_finetune)

    return parser


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(_settings_from_args(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_evaluate(args) -> int:
    code = Path(args.file).read_text(encoding="utf-8")
    config = {}
    if args.config:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    result = evaluate_candidate(code, config, _settings_from_args(args))
    print(json.dumps(result, indent=2))
    return 0 if "accuracy" in result else 1


def cmd_finetune(args) -> int:
    samples = load_samples(args.data)
    report = run_finetune(samples, args.out, seed=args.seed)
    print(
        json.dumps(
            {
                "adapter_dir": str(report.adapter_dir),
                "epoch_losses": report.epoch_losses,
                "optimizer_used": report.optimizer_used,
            },
            indent=2,
        )
    )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
