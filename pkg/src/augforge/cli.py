"""Command-line interface.

Subcommands:
    brute       enumerate and store brute-force pipelines
    loop        run the iterative generate/evaluate/admit loop
    pairs       build a fine-tune dataset from stored records
    stats       report store aggregates (counts, density, trend)
    export      write the store to a portable file
    import      load a previously exported store file
    mock-serve  run the mock model and worker endpoints (demos, tests)

Option precedence: explicit flags beat --config file values, which beat
built-in defaults. A loop manifest.json works directly as a --config file,
so a finished run can be replayed verbatim. Resolved values are echoed into
the manifests each command writes.

Environment: AUGFORGE_LLM_URL, AUGFORGE_LLM_MODEL, AUGFORGE_API_KEY supply
endpoint settings when flags are absent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .gateway import EndpointConfig, SamplingParams
from .loop import (
    DEFAULT_AUGMENT_FRACTION,
    DEFAULT_CANDIDATES_PER_EPOCH,
    DEFAULT_FILTER_THRESHOLD,
    DEFAULT_N_EPOCHS,
    LoopConfig,
    make_worker_evaluator,
    run_brute_campaign,
    run_loop,
)
from .pairs import augment_resize256, build_pairs, curate, emit_dataset
from .repository import Repository
from .scheduler import surrogate_evaluate
from .stats import accuracy_density, trend_correlation

ENV_LLM_URL = "AUGFORGE_LLM_URL"
ENV_LLM_MODEL = "AUGFORGE_LLM_MODEL"
ENV_API_KEY = "AUGFORGE_API_KEY"

# Maps config-file keys (the loop manifest shape) onto argparse dests.
_CONFIG_KEY_TO_DEST = {
    "n_epochs": "epochs",
    "candidates_per_epoch": "per_epoch",
    "filter_threshold": "threshold",
    "prompt_mode": "prompt",
    "curation_mode": "curation",
    "pairing_policy": "policy",
    "augment_fraction": "augment_fraction",
    "reference_mode": "reference_mode",
    "reference_seed": "reference_seed",
    "pairing_seed": "pairing_seed",
}
_SAMPLING_KEY_TO_DEST = {
    "temperature": "temperature",
    "top_p": "top_p",
    "top_k": "top_k",
    "max_new_tokens": "max_new_tokens",
}


def _store_path(args) -> Path:
    if args.store is not None:
        return Path(args.store)
    return Path(args.workdir) / "store.jsonl"


def _load_config_defaults(path: str) -> dict:
    """Flatten a config (or manifest) file into argparse dest defaults."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if "config" in data and isinstance(data["config"], dict):
        endpoint = data.get("endpoint", {})
        data = dict(data["config"])
        if endpoint.get("url"):
            data["llm_url"] = endpoint["url"]
        if endpoint.get("model"):
            data["model"] = endpoint["model"]
    defaults = {}
    for key, value in data.items():
        if key == "sampling" and isinstance(value, dict):
            for skey, sval in value.items():
                if skey in _SAMPLING_KEY_TO_DEST:
                    defaults[_SAMPLING_KEY_TO_DEST[skey]] = sval
        elif key in _CONFIG_KEY_TO_DEST:
            defaults[_CONFIG_KEY_TO_DEST[key]] = value
        elif key in ("llm_url", "model", "evaluator", "worker_url"):
            defaults[key] = value
    return defaults


def build_parser(extra_defaults: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augforge",
        description="Performance-guided augmentation code discovery.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--workdir", default=".", help="directory for run artifacts")
    parser.add_argument("--store", default=None, help="store file (default: <workdir>/store.jsonl)")
    parser.add_argument("--config", default=None, help="JSON config file (a loop manifest works)")
    sub = parser.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("brute", formatter_class=fmt, help="enumerate and store pipelines")
    p.add_argument("--arity", choices=["1", "2", "3", "all"], default="all")
    p.add_argument("--count", type=int, default=2000, help="pipelines per arity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--evaluate", choices=["none", "surrogate", "worker"], default="none")
    p.add_argument("--worker-url", default=None, help="evaluation worker base URL")
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("loop", formatter_class=fmt, help="run the iterative loop")
    p.add_argument("--epochs", type=int, default=DEFAULT_N_EPOCHS, help="loop epochs to run")
    p.add_argument(
        "--per-epoch", type=int, default=DEFAULT_CANDIDATES_PER_EPOCH,
        help="generation attempts per epoch",
    )
    p.add_argument(
        "--threshold", type=float, default=DEFAULT_FILTER_THRESHOLD,
        help="strict admission bound on accuracy",
    )
    p.add_argument("--prompt", choices=["direct", "cot"], default="direct", help="prompt style")
    p.add_argument(
        "--curation", choices=["curated", "unfiltered"], default="curated",
        help="store curation mode",
    )
    p.add_argument(
        "--policy", choices=["uniform_better", "nearest_better"], default="uniform_better",
        help="pair partner policy",
    )
    p.add_argument(
        "--augment-fraction", type=float, default=DEFAULT_AUGMENT_FRACTION,
        help="fraction of pairs cloned with resize 256",
    )
    p.add_argument(
        "--reference-mode", choices=["fresh", "shared"], default="fresh",
        help="reference draw per slot or per epoch",
    )
    p.add_argument("--reference-seed", type=int, default=0, help="reference draw seed")
    p.add_argument("--pairing-seed", type=int, default=0, help="pair building seed")
    p.add_argument("--temperature", type=float, default=0.8, help="sampling temperature")
    p.add_argument("--top-p", type=float, default=0.9, help="nucleus sampling mass")
    p.add_argument("--top-k", type=int, default=70, help="sampling candidate cutoff")
    p.add_argument("--max-new-tokens", type=int, default=16 * 1024, help="completion budget")
    p.add_argument("--llm-url", default=None, help=f"model endpoint (or ${ENV_LLM_URL})")
    p.add_argument("--model", default=None, help=f"model name (or ${ENV_LLM_MODEL})")
    p.add_argument(
        "--evaluator", choices=["surrogate", "worker"], default="surrogate",
        help="scoring backend",
    )
    p.add_argument("--worker-url", default=None, help="evaluation worker base URL")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("pairs", formatter_class=fmt, help="build a fine-tune dataset")
    p.add_argument("--curation", choices=["curated", "unfiltered"], default="curated")
    p.add_argument("--policy", choices=["uniform_better", "nearest_better"], default="uniform_better")
    p.add_argument("--min-accuracy", type=float, default=None, help="strict lower bound")
    p.add_argument("--augment-fraction", type=float, default=DEFAULT_AUGMENT_FRACTION)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="pairs.jsonl", help="output dataset path")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("stats", formatter_class=fmt, help="report store aggregates")
    p.add_argument("--density-out", default=None, help="write the density curve here (JSON)")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("export", formatter_class=fmt, help="export the store")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("import", formatter_class=fmt, help="import an exported store")
    p.add_argument("--file", dest="infile", required=True)
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("mock-serve", formatter_class=fmt, help="run mock endpoints")
    p.add_argument("--llm-port", type=int, default=8800)
    p.add_argument("--worker-port", type=int, default=8801)
    p.set_defaults(func=cmd_mock_serve)

    # Subparsers parse into their own namespace, so defaults set on the root
    # parser never reach subcommand arguments; apply them to every level.
    if extra_defaults:
        parser.set_defaults(**extra_defaults)
        for child in sub.choices.values():
            child.set_defaults(**extra_defaults)

    return parser


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------

def cmd_brute(args) -> int:
    arities = (1, 2, 3) if args.arity == "all" else (int(args.arity),)
    repo = Repository(_store_path(args))
    started = time.monotonic()
    report = run_brute_campaign(
        args.workdir,
        arities,
        args.count,
        args.seed,
        repo,
        evaluate=args.evaluate,
        worker_url=args.worker_url,
    )
    elapsed = time.monotonic() - started
    per_arity = ", ".join(f"arity {a}: {n}" for a, n in sorted(report.per_arity.items()))
    print(
        f"stored {report.total} records ({per_arity}) in {elapsed:.1f}s; "
        f"validated {report.validated}, evaluated {report.evaluated}, errors {report.errors}"
    )
    return 0


def cmd_loop(args) -> int:
    llm_url = args.llm_url or os.environ.get(ENV_LLM_URL)
    if not llm_url:
        raise ValueError(f"loop needs a model endpoint: --llm-url or ${ENV_LLM_URL}")
    model = args.model or os.environ.get(ENV_LLM_MODEL) or "default"
    endpoint = EndpointConfig(url=llm_url, model=model, api_key=os.environ.get(ENV_API_KEY))

    if args.evaluator == "worker":
        if not args.worker_url:
            raise ValueError("--evaluator worker requires --worker-url")
        evaluator = make_worker_evaluator(args.worker_url)
        evaluator_label = args.worker_url
    else:
        evaluator = surrogate_evaluate
        evaluator_label = "surrogate"

    config = LoopConfig(
        n_epochs=args.epochs,
        candidates_per_epoch=args.per_epoch,
        filter_threshold=args.threshold,
        prompt_mode=args.prompt,
        curation_mode=args.curation,
        pairing_policy=args.policy,
        augment_fraction=args.augment_fraction,
        reference_mode=args.reference_mode,
        reference_seed=args.reference_seed,
        pairing_seed=args.pairing_seed,
        sampling=SamplingParams(
            temperature=args.temperature,
            top_p=args.top_p,
            top_k=args.top_k,
            max_new_tokens=args.max_new_tokens,
        ),
    )
    repo = Repository(_store_path(args))

    def _progress(stats):
        mean = "-" if stats.mean_accuracy is None else f"{stats.mean_accuracy:.4f}"
        print(
            f"epoch {stats.epoch_index}: generated {stats.n_generated}, "
            f"valid {stats.n_valid}, admitted {stats.n_admitted}, mean {mean}"
        )

    result = run_loop(
        args.workdir,
        config,
        repo,
        endpoint,
        evaluator,
        evaluator_label=evaluator_label,
        on_epoch=_progress,
    )
    if result.aborted:
        print(f"aborted after {result.epochs_completed} epochs: {result.abort_reason}")
        return 1
    print(f"completed {result.epochs_completed} epochs; artifacts in {args.workdir}")
    return 0


def cmd_pairs(args) -> int:
    repo = Repository(_store_path(args))
    records = curate(repo.records(), args.curation)
    records = [r for r in records if r.accuracy is not None]
    if args.min_accuracy is not None:
        records = [r for r in records if r.accuracy > args.min_accuracy]
    if not records:
        raise ValueError("no evaluated records match; run brute/loop with evaluation first")
    pairs = build_pairs(records, policy=args.policy, seed=args.seed)
    clones = augment_resize256(pairs, args.augment_fraction, seed=args.seed)
    out = Path(args.workdir) / args.out if not Path(args.out).is_absolute() else Path(args.out)
    total = emit_dataset(pairs + clones, out)
    print(f"wrote {total} samples ({len(pairs)} pairs, {len(clones)} augmented) to {out}")
    return 0


def cmd_stats(args) -> int:
    repo = Repository(_store_path(args))
    records = repo.records()
    evaluated = [r for r in records if r.accuracy is not None and r.error_class is None]
    accuracies = [r.accuracy for r in evaluated]
    summary = {
        "records": len(records),
        "evaluated": len(evaluated),
        "mean_accuracy": sum(accuracies) / len(accuracies) if accuracies else None,
        "max_accuracy": max(accuracies) if accuracies else None,
        "trend_correlation": None,
    }

    by_epoch: dict[int, list[float]] = {}
    for r in evaluated:
        if r.source.kind == "llm":
            by_epoch.setdefault(r.source.epoch_index, []).append(r.accuracy)
    points = [
        (float(epoch), sum(v) / len(v)) for epoch, v in sorted(by_epoch.items())
    ]
    if len(points) >= 2:
        try:
            summary["trend_correlation"] = trend_correlation(points)
        except ValueError:
            pass

    if args.density_out and len(accuracies) >= 2:
        curve = accuracy_density(accuracies)
        payload = {
            "n_samples": len(accuracies),
            "bandwidth": curve.bandwidth,
            "grid": curve.grid.tolist(),
            "density": curve.density.tolist(),
        }
        out = Path(args.density_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload) + "\n", encoding="utf-8")
        summary["density_file"] = str(out)

    print(json.dumps(summary, indent=2))
    return 0


def cmd_export(args) -> int:
    repo = Repository(_store_path(args))
    count = repo.export(args.out)
    print(f"exported {count} records to {args.out}")
    return 0


def cmd_import(args) -> int:
    repo = Repository(_store_path(args))
    count = repo.import_file(args.infile)
    print(f"imported {count} records from {args.infile}")
    return 0


def cmd_mock_serve(args) -> int:
    from .mockserver import MockLLMServer, MockWorkerServer

    llm = MockLLMServer(port=args.llm_port).start()
    worker = MockWorkerServer(port=args.worker_port).start()
    print(f"mock model endpoint: {llm.url}")
    print(f"mock worker endpoint: {worker.url}")
    print("serving; Ctrl-C to stop")
    try:
        while True:
            time.sleep(0.5)
    except KeyboardInterrupt:
        pass
    finally:
        llm.stop()
        worker.stop()
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    # Pre-scan for --config so its values become subcommand defaults; real
    # parsing below then lets explicit flags override them.
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)

    extra_defaults = None
    if known.config:
        try:
            extra_defaults = _load_config_defaults(known.config)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config {known.config}: {exc}", file=sys.stderr)
            return 1

    parser = build_parser(extra_defaults)
    args = parser.parse_args(argv)
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
