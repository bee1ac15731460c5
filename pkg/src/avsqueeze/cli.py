"""Command-line interface.

Subcommands: compress, budget, build, train, compare, curate, bench. Every
run prints its fully resolved configuration as the first output line, and all
randomness descends from the --seed flag through labeled substreams, so any
seeded run is reproducible byte for byte (timing fields from compare/bench
excepted; they are wall-clock measurements).

Exit codes: 0 success; 2 unreadable or unparsable input data; 3 shape or
configuration mismatch; 4 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import benchmarks, budgeting, curation, sequence, training
from .compressor import (
    TRAILING_POLICIES,
    VARIANTS,
    CompressorConfig,
    compress,
    init_weights,
)
from .errors import (
    AvsqueezeError,
    ConfigurationError,
    ContractError,
    DimensionError,
    InputError,
    ManifestError,
    ParseError,
    TrainingDivergenceError,
)
from .fstream import read_stream, write_stream
from .rng import Rng, derive_seed
from .tasks import SyntheticTask
from .weights_io import load_weights, save_weights

_TASK_NAMES = {
    "recall": "segment_class_recall",
    "regression": "segment_mean_regression",
    "match": "cross_modal_match",
}

_EXIT_BY_ERROR = (
    ((ParseError, ManifestError, InputError), 2),
    ((ContractError, DimensionError, ConfigurationError), 3),
    ((TrainingDivergenceError,), 4),
)


def _print_config(subcommand: str, fields: dict) -> None:
    parts = [f"subcommand={subcommand}"]
    for key, value in fields.items():
        parts.append(f"{key}={'-' if value is None else value}")
    print("config " + " ".join(parts))


# ---------------------------------------------------------------------------
# compress


def _add_compressor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stride", type=int, default=None, help="tokens per query group")
    p.add_argument("--variant", choices=VARIANTS, default=None)
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--d-state", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--trailing", choices=TRAILING_POLICIES, default=None)
    p.add_argument(
        "--positions",
        action="store_true",
        help="add sinusoidal positions (attention variant)",
    )


def _cfg_from_flags(args, d_model: int) -> CompressorConfig:
    return CompressorConfig(
        d_model=d_model,
        stride_R=25 if args.stride is None else args.stride,
        variant=args.variant or "causal_ssm",
        num_layers=4 if args.layers is None else args.layers,
        d_state=16 if args.d_state is None else args.d_state,
        num_heads=4 if args.heads is None else args.heads,
        trailing_policy=args.trailing or "drop_partial",
        use_positions=bool(args.positions),
    )


def _check_flag_conflicts(args, cfg: CompressorConfig) -> None:
    checks = [
        ("stride", args.stride, cfg.stride_R),
        ("variant", args.variant, cfg.variant),
        ("layers", args.layers, cfg.num_layers),
        ("d-state", args.d_state, cfg.d_state),
        ("heads", args.heads, cfg.num_heads),
        ("trailing", args.trailing, cfg.trailing_policy),
    ]
    for name, given, stored in checks:
        if given is not None and given != stored:
            raise ConfigurationError(
                f"--{name} {given} conflicts with weight file ({stored})"
            )
    if args.positions and not cfg.use_positions:
        raise ConfigurationError(
            "--positions conflicts with weight file (stored without positions)"
        )


def cmd_compress(args) -> int:
    stream = read_stream(args.input)
    if args.weights:
        cfg, weights = load_weights(args.weights)
        _check_flag_conflicts(args, cfg)
        if cfg.d_model != stream.dim:
            raise ConfigurationError(
                f"weight file d_model {cfg.d_model} does not match "
                f"input width {stream.dim}"
            )
    else:
        cfg = _cfg_from_flags(args, stream.dim)
        weights = init_weights(cfg, Rng(derive_seed(args.seed, "weights")))
    _print_config(
        "compress",
        {
            "input": args.input,
            "out": args.out,
            "weights": args.weights,
            "save_weights": args.save_weights,
            "stride": cfg.stride_R,
            "variant": cfg.variant,
            "layers": cfg.num_layers,
            "d_model": cfg.d_model,
            "d_state": cfg.d_state,
            "heads": cfg.num_heads,
            "trailing": cfg.trailing_policy,
            "positions": cfg.use_positions,
            "binary": args.binary,
            "seed": args.seed,
        },
    )
    if args.save_weights:
        save_weights(args.save_weights, cfg, weights)
    out = compress(stream, cfg, weights)
    write_stream(out, args.out, binary=args.binary)
    print(f"rows_in={stream.rows} rows_out={out.rows} rate_out_hz={out.rate_hz!r}")
    return 0


# ---------------------------------------------------------------------------
# budget


def cmd_budget(args) -> int:
    _print_config(
        "budget",
        {
            "duration_s": args.duration_s,
            "rate_hz": args.rate_hz,
            "stride": args.stride,
            "frames": args.frames,
            "tokens_per_frame": args.tokens_per_frame,
            "trailing": args.trailing,
            "table": args.table,
        },
    )
    report = budgeting.budget(
        args.duration_s,
        args.rate_hz,
        args.stride,
        args.frames,
        args.tokens_per_frame,
        trailing_policy=args.trailing,
    )
    for line in budgeting.kv_lines(report):
        print(line)
    if args.table:
        print(budgeting.human_table(report))
    return 0


# ---------------------------------------------------------------------------
# build


def _load_frames(frames_dir: str) -> list[sequence.VisualFrameBlock]:
    directory = Path(frames_dir)
    if not directory.is_dir():
        raise InputError(f"--frames {frames_dir} is not a directory")
    files = sorted(
        p for p in directory.iterdir() if p.is_file() and not p.name.startswith(".")
    )
    frames = []
    for index, path in enumerate(files):
        stream = read_stream(path)
        frames.append(
            sequence.VisualFrameBlock(
                frame_index=index,
                timestamp_s=stream.origin_s,
                tokens=stream.values,
            )
        )
    return frames


def cmd_build(args) -> int:
    _print_config(
        "build",
        {
            "frames": args.frames,
            "audio": args.audio,
            "policy": args.policy,
            "out": args.out,
        },
    )
    frames = _load_frames(args.frames)
    audio = None
    if args.audio:
        audio = sequence.AudioTokenStream.from_stream(read_stream(args.audio))
    builder = sequence.BUILDERS[args.policy]
    seq = builder(frames, audio)
    sequence.write_sequence(seq, args.out)
    visual = len(seq.filter("visual"))
    print(f"entries={len(seq)} visual={visual} audio={len(seq) - visual}")
    return 0


# ---------------------------------------------------------------------------
# train and compare


def _task_from_args(args) -> SyntheticTask:
    return SyntheticTask(
        kind=_TASK_NAMES[args.task],
        seconds_T=args.seconds,
        d_feature=args.d_model,
        rate_hz=args.rate,
        num_classes=args.classes,
        noise_sigma=args.sigma,
        seed=args.seed,
    )


def _train_cfg_from_args(args, ccfg: CompressorConfig) -> training.TrainConfig:
    return training.TrainConfig(
        compressor=ccfg,
        steps=args.steps,
        batch_size=args.batch,
        learning_rate=args.lr,
        momentum=args.momentum,
        eval_every=args.eval_every,
        eval_samples=args.eval_samples,
    )


def _train_config_fields(args, extra: dict) -> dict:
    fields = {
        "task": args.task,
        "seconds": args.seconds,
        "rate": args.rate,
        "d_model": args.d_model,
        "classes": args.classes,
        "sigma": args.sigma,
        "steps": args.steps,
        "batch": args.batch,
        "lr": args.lr,
        "momentum": args.momentum,
        "eval_every": args.eval_every,
        "eval_samples": args.eval_samples,
        "seed": args.seed,
    }
    fields.update(extra)
    return fields


def cmd_train(args) -> int:
    ccfg = _cfg_from_flags(args, args.d_model)
    task = _task_from_args(args)
    cfg = _train_cfg_from_args(args, ccfg)
    _print_config(
        "train",
        _train_config_fields(
            args,
            {
                "stride": ccfg.stride_R,
                "variant": ccfg.variant,
                "layers": ccfg.num_layers,
                "d_state": ccfg.d_state,
                "heads": ccfg.num_heads,
                "trailing": ccfg.trailing_policy,
                "out_weights": args.out_weights,
                "trace_out": args.trace_out,
            },
        ),
    )
    model, trace = training.train(task, cfg)
    lines = training.trace_lines(trace)
    for line in lines:
        print(line)
    if args.trace_out:
        Path(args.trace_out).write_text("\n".join(lines) + "\n", encoding="ascii")
    if args.out_weights:
        save_weights(args.out_weights, ccfg, model.weights)
    return 0


def cmd_compare(args) -> int:
    variants = args.variants.split(",")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigurationError(f"unknown variant {v!r}; choose from {VARIANTS}")
    base = _cfg_from_flags(args, args.d_model)
    cfgs = [CompressorConfig(
        d_model=base.d_model,
        stride_R=base.stride_R,
        variant=v,
        num_layers=base.num_layers,
        d_state=base.d_state,
        num_heads=base.num_heads,
        trailing_policy=base.trailing_policy,
        use_positions=base.use_positions,
    ) for v in variants]
    task = _task_from_args(args)
    cfg = _train_cfg_from_args(args, cfgs[0])
    _print_config(
        "compare",
        _train_config_fields(
            args,
            {
                "stride": base.stride_R,
                "layers": base.num_layers,
                "d_state": base.d_state,
                "heads": base.num_heads,
                "variants": args.variants,
            },
        ),
    )
    rows = training.compare_variants(task, cfgs, cfg)
    for line in training.comparison_lines(rows):
        print(line)
    return 0


# ---------------------------------------------------------------------------
# curate


def cmd_curate(args) -> int:
    _print_config(
        "curate",
        {"manifest": args.manifest, "matcher": args.matcher, "out": args.out},
    )
    items = curation.read_manifest(args.manifest)
    split = curation.curate(items, args.matcher, Path(args.manifest).name)
    curation.write_split(split, args.matcher, args.out)
    s = split.stats
    print(f"#source={split.source_manifest_id}")
    print(f"#matcher={args.matcher}")
    print(
        f"#total={s.total} #correct={s.probe_correct} "
        f"#missing={s.missing} #retained={s.retained}"
    )
    return 0


# ---------------------------------------------------------------------------
# bench


def cmd_bench(args) -> int:
    _print_config(
        "bench",
        {
            "min_pow": args.min_pow,
            "max_pow": args.max_pow,
            "reps": args.reps,
            "d_model": args.d_model,
            "d_state": args.d_state,
            "chunk": args.chunk,
            "seed": args.seed,
            "compare_backends": args.compare_backends,
        },
    )
    ns = [2**p for p in range(args.min_pow, args.max_pow + 1)]
    result = benchmarks.scaling_run(
        ns,
        args.d_model,
        args.d_state,
        reps=args.reps,
        seed=args.seed,
        chunk=args.chunk,
    )
    for line in benchmarks.scaling_lines(result):
        print(line)
    if args.compare_backends:
        rows = benchmarks.compare_backends(
            ns, args.d_model, args.d_state, reps=args.reps, seed=args.seed,
            chunk=args.chunk,
        )
        for line in benchmarks.backend_lines(rows):
            print(line)
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avsqueeze",
        description="Periodic-query audio token compression and analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="compress a feature stream")
    p.add_argument("--input", required=True, help="input FSTREAM path")
    p.add_argument("--out", required=True, help="output FSTREAM path")
    p.add_argument("--weights", default=None, help="load weights (and config)")
    p.add_argument("--save-weights", default=None, help="save resolved weights")
    p.add_argument("--binary", action="store_true", help="write binary output")
    p.add_argument("--seed", type=int, default=0)
    _add_compressor_flags(p)
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("budget", help="token budget arithmetic")
    p.add_argument("--duration-s", type=float, required=True)
    p.add_argument("--rate-hz", type=float, default=25.0)
    p.add_argument("--stride", type=int, default=25)
    p.add_argument("--frames", type=int, default=0)
    p.add_argument("--tokens-per-frame", type=int, default=0)
    p.add_argument("--trailing", choices=TRAILING_POLICIES, default="drop_partial")
    p.add_argument("--table", action="store_true", help="also print a table")
    p.set_defaults(fn=cmd_budget)

    p = sub.add_parser("build", help="build an LLM input token sequence")
    p.add_argument("--frames", required=True, help="directory of frame FSTREAMs")
    p.add_argument("--audio", default=None, help="audio FSTREAM path")
    p.add_argument("--policy", choices=sorted(sequence.BUILDERS), required=True)
    p.add_argument("--out", required=True, help="output sequence path")
    p.set_defaults(fn=cmd_build)

    for name, fn in (("train", cmd_train), ("compare", cmd_compare)):
        p = sub.add_parser(name, help=f"{name} compressor(s) on a synthetic task")
        p.add_argument("--task", choices=sorted(_TASK_NAMES), default="recall")
        p.add_argument("--seconds", type=int, default=8)
        p.add_argument("--rate", type=int, default=25)
        p.add_argument("--d-model", type=int, default=16)
        p.add_argument("--classes", type=int, default=4)
        p.add_argument("--sigma", type=float, default=0.1)
        p.add_argument("--steps", type=int, default=200)
        p.add_argument("--batch", type=int, default=4)
        p.add_argument("--lr", type=float, default=0.05)
        p.add_argument("--momentum", type=float, default=0.9)
        p.add_argument("--eval-every", type=int, default=50)
        p.add_argument("--eval-samples", type=int, default=8)
        p.add_argument("--seed", type=int, default=0)
        if name == "train":
            _add_compressor_flags(p)
            p.add_argument("--out-weights", default=None)
            p.add_argument("--trace-out", default=None)
        else:
            p.add_argument("--stride", type=int, default=None)
            p.add_argument("--layers", type=int, default=None)
            p.add_argument("--d-state", type=int, default=None)
            p.add_argument("--heads", type=int, default=None)
            p.add_argument("--trailing", choices=TRAILING_POLICIES, default=None)
            p.add_argument("--positions", action="store_true")
            p.add_argument(
                "--variants",
                default=",".join(VARIANTS),
                help="comma-separated variant list",
            )
            p.set_defaults(variant=None)
        p.set_defaults(fn=fn)

    p = sub.add_parser("curate", help="build a probe-hard split from a manifest")
    p.add_argument("--manifest", required=True, help="JSONL manifest path")
    p.add_argument("--matcher", choices=curation.MATCHERS, default="normalized-exact")
    p.add_argument("--out", required=True, help="output split path")
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("bench", help="linear-scaling benchmark of the scan")
    p.add_argument("--min-pow", type=int, default=10)
    p.add_argument("--max-pow", type=int, default=17)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--d-model", type=int, default=32)
    p.add_argument("--d-state", type=int, default=16)
    p.add_argument("--chunk", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--compare-backends", action="store_true")
    p.set_defaults(fn=cmd_bench)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AvsqueezeError as exc:
        for classes, code in _EXIT_BY_ERROR:
            if isinstance(exc, classes):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
