"""End-to-end training of compressor plus linear readout on synthetic tasks.

The "LLM" downstream of the compressor is deliberately a single linear map
from each compressed token z_t (plus the paired visual token for the
cross-modal task): the claim under test is that the compressed tokens keep
per-second information, not language modeling. Losses are cross-entropy for
classification tasks and mean-squared error for regression.

The optimizer is plain SGD with momentum: one batch per step, each batch
element on its own fresh tape, gradients averaged in fixed weight order, so
identical (task, config) pairs reproduce identical final weights bit for bit.
All randomness descends from the task seed: weights from its "weights"
substream, readout from "readout", training sample i is the task family's
sample i, and the fixed evaluation set uses negative sample indices.

A frozen mean-pool baseline (per-group averaging in place of the compressor,
same readout shape, same training loop) provides the control row for variant
comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .compressor import (
    CompressorConfig,
    compress_value,
    count_parameters,
    init_weights,
    weight_shapes,
)
from .errors import ConfigurationError, TrainingDivergenceError
from .rng import Rng, derive_seed
from .tasks import SyntheticTask, TaskSample, generate_task
from .tensor import Tape, Tensor, Value

_CLASSIFICATION = ("segment_class_recall", "cross_modal_match")


@dataclass(frozen=True)
class TrainConfig:
    compressor: CompressorConfig
    steps: int = 200
    batch_size: int = 4
    learning_rate: float = 0.05
    momentum: float = 0.9
    eval_every: int = 50
    eval_samples: int = 8
    readout_width: int | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        # learning_rate 0 is allowed as the degenerate no-op run
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        if not (0 <= self.momentum < 1):
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.eval_every < 1:
            raise ConfigurationError("eval_every must be >= 1")
        if self.eval_samples < 1:
            raise ConfigurationError("eval_samples must be >= 1")


@dataclass(frozen=True)
class TracePoint:
    step: int
    metric: float
    loss: float


@dataclass(frozen=True)
class TrainedModel:
    task: SyntheticTask
    cfg: CompressorConfig
    weights: dict[str, Tensor]
    readout_w: Tensor
    readout_b: Tensor


@dataclass(frozen=True)
class BaselineModel:
    task: SyntheticTask
    stride: int
    readout_w: Tensor
    readout_b: Tensor


def trace_lines(trace: list[TracePoint]) -> list[str]:
    return [f"step={p.step} metric={p.metric!r} loss={p.loss!r}" for p in trace]


def readout_dims(task: SyntheticTask, d_model: int) -> tuple[int, int]:
    """(input width, output width) of the linear head for this task."""
    if task.kind == "segment_class_recall":
        return d_model, task.num_classes
    if task.kind == "segment_mean_regression":
        return d_model, task.d_feature
    return 2 * d_model, 2  # cross_modal_match: concat(z_t, v_t) -> match/mismatch


def _init_readout(task: SyntheticTask, cfg: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    d_in, width = readout_dims(task, cfg.compressor.d_model)
    if cfg.readout_width is not None and cfg.readout_width != width:
        raise ConfigurationError(
            f"readout_width {cfg.readout_width} does not match the task's "
            f"required width {width}"
        )
    rng = Rng(derive_seed(task.seed, "readout"))
    w = rng.normals(d_in * width).reshape(d_in, width) / np.sqrt(d_in)
    return w, np.zeros(width)


def _check_task_shape(task: SyntheticTask, ccfg: CompressorConfig) -> None:
    if task.d_feature != ccfg.d_model:
        raise ConfigurationError(
            f"task d_feature {task.d_feature} does not match "
            f"compressor d_model {ccfg.d_model}"
        )
    if task.rate_hz != ccfg.stride_R:
        raise ConfigurationError(
            f"per-second labels need stride_R ({ccfg.stride_R}) equal to "
            f"the task rate_hz ({task.rate_hz})"
        )


def _head_loss(
    tape: Tape,
    feats: Value,
    task: SyntheticTask,
    sample: TaskSample,
    pvals: dict[str, Value],
) -> Value:
    if task.kind == "cross_modal_match":
        feats = T.concat_cols(feats, tape.leaf(sample.visual))
    logits = T.add_rowvec(feats @ pvals["readout.w"], pvals["readout.b"])
    if task.kind == "segment_mean_regression":
        diff = logits - tape.leaf(sample.labels)
        return T.mean_all(diff * diff)
    nll = T.logsumexp_rows(logits) - T.gather_rows(logits, sample.labels)
    return T.mean_all(nll)


def _pool_groups(values: np.ndarray, stride: int) -> np.ndarray:
    """Per-group mean over complete groups of `stride` rows (drop partial)."""
    groups = values.shape[0] // stride
    return values[: groups * stride].reshape(groups, stride, -1).mean(axis=1)


def _metric_from_logits(logits: np.ndarray, sample: TaskSample, task: SyntheticTask):
    if task.kind == "segment_mean_regression":
        diff = logits - sample.labels
        return float(np.mean(diff * diff)), logits.shape[0]
    hits = int(np.sum(np.argmax(logits, axis=1) == sample.labels))
    return hits, logits.shape[0]


class _Sgd:
    """Momentum SGD over a fixed-order name -> array parameter store."""

    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(p) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name in self.params:
            v = self.momentum * self.velocity[name] - self.lr * grads[name]
            self.velocity[name] = v
            self.params[name] = self.params[name] + v


def _run_training(
    task: SyntheticTask,
    cfg: TrainConfig,
    params: dict[str, np.ndarray],
    forward,  # (tape, sample, param_values) -> feats Value
    evaluate,  # (params) -> (metric, loss)
) -> list[TracePoint]:
    opt = _Sgd(params, cfg.learning_rate, cfg.momentum)
    trace: list[TracePoint] = []
    for step in range(1, cfg.steps + 1):
        grads = {name: np.zeros_like(p) for name, p in params.items()}
        batch_loss = 0.0
        for b in range(cfg.batch_size):
            sample = generate_task(task, sample=(step - 1) * cfg.batch_size + b)
            tape = Tape()
            pvals = {name: tape.leaf(p) for name, p in params.items()}
            feats = forward(tape, sample, pvals)
            loss = _head_loss(tape, feats, task, sample, pvals)
            batch_loss += float(loss.data)
            g = T.backward(tape, loss)
            for name in params:
                grads[name] += g.wrt(pvals[name])
        batch_loss /= cfg.batch_size
        if not np.isfinite(batch_loss):
            raise TrainingDivergenceError(step)
        for name in grads:
            grads[name] /= cfg.batch_size
        opt.step(grads)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            metric, eval_loss = evaluate(params)
            trace.append(TracePoint(step, metric, eval_loss))
    return trace


def _evaluate(
    task: SyntheticTask,
    cfg: TrainConfig,
    params: dict[str, np.ndarray],
    forward,
) -> tuple[float, float]:
    """Metric and mean loss over the fixed eval set (negative sample ids)."""
    total_num = 0.0
    total_den = 0
    losses = []
    for i in range(cfg.eval_samples):
        sample = generate_task(task, sample=-(i + 1))
        tape = Tape()
        pvals = {name: tape.leaf(p) for name, p in params.items()}
        feats = forward(tape, sample, pvals)
        loss = _head_loss(tape, feats, task, sample, pvals)
        losses.append(float(loss.data))
        logits = _final_logits(tape, feats, sample, task, pvals)
        num, den = _metric_from_logits(logits, sample, task)
        total_num += num
        total_den += den
    metric = total_num / (len(losses) if task.kind == "segment_mean_regression" else total_den)
    return float(metric), float(np.mean(losses))


def _final_logits(tape, feats, sample, task, pvals) -> np.ndarray:
    data = feats.data
    if task.kind == "cross_modal_match":
        data = np.concatenate([data, sample.visual], axis=1)
    return data @ pvals["readout.w"].data + pvals["readout.b"].data


def train(task: SyntheticTask, cfg: TrainConfig) -> tuple[TrainedModel, list[TracePoint]]:
    """Optimize compressor and readout jointly; deterministic per task seed."""
    ccfg = cfg.compressor
    _check_task_shape(task, ccfg)
    init = init_weights(ccfg, Rng(derive_seed(task.seed, "weights")))
    params: dict[str, np.ndarray] = {
        name: init[name].numpy() for name in weight_shapes(ccfg)
    }
    params["readout.w"], params["readout.b"] = _init_readout(task, cfg)

    def forward(tape, sample, pvals):
        wvals = {n: v for n, v in pvals.items() if not n.startswith("readout.")}
        return compress_value(tape, sample.stream.values, ccfg, wvals, grad=True)

    def evaluate(p):
        return _evaluate(task, cfg, p, _eval_forward)

    def _eval_forward(tape, sample, pvals):
        wvals = {n: v for n, v in pvals.items() if not n.startswith("readout.")}
        return compress_value(tape, sample.stream.values, ccfg, wvals, grad=False)

    trace = _run_training(task, cfg, params, forward, evaluate)
    weights = {name: Tensor(params[name]) for name in weight_shapes(ccfg)}
    model = TrainedModel(
        task=task,
        cfg=ccfg,
        weights=weights,
        readout_w=Tensor(params["readout.w"]),
        readout_b=Tensor(params["readout.b"]),
    )
    return model, trace


def train_baseline(
    task: SyntheticTask, cfg: TrainConfig
) -> tuple[BaselineModel, list[TracePoint]]:
    """Mean-pool control: per-group averaging in place of the compressor;
    only the readout trains."""
    stride = cfg.compressor.stride_R
    _check_task_shape(task, cfg.compressor)
    params: dict[str, np.ndarray] = {}
    params["readout.w"], params["readout.b"] = _init_readout(task, cfg)

    def forward(tape, sample, pvals):
        return tape.leaf(_pool_groups(sample.stream.values, stride))

    def evaluate(p):
        return _evaluate(task, cfg, p, forward)

    trace = _run_training(task, cfg, params, forward, evaluate)
    model = BaselineModel(
        task=task,
        stride=stride,
        readout_w=Tensor(params["readout.w"]),
        readout_b=Tensor(params["readout.b"]),
    )
    return model, trace


# ---------------------------------------------------------------------------
# variant comparison


@dataclass(frozen=True)
class ComparisonRow:
    variant: str
    params: int
    metric: float
    loss: float
    seconds_per_step: float


def comparison_lines(rows: list[ComparisonRow]) -> list[str]:
    return [
        f"variant={r.variant} params={r.params} metric={r.metric!r} "
        f"loss={r.loss!r} seconds_per_step={r.seconds_per_step:.6f}"
        for r in rows
    ]


def compare_variants(
    task: SyntheticTask,
    cfgs: list[CompressorConfig],
    train_cfg: TrainConfig,
) -> list[ComparisonRow]:
    """Train each config on the task plus the mean-pool control row.

    All configs must share stride_R, d_model, and num_layers so the
    comparison is apples-to-apples. `params` counts trainable weights,
    compressor plus readout (the control row has only the readout).
    """
    if not cfgs:
        raise ConfigurationError("compare_variants needs at least one config")
    head = cfgs[0]
    for other in cfgs[1:]:
        for field in ("stride_R", "d_model", "num_layers"):
            if getattr(other, field) != getattr(head, field):
                raise ConfigurationError(
                    f"configs must share {field}: "
                    f"{getattr(head, field)} vs {getattr(other, field)}"
                )
    d_in, width = readout_dims(task, head.d_model)
    readout_params = d_in * width + width
    rows = []
    for ccfg in cfgs:
        cfg = replace(train_cfg, compressor=ccfg)
        started = time.perf_counter()
        _, trace = train(task, cfg)
        seconds = (time.perf_counter() - started) / cfg.steps
        rows.append(
            ComparisonRow(
                variant=ccfg.variant,
                params=count_parameters(ccfg) + readout_params,
                metric=trace[-1].metric,
                loss=trace[-1].loss,
                seconds_per_step=seconds,
            )
        )
    cfg = replace(train_cfg, compressor=head)
    started = time.perf_counter()
    _, trace = train_baseline(task, cfg)
    seconds = (time.perf_counter() - started) / cfg.steps
    rows.append(
        ComparisonRow(
            variant="mean_pool_baseline",
            params=readout_params,
            metric=trace[-1].metric,
            loss=trace[-1].loss,
            seconds_per_step=seconds,
        )
    )
    return rows
