"""Synthetic per-second tasks for training and comparing compressors.

Every task emits a feature stream of seconds_T * rate_hz tokens plus one label
per second, so a compressor at stride R = rate_hz produces exactly one token
per labeled second. The generators label themselves from their own latent
draws; no external data is involved.

    segment_class_recall    each second's tokens follow one of num_classes
                            temporal prototypes plus N(0, sigma) noise; the
                            label is the class id. Prototypes have zero mean
                            over the second's time axis, so averaging a
                            second's tokens destroys the class signal and the
                            task isolates temporal summarization quality.
    segment_mean_regression the label is the second's empirical mean vector.
    cross_modal_match       a per-second latent renders the second's audio
                            tokens; a paired visual pseudo-token renders the
                            same latent (label 1) or a derangement-shifted
                            second's latent (label 0).

Task-level structure (prototypes, rendering maps) is derived from the task
seed alone; per-sample draws come from a labeled sample substream, so one task
yields an unlimited deterministic family of samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .fstream import FeatureStream
from .rng import Rng, derive_seed

TASK_KINDS = ("segment_class_recall", "segment_mean_regression", "cross_modal_match")


@dataclass(frozen=True)
class SyntheticTask:
    kind: str
    seconds_T: int
    d_feature: int
    rate_hz: int = 25
    num_classes: int = 4
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigurationError(
                f"unknown task kind {self.kind!r}; choose from {TASK_KINDS}"
            )
        if self.seconds_T < 1 or self.rate_hz < 1 or self.d_feature < 1:
            raise ConfigurationError(
                "seconds_T, rate_hz, and d_feature must all be >= 1"
            )
        if self.kind == "segment_class_recall" and self.num_classes < 2:
            raise ConfigurationError("recall task needs num_classes >= 2")
        if self.kind == "cross_modal_match" and self.seconds_T < 2:
            raise ConfigurationError(
                "cross_modal_match needs seconds_T >= 2 (mismatch draws "
                "another second's latent)"
            )
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")

    @property
    def tokens_total(self) -> int:
        return self.seconds_T * self.rate_hz


@dataclass(frozen=True)
class TaskSample:
    """One generated example: the stream, per-second labels, and (for the
    cross-modal task) the paired visual pseudo-tokens."""

    stream: FeatureStream
    labels: np.ndarray
    visual: np.ndarray | None = None


def class_prototypes(task: SyntheticTask) -> np.ndarray:
    """[num_classes, rate_hz, d] temporal patterns, zero-mean over time and
    scaled to unit RMS; fixed by the task seed."""
    rng = Rng(derive_seed(task.seed, "prototypes"))
    protos = rng.normals(task.num_classes * task.rate_hz * task.d_feature)
    protos = protos.reshape(task.num_classes, task.rate_hz, task.d_feature)
    protos = protos - protos.mean(axis=1, keepdims=True)
    rms = np.sqrt(np.mean(protos**2, axis=(1, 2), keepdims=True))
    return protos / rms


def _render_maps(task: SyntheticTask) -> tuple[np.ndarray, np.ndarray]:
    """Fixed audio and visual rendering maps for cross_modal_match."""
    d = task.d_feature
    rng = Rng(derive_seed(task.seed, "render"))
    w_audio = rng.normals(d * d).reshape(d, d) / np.sqrt(d)
    w_visual = rng.normals(d * d).reshape(d, d) / np.sqrt(d)
    return w_audio, w_visual


def generate_task(task: SyntheticTask, *, sample: int = 0) -> TaskSample:
    """Deterministic sample #`sample` of the task family."""
    rng = Rng(derive_seed(task.seed, f"sample{sample}"))
    t, rate, d = task.seconds_T, task.rate_hz, task.d_feature
    n = task.tokens_total

    if task.kind == "segment_class_recall":
        protos = class_prototypes(task)
        labels = np.array([rng.integer(task.num_classes) for _ in range(t)])
        noise = task.noise_sigma * rng.normals(n * d).reshape(n, d)
        values = protos[labels].reshape(n, d) + noise
        return TaskSample(FeatureStream(values, rate_hz=rate), labels)

    if task.kind == "segment_mean_regression":
        centers = rng.normals(t * d).reshape(t, d)
        noise = task.noise_sigma * rng.normals(n * d).reshape(n, d)
        values = np.repeat(centers, rate, axis=0) + noise
        labels = values.reshape(t, rate, d).mean(axis=1)
        return TaskSample(FeatureStream(values, rate_hz=rate), labels)

    # cross_modal_match
    w_audio, w_visual = _render_maps(task)
    latents = rng.normals(t * d).reshape(t, d)
    noise = task.noise_sigma * rng.normals(n * d).reshape(n, d)
    values = np.repeat(latents @ w_audio, rate, axis=0) + noise
    labels = np.array([rng.integer(2) for _ in range(t)])
    shift = 1 + rng.integer(max(t - 1, 1))
    paired = latents.copy()
    mismatched = labels == 0
    # derangement by cyclic shift: mismatched seconds see another second's latent
    paired[mismatched] = latents[(np.arange(t) + shift) % t][mismatched]
    visual = paired @ w_visual
    return TaskSample(FeatureStream(values, rate_hz=rate), labels, visual)
