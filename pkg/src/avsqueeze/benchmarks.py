"""Wall-clock measurements backing the linear-time claim.

`scaling_run` times the full selective scan (projections plus recurrence)
over a ladder of sequence lengths and fits seconds = a*n + b by least
squares; a good fit (R^2 near 1) is the evidence that runtime grows linearly
in sequence length. `compare_backends` times the raw kernel of every built
backend on identical inputs so the compiled extension can be judged against
the numpy fallback.

Each measurement is the minimum over `reps` runs, which rejects scheduler
noise better than averaging.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import kernels, ssm
from .rng import Rng, derive_seed


@dataclass(frozen=True)
class ScalingResult:
    ns: tuple[int, ...]
    seconds: tuple[float, ...]
    fit_a: float
    fit_b: float
    fit_r2: float


@dataclass(frozen=True)
class BackendTiming:
    backend: str
    n: int
    seconds: float


def linear_fit_r2(ns, seconds) -> tuple[float, float, float]:
    """Least-squares seconds = a*n + b; returns (a, b, R^2)."""
    x = np.asarray(ns, dtype=np.float64)
    y = np.asarray(seconds, dtype=np.float64)
    a, b = np.polyfit(x, y, 1)
    pred = a * x + b
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(a), float(b), r2


def _bench_inputs(n: int, d_model: int, d_state: int, seed: int):
    rng = Rng(derive_seed(seed, f"bench{n}"))
    params = ssm.init_ssm_params(d_model, d_state, rng.substream("params"))
    # uniform inputs are cheap to draw at large n and exercise the same code
    x = rng.uniforms(n * d_model).reshape(n, d_model) - 0.5
    return params, x


def _min_time(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def scaling_run(
    ns: list[int],
    d_model: int = 32,
    d_state: int = 16,
    *,
    reps: int = 3,
    seed: int = 0,
    path: str = "chunked",
    chunk: int = 64,
) -> ScalingResult:
    """Time selective_scan at each n and fit the linear model."""
    seconds = []
    for n in ns:
        params, x = _bench_inputs(n, d_model, d_state, seed)
        ssm.selective_scan(params, x, path=path, chunk=chunk)  # warm up
        seconds.append(
            _min_time(lambda: ssm.selective_scan(params, x, path=path, chunk=chunk), reps)
        )
    a, b, r2 = linear_fit_r2(ns, seconds)
    return ScalingResult(
        ns=tuple(ns), seconds=tuple(seconds), fit_a=a, fit_b=b, fit_r2=r2
    )


def scaling_lines(result: ScalingResult) -> list[str]:
    lines = [
        f"n={n} seconds={s:.6f}"
        for n, s in zip(result.ns, result.seconds)
    ]
    lines.append(
        f"fit_a={result.fit_a:.3e} fit_b={result.fit_b:.3e} "
        f"fit_r2={result.fit_r2:.4f}"
    )
    return lines


def compare_backends(
    ns: list[int],
    d_model: int = 32,
    d_state: int = 16,
    *,
    reps: int = 3,
    seed: int = 0,
    path: str = "chunked",
    chunk: int = 64,
) -> list[BackendTiming]:
    """Time every available backend's kernel on identical inputs."""
    rows = []
    for n in ns:
        params, x = _bench_inputs(n, d_model, d_state, seed)
        delta, b, c, decay = ssm.selective_projections(params, x)
        for name, backend in sorted(kernels.available_backends().items()):
            def run():
                backend.scan_forward(
                    x, delta, b, c, decay, path=path, chunk=chunk, want_hidden=False
                )
            run()  # warm up
            rows.append(BackendTiming(backend=name, n=n, seconds=_min_time(run, reps)))
    return rows


def backend_lines(rows: list[BackendTiming]) -> list[str]:
    return [
        f"backend={r.backend} n={r.n} seconds={r.seconds:.6f}" for r in rows
    ]
