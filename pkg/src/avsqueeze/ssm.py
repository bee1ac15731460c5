"""Selective state-space scan: diagonal recurrence with input-dependent mixing.

The recurrence, per step k and channel d with state width n:

    delta_k = softplus(x_k @ w_delta + bias_delta)          # [d], step size
    b_k     = x_k @ w_b + bias_b                            # [n], input mix
    c_k     = x_k @ w_c + bias_c                            # [n], output mix
    abar_k[d,i] = exp(-delta_k[d] * exp(a_log[d,i]))        # in (0,1)
    h_k[d,i] = abar_k[d,i] * h_{k-1}[d,i] + delta_k[d] * x_k[d] * b_k[i]
    y_k[d]   = sum_i c_k[i] * h_k[d,i]

with h_{-1} = 0. `linear_scan_reference` freezes the coefficients (zero
projection weights) and runs a plain Python loop; it is the oracle the fast
paths are tested against. `selective_scan` runs the full input-dependent form
through the kernel backends, either raw (numpy in, numpy out) or recorded on a
Tape for gradients. The recurrence enters the tape as a single custom node
whose backward is the hand-derived adjoint in the kernel module.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from . import tensor as T
from .errors import ContractError, DimensionError, InputError
from .rng import Rng
from .tensor import Tensor, Value, _softplus_raw

PARAM_NAMES = ("a_log", "w_delta", "bias_delta", "w_b", "bias_b", "w_c", "bias_c")

# softplus(bias) = 0.01 at init, so early steps barely move the state
_INIT_DELTA = 0.01


@dataclass(frozen=True)
class SsmParams:
    """Weights of one selective-scan mixer.

    Shapes for d_model=d, d_state=n: a_log [d,n]; w_delta [d,d];
    bias_delta [d]; w_b and w_c [d,n]; bias_b and bias_c [n].
    """

    a_log: Tensor
    w_delta: Tensor
    bias_delta: Tensor
    w_b: Tensor
    bias_b: Tensor
    w_c: Tensor
    bias_c: Tensor

    def __post_init__(self):
        d, n = self.a_log.shape
        expect = {
            "a_log": (d, n),
            "w_delta": (d, d),
            "bias_delta": (d,),
            "w_b": (d, n),
            "bias_b": (n,),
            "w_c": (d, n),
            "bias_c": (n,),
        }
        for f in fields(self):
            got = getattr(self, f.name).shape
            if got != expect[f.name]:
                raise DimensionError(
                    f"SsmParams.{f.name} has shape {got}, expected {expect[f.name]}"
                )

    @property
    def d_model(self) -> int:
        return self.a_log.shape[0]

    @property
    def d_state(self) -> int:
        return self.a_log.shape[1]

    def as_dict(self) -> dict[str, Tensor]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def init_ssm_params(d_model: int, d_state: int, rng: Rng) -> SsmParams:
    """Fresh weights: a_log = log(uniform[1,16]), projections N(0, 1/d_model),
    bias_delta solving softplus(b) = 0.01, mix biases zero."""
    shapes = ssm_param_shapes(d_model, d_state)
    data = {name: init_ssm_tensor(name, shapes[name], rng) for name in PARAM_NAMES}
    return SsmParams(**{k: Tensor(v) for k, v in data.items()})


def ssm_param_shapes(d_model: int, d_state: int) -> dict[str, tuple[int, ...]]:
    return {
        "a_log": (d_model, d_state),
        "w_delta": (d_model, d_model),
        "bias_delta": (d_model,),
        "w_b": (d_model, d_state),
        "bias_b": (d_state,),
        "w_c": (d_model, d_state),
        "bias_c": (d_state,),
    }


def init_ssm_tensor(name: str, shape: tuple[int, ...], rng: Rng) -> np.ndarray:
    if name == "a_log":
        u = rng.uniforms(int(np.prod(shape)))
        return np.log(1.0 + 15.0 * u.reshape(shape))
    if name == "bias_delta":
        return np.full(shape, float(np.log(np.expm1(_INIT_DELTA))))
    if name in ("bias_b", "bias_c"):
        return np.zeros(shape)
    d_model = shape[0]
    scale = 1.0 / np.sqrt(d_model)
    return scale * rng.normals(int(np.prod(shape))).reshape(shape)


# ---------------------------------------------------------------------------
# input plumbing


def _stream_values(x) -> np.ndarray:
    values = getattr(x, "values", x)
    if isinstance(values, Tensor):
        values = values.data
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"scan input must be [N, d], got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ContractError("scan input stream is empty")
    return np.ascontiguousarray(arr)


def _check_nan(arr: np.ndarray) -> None:
    if np.isnan(arr).any():
        raise InputError("scan input contains NaN values")


# ---------------------------------------------------------------------------
# constant-coefficient reference (the oracle path)


def linear_scan_constant(
    abar: np.ndarray, bbar: np.ndarray, c: np.ndarray, x
) -> np.ndarray:
    """Literal sequential recurrence with fixed coefficients.

    abar, bbar: [d, n]; c: [n]; x: [N, d]. Returns y [N, d] with
    h_k = abar * h_{k-1} + bbar * x_k and y_k = h_k @ c. Plain loop on
    purpose: this function is the standard the fast paths are held to.
    """
    values = _stream_values(x)
    abar = np.asarray(abar, dtype=np.float64)
    bbar = np.asarray(bbar, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n_steps, d = values.shape
    h = np.zeros(abar.shape)
    y = np.empty((n_steps, d))
    for k in range(n_steps):
        h = abar * h + bbar * values[k][:, None]
        y[k] = h @ c
    return y


def linear_scan_reference(params: SsmParams, x) -> Tensor:
    """Constant-coefficient scan defined only for frozen params.

    Requires all projection weights to be exactly zero so the coefficients
    reduce to their bias terms; raises a contract error otherwise.
    """
    for name in ("w_delta", "w_b", "w_c"):
        if np.any(getattr(params, name).data != 0.0):
            raise ContractError(
                f"linear_scan_reference needs constant coefficients; {name} is nonzero"
            )
    values = _stream_values(x)
    delta = _softplus_raw(params.bias_delta.data)
    abar = np.exp(-delta[:, None] * np.exp(params.a_log.data))
    bbar = delta[:, None] * params.bias_b.data[None, :]
    return Tensor(linear_scan_constant(abar, bbar, params.bias_c.data, values))


# ---------------------------------------------------------------------------
# selective scan, raw mode


def selective_projections(
    params: SsmParams, values: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-step (delta, b, c) plus the shared decay matrix, all numpy."""
    delta = _softplus_raw(values @ params.w_delta.data + params.bias_delta.data)
    b = values @ params.w_b.data + params.bias_b.data
    c = values @ params.w_c.data + params.bias_c.data
    decay = np.exp(params.a_log.data)
    return delta, b, c, decay


def selective_scan(
    params: SsmParams, x, *, path: str = "chunked", chunk: int = 64
) -> Tensor:
    """Input-dependent scan; output shape equals input shape [N, d]."""
    values = _stream_values(x)
    _check_nan(values)
    if values.shape[1] != params.d_model:
        raise DimensionError(
            f"input width {values.shape[1]} does not match d_model {params.d_model}"
        )
    delta, b, c, decay = selective_projections(params, values)
    y, _ = kernels.scan_forward(
        values, delta, b, c, decay, path=path, chunk=chunk, want_hidden=False
    )
    return Tensor(y)


def bidirectional_scan(
    params_fwd: SsmParams,
    params_bwd: SsmParams,
    x,
    w_out: Tensor | None = None,
    *,
    path: str = "chunked",
    chunk: int = 64,
) -> Tensor:
    """Forward scan plus time-reversed scan, summed; optional shared output
    projection applied to the sum."""
    values = _stream_values(x)
    _check_nan(values)
    fwd = selective_scan(params_fwd, values, path=path, chunk=chunk).data
    rev_in = np.ascontiguousarray(values[::-1])
    bwd = selective_scan(params_bwd, rev_in, path=path, chunk=chunk).data[::-1]
    fused = fwd + bwd
    if w_out is not None:
        fused = fused @ w_out.data
    return Tensor(fused, check_finite=False)


# ---------------------------------------------------------------------------
# selective scan, tape mode


def scan_value(
    x: Value,
    delta: Value,
    b: Value,
    c: Value,
    decay: Value,
    *,
    path: str = "chunked",
    chunk: int = 64,
    grad: bool = True,
) -> Value:
    """The recurrence as one tape node; backward is the kernel adjoint.

    With grad=False the hidden-state history is not kept and the node is
    recorded as a dead end (forward-only use, e.g. plain compression).
    """
    y, h_all = kernels.scan_forward(
        x.data, delta.data, b.data, c.data, decay.data,
        path=path, chunk=chunk, want_hidden=grad,
    )
    if not grad:
        return x.tape._record(y, (), None)
    x_d, delta_d, b_d, c_d, decay_d = x.data, delta.data, b.data, c.data, decay.data

    def bwd(g):
        return kernels.scan_backward(x_d, delta_d, b_d, c_d, decay_d, h_all, g)

    return x.tape._record(y, (x, delta, b, c, decay), bwd)


def selective_scan_value(
    x: Value,
    p: dict[str, Value],
    *,
    path: str = "chunked",
    chunk: int = 64,
    grad: bool = True,
) -> Value:
    """Tape-mode selective scan; `p` maps PARAM_NAMES to Values."""
    delta = T.softplus(T.add_rowvec(x @ p["w_delta"], p["bias_delta"]))
    b = T.add_rowvec(x @ p["w_b"], p["bias_b"])
    c = T.add_rowvec(x @ p["w_c"], p["bias_c"])
    decay = T.exp(p["a_log"])
    return scan_value(x, delta, b, c, decay, path=path, chunk=chunk, grad=grad)


def bidirectional_scan_value(
    x: Value,
    p_fwd: dict[str, Value],
    p_bwd: dict[str, Value],
    w_out: Value | None = None,
    *,
    path: str = "chunked",
    chunk: int = 64,
    grad: bool = True,
) -> Value:
    fwd = selective_scan_value(x, p_fwd, path=path, chunk=chunk, grad=grad)
    rev = T.reverse_rows(
        selective_scan_value(
            T.reverse_rows(x), p_bwd, path=path, chunk=chunk, grad=grad
        )
    )
    fused = fwd + rev
    if w_out is not None:
        fused = fused @ w_out
    return fused
