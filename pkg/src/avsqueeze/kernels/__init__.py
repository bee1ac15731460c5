"""Scan kernel backends.

Two interchangeable implementations of the selective-scan recurrence live
here: a compiled Cython extension (``_scan_cy``) and a pure-numpy fallback
(``_scan_py``). The compiled one is preferred when the extension built
successfully; set ``AVSQUEEZE_BACKEND=numpy`` or ``AVSQUEEZE_BACKEND=compiled``
to force a choice. Both expose the same two functions:

    scan_forward(x, delta, b, c, decay, *, path, chunk, want_hidden)
    scan_backward(x, delta, b, c, decay, h_all, dy)

Results agree across backends to floating-point roundoff (summation order
differs), and within a backend the sequential and chunked paths agree to the
tolerances promised by the scan module.
"""

from __future__ import annotations

import os

from .. import errors
from . import _scan_py

_FORCED = os.environ.get("AVSQUEEZE_BACKEND", "").strip().lower()

# No pre-assignment: a pre-existing `_scan_cy` attribute would make the
# from-import below skip loading the submodule and silently bind it.
if _FORCED != "numpy":
    try:
        from . import _scan_cy
    except ImportError:
        _scan_cy = None
else:
    _scan_cy = None

if _FORCED == "compiled" and _scan_cy is None:
    raise errors.ConfigurationError(
        "AVSQUEEZE_BACKEND=compiled but the compiled extension is not available"
    )
if _FORCED not in ("", "numpy", "compiled"):
    raise errors.ConfigurationError(
        f"unknown AVSQUEEZE_BACKEND value {_FORCED!r}; use 'numpy' or 'compiled'"
    )

_ACTIVE = _scan_cy if _scan_cy is not None else _scan_py


def backend_name() -> str:
    """Name of the backend in use: 'compiled' or 'numpy'."""
    return _ACTIVE.BACKEND_NAME


def available_backends() -> dict[str, object]:
    """Map of backend name to module, for benchmarking both side by side."""
    out: dict[str, object] = {"numpy": _scan_py}
    if _scan_cy is not None:
        out["compiled"] = _scan_cy
    return out


def get_backend(name: str):
    """Fetch a specific backend module by name."""
    backends = available_backends()
    if name not in backends:
        raise errors.ConfigurationError(
            f"backend {name!r} not available; have {sorted(backends)}"
        )
    return backends[name]


def scan_forward(x, delta, b, c, decay, *, path="chunked", chunk=64, want_hidden=False):
    return _ACTIVE.scan_forward(
        x, delta, b, c, decay, path=path, chunk=chunk, want_hidden=want_hidden
    )


def scan_backward(x, delta, b, c, decay, h_all, dy):
    return _ACTIVE.scan_backward(x, delta, b, c, decay, h_all, dy)
