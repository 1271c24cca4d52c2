"""Hot numerical kernels with a compiled backend and a numpy fallback.

The Cython extension is used when it was built; set ``UMIKIT_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active implementation.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

_ck = None
if os.environ.get("UMIKIT_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels as _ck
    except ImportError:  # extension not built
        _ck = None

BACKEND = "cython" if _ck is not None else "numpy"


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def ncc_lag_grid(t_ref, ref, t_meas, meas, lags, backend: str | None = None) -> np.ndarray:
    """Normalized cross-correlation of ``ref(t)`` with ``meas(t + lag)`` per lag."""
    impl = _select(backend)
    if impl is _ck:
        return _ck.ncc_lag_grid(_f64(t_ref), _f64(ref), _f64(t_meas), _f64(meas), _f64(lags))
    return _pykernels.ncc_lag_grid(t_ref, ref, t_meas, meas, lags)


def first_order_track(x0, setpoints, dt: float, tau: float, backend: str | None = None) -> np.ndarray:
    """Integrate a first-order lag over a sequence of held setpoints."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    sp = np.asarray(setpoints, dtype=float)
    squeeze = sp.ndim == 1
    sp2 = sp.reshape(len(sp), -1)
    x = np.asarray(x0, dtype=float).reshape(-1)
    impl = _select(backend)
    if impl is _ck:
        out = _ck.first_order_track(_f64(x), _f64(sp2), float(dt), float(tau))
    else:
        out = _pykernels.first_order_track(x, sp2, dt, tau)
    return out.reshape(-1) if squeeze else out


def _select(backend: str | None):
    if backend is None:
        return _ck if _ck is not None else _pykernels
    if backend == "numpy":
        return _pykernels
    if backend == "cython":
        if _ck is None:
            raise RuntimeError("compiled kernels are not available")
        return _ck
    raise ValueError(f"unknown backend {backend!r}")


def available_backends() -> list[str]:
    return ["numpy"] + (["cython"] if _ck is not None else [])
