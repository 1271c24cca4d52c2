"""Reference numpy implementations of the hot loops."""

from __future__ import annotations

import numpy as np

# rows of the (lags x samples) interpolation matrix built per batch
_BATCH_CELLS = 4_000_000


def ncc_lag_grid(t_ref, ref, t_meas, meas, lags) -> np.ndarray:
    t_ref = np.asarray(t_ref, dtype=float)
    ref = np.asarray(ref, dtype=float)
    t_meas = np.asarray(t_meas, dtype=float)
    meas = np.asarray(meas, dtype=float)
    lags = np.asarray(lags, dtype=float)
    out = np.empty(len(lags))
    if len(t_ref) < 2 or len(t_meas) < 1:
        out[:] = np.nan
        return out
    r = ref - ref.mean()
    var_r = float(r @ r)
    step = max(1, _BATCH_CELLS // len(t_ref))
    for s in range(0, len(lags), step):
        lag_batch = lags[s : s + step]
        q = t_ref[None, :] + lag_batch[:, None]
        b = np.interp(q.ravel(), t_meas, meas).reshape(q.shape)
        b -= b.mean(axis=1, keepdims=True)
        var_m = np.einsum("ij,ij->i", b, b)
        cov = b @ r
        with np.errstate(invalid="ignore", divide="ignore"):
            ncc = cov / np.sqrt(var_m * var_r)
        ncc[(var_m <= 0.0) | (var_r <= 0.0)] = 0.0
        out[s : s + step] = ncc
    return out


def first_order_track(x0, setpoints, dt: float, tau: float) -> np.ndarray:
    setpoints = np.asarray(setpoints, dtype=float)
    a = 1.0 - np.exp(-dt / tau)
    s = np.array(x0, dtype=float)
    out = np.empty_like(setpoints)
    for i in range(len(setpoints)):
        s = s + a * (setpoints[i] - s)
        out[i] = s
    return out
