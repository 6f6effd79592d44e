"""Pure-numpy dual coordinate descent, vectorized across problems sharing K.

Mirrors the compiled kernel in ``_cd.pyx`` sweep for sweep.
"""

from __future__ import annotations

import numpy as np


def violations(B: np.ndarray, R: np.ndarray, E: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Per-sample KKT violation of the bias-free dual, elementwise."""
    pos, neg = B > 0, B < 0
    at_up, at_lo = pos & (B >= C), neg & (B <= -C)
    v = np.maximum(np.abs(R) - E, 0.0)
    v = np.where(pos, np.abs(R - E), v)
    v = np.where(neg, np.abs(R + E), v)
    v = np.where(at_up, np.maximum(E - R, 0.0), v)
    v = np.where(at_lo, np.maximum(E + R, 0.0), v)
    return v


def solve_batch(K, Y, E, C, B, tol: float, max_sweeps: int):
    P, n = Y.shape
    diag = np.diag(K).copy()
    sweeps = np.zeros(P, dtype=np.int64)
    viol = np.zeros(P, dtype=np.float64)
    active = np.arange(P)
    R = Y - B @ K
    verified = np.zeros(P, dtype=bool)
    while active.size:
        v = violations(B[active], R[active], E[active], C[active]).max(axis=1)
        viol[active] = v
        ok = v <= tol
        done = ok & verified[active]
        recheck = ok & ~verified[active]
        if recheck.any():
            idx = active[recheck]
            R[idx] = Y[idx] - B[idx] @ K
            verified[idx] = True
        verified[active[~ok]] = False
        active = active[~done]
        # rows just re-verified are rechecked on the next pass without sweeping
        sweep_rows = active[~verified[active]]
        stalled = sweep_rows[sweeps[sweep_rows] >= max_sweeps]
        if stalled.size:
            active = np.setdiff1d(active, stalled, assume_unique=True)
            sweep_rows = sweep_rows[sweeps[sweep_rows] < max_sweeps]
        if sweep_rows.size == 0:
            continue
        sweeps[sweep_rows] += 1
        b, r = B[sweep_rows], R[sweep_rows]
        e, c = E[sweep_rows], C[sweep_rows]
        for i in range(n):
            kii = diag[i]
            z = b[:, i] + r[:, i] / kii
            thr = e[:, i] / kii
            nb = np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)
            np.clip(nb, -c[:, i], c[:, i], out=nb)
            d = nb - b[:, i]
            if np.any(d != 0.0):
                b[:, i] = nb
                r -= d[:, None] * K[i]
        B[sweep_rows], R[sweep_rows] = b, r
    return sweeps, viol
