"""Bias-free epsilon-SVR with per-sample tube widths and penalties.

The dual solved here is::

    min_b  1/2 b^T K b - y^T b + sum_i eps_i |b_i|     s.t.  |b_i| <= c_i

with the estimate ``x = K b``.  This is the ``1/2 ||w||^2 + sum C_i xi_i``
primal with two slacks per sample and no bias term, so there is no
``sum b_i = 0`` constraint.

Backends: a compiled Cython kernel (``_cd``) and a numpy fallback
(``_cd_py``) running the same cyclic coordinate descent.  The compiled
kernel is used when importable unless ``SVRDENOISE_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from . import _cd_py
from ._cd_py import violations

try:
    if os.environ.get("SVRDENOISE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _cd as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_BACKENDS = {"python": _cd_py.solve_batch}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled.solve_batch

DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 100_000
REFERENCE_MAX_N = 64


class SvrError(ValueError):
    """Invalid SVR problem."""


class SvrConvergenceError(RuntimeError):
    """The solver hit its iteration limit before meeting the tolerance."""


def available_backends() -> List[str]:
    return list(_BACKENDS)


def _check_kernel(K: np.ndarray, psd_check: bool = True) -> None:
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise SvrError("K must be square")
    if not np.all(np.isfinite(K)):
        raise SvrError("K has non-finite entries")
    if np.max(np.abs(K - K.T), initial=0.0) > 1e-12:
        raise SvrError("K is not symmetric")
    if np.any(np.diag(K) <= 0):
        raise SvrError("K has a non-positive diagonal")
    if psd_check:
        w = np.linalg.eigvalsh(K)
        if w[0] < -1e-10 * max(w[-1], 1e-300):
            raise SvrError(f"K is not positive semidefinite (min eigenvalue {w[0]:.3g})")


@dataclass(frozen=True)
class SvrProblem:
    K: np.ndarray
    y: np.ndarray
    eps: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        K = np.ascontiguousarray(self.K, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64).ravel()
        n = y.size
        eps = np.ascontiguousarray(np.broadcast_to(np.asarray(self.eps, dtype=np.float64), (n,)))
        c = np.ascontiguousarray(np.broadcast_to(np.asarray(self.c, dtype=np.float64), (n,)))
        if n == 0:
            raise SvrError("empty problem")
        if K.shape != (n, n):
            raise SvrError(f"K has shape {K.shape}, expected {(n, n)}")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(eps)) and np.all(np.isfinite(c))):
            raise SvrError("non-finite problem data")
        if np.any(eps < 0):
            raise SvrError("eps must be nonnegative")
        if np.any(c <= 0):
            raise SvrError("c must be positive")
        _check_kernel(K, psd_check=False)
        for name, val in (("K", K), ("y", y), ("eps", eps), ("c", c)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class SvrSolution:
    alpha: np.ndarray
    estimate: np.ndarray
    objective: float
    kkt_max_violation: float
    iterations: int = 0


def objective(prob: SvrProblem, alpha: np.ndarray) -> float:
    a = np.asarray(alpha, dtype=np.float64)
    return float(0.5 * a @ prob.K @ a - prob.y @ a + prob.eps @ np.abs(a))


def _finish(prob: SvrProblem, alpha: np.ndarray, iterations: int) -> SvrSolution:
    est = prob.K @ alpha
    v = violations(alpha, prob.y - est, prob.eps, prob.c)
    alpha.setflags(write=False)
    est.setflags(write=False)
    return SvrSolution(alpha, est, objective(prob, alpha), float(v.max()), int(iterations))


def solve(prob: SvrProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_SWEEPS,
          backend: str | None = None) -> SvrSolution:
    """Solve one problem to KKT tolerance ``tol``; ``max_iter`` counts full sweeps."""
    if tol <= 0:
        raise SvrError("tol must be positive")
    _check_kernel(prob.K)
    fn = _BACKENDS[backend or BACKEND]
    B = np.zeros((1, prob.n))
    sweeps, viol = fn(prob.K, prob.y[None, :].copy(), prob.eps[None, :].copy(),
                      prob.c[None, :].copy(), B, float(tol), int(max_iter))
    if viol[0] > tol:
        raise SvrConvergenceError(
            f"no convergence in {max_iter} sweeps (KKT violation {viol[0]:.3g} > {tol:.3g})")
    return _finish(prob, B[0].copy(), sweeps[0])


def solve_batch(K: np.ndarray, Y: np.ndarray, E: np.ndarray, C: np.ndarray,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_SWEEPS,
                init: np.ndarray | None = None, backend: str | None = None):
    """Solve ``P`` independent problems that share the kernel ``K``.

    ``Y``, ``E`` and ``C`` are ``(P, n)`` (``E`` and ``C`` may broadcast).
    ``init`` warm-starts the dual coefficients.  Returns
    ``(alpha, sweeps, max_violation)``; non-converged rows are reported via
    ``max_violation > tol`` rather than raised.  The kernel is assumed
    valid (see :func:`svrdenoise.kern.patch_kernel`).
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    P, n = Y.shape
    E = np.ascontiguousarray(np.broadcast_to(E, (P, n)), dtype=np.float64)
    C = np.ascontiguousarray(np.broadcast_to(C, (P, n)), dtype=np.float64)
    if K.shape != (n, n):
        raise SvrError("K does not match the problem size")
    if np.any(E < 0) or np.any(C <= 0):
        raise SvrError("eps must be nonnegative and c positive")
    if init is None:
        B = np.zeros((P, n))
    else:
        B = np.clip(np.array(init, dtype=np.float64, order="C"), -C, C)
    fn = _BACKENDS[backend or BACKEND]
    sweeps, viol = fn(K, Y, E, C, B, float(tol), int(max_iter))
    return B, sweeps, viol


def reference_solve(prob: SvrProblem, tol: float = 1e-10, max_iter: int = 200_000) -> SvrSolution:
    """Validation oracle: accelerated projected gradient on the split box QP,
    followed by an exact solve on the identified free set.

    Variables ``a+, a- in [0, c]`` with ``b = a+ - a-``.  Limited to small
    problems (``n <= 64``).
    """
    n = prob.n
    if n > REFERENCE_MAX_N:
        raise SvrError(f"reference_solve is limited to n <= {REFERENCE_MAX_N}, got {n}")
    _check_kernel(prob.K)
    K, y, e, c = prob.K, prob.y, prob.eps, prob.c
    L = 2.0 * max(np.linalg.eigvalsh(K)[-1], 1e-12)
    step = 1.0 / L

    def grad(ap, am):
        g = K @ (ap - am) - y
        return g + e, -g + e

    ap = np.zeros(n); am = np.zeros(n)
    xp, xm = ap.copy(), am.copy()
    t = 1.0
    prev_obj = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        gp, gm = grad(xp, xm)
        np_ = np.clip(xp - step * gp, 0.0, c)
        nm_ = np.clip(xm - step * gm, 0.0, c)
        # projected-gradient stationarity of the new point
        pgp, pgm = grad(np_, nm_)
        sp = np.where((np_ <= 0) & (pgp > 0) | (np_ >= c) & (pgp < 0), 0.0, pgp)
        sm = np.where((nm_ <= 0) & (pgm > 0) | (nm_ >= c) & (pgm < 0), 0.0, pgm)
        obj = objective(prob, np_ - nm_) + e @ (np.minimum(np_, nm_) * 2.0)
        if obj > prev_obj:           # adaptive restart
            t = 1.0
            xp, xm = ap.copy(), am.copy()
            prev_obj = np.inf
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        xp = np_ + mom * (np_ - ap)
        xm = nm_ + mom * (nm_ - am)
        ap, am, t, prev_obj = np_, nm_, t_new, obj
        if max(np.abs(sp).max(), np.abs(sm).max()) < tol:
            break
    beta = _polish(prob, ap - am, tol)
    return _finish(prob, beta, it)


def _polish(prob: SvrProblem, beta: np.ndarray, tol: float) -> np.ndarray:
    """Re-solve the stationarity equations on the free set of ``beta``.

    Keeps the polished point only if it is feasible, sign-consistent and
    has a smaller KKT violation.
    """
    K, y, e, c = prob.K, prob.y, prob.eps, prob.c
    scale = max(1.0, float(np.abs(beta).max(initial=0.0)))
    delta = 1e-7 * scale
    at_up = beta >= c - delta
    at_lo = beta <= -c + delta
    zero = np.abs(beta) <= delta
    free = ~(at_up | at_lo | zero)
    best = beta
    best_v = violations(beta, y - K @ beta, e, c).max()
    if not free.any():
        cand = np.where(at_up, c, np.where(at_lo, -c, 0.0))
    else:
        s = np.sign(beta[free])
        fixed = np.where(at_up, c, np.where(at_lo, -c, 0.0))
        rhs = y[free] - s * e[free] - K[np.ix_(free, ~free)] @ fixed[~free]
        try:
            sol = np.linalg.solve(K[np.ix_(free, free)], rhs)
        except np.linalg.LinAlgError:
            return best
        if np.any(np.sign(sol) != s) or np.any(np.abs(sol) > c[free]):
            return best
        cand = fixed.copy()
        cand[free] = sol
    v = violations(cand, y - K @ cand, e, c).max()
    return cand if v < best_v else best


def kkt_report(prob: SvrProblem, sol: SvrSolution | np.ndarray, tol: float = DEFAULT_TOL) -> Dict:
    """Classify samples against the tube and report KKT violations.

    Labels: ``inside-tube`` (|r| < eps - tol, alpha = 0), ``on-tube``
    (|r| within tol of eps), ``outside-tube`` (alpha at the box bound with
    |r| > eps) and ``violating`` (any KKT condition broken beyond ``tol``,
    including ``|alpha_i| > c_i``).
    """
    alpha = np.asarray(getattr(sol, "alpha", sol), dtype=np.float64)
    if alpha.shape != prob.y.shape:
        raise SvrError("solution does not match the problem size")
    r = prob.y - prob.K @ alpha
    v = violations(alpha, r, prob.eps, prob.c)
    over = np.maximum(np.abs(alpha) - prob.c, 0.0)
    v = np.maximum(v, over)
    labels = np.empty(prob.n, dtype=object)
    absr = np.abs(r)
    labels[:] = "on-tube"
    labels[absr < prob.eps - tol] = "inside-tube"
    labels[absr > prob.eps + tol] = "outside-tube"
    labels[v > tol] = "violating"
    return {
        "labels": labels.tolist(),
        "residual": r,
        "violation": v,
        "max_violation": float(v.max()),
        "counts": {k: int(np.sum(labels == k)) for k in
                   ("inside-tube", "on-tube", "outside-tube", "violating")},
    }


def kkt_report_csv(report: Dict) -> str:
    lines = ["index,label,residual,violation"]
    for i, (lab, r, v) in enumerate(zip(report["labels"], report["residual"], report["violation"])):
        lines.append(f"{i},{lab},{r:.6g},{v:.6g}")
    return "\n".join(lines) + "\n"


__all__ = [
    "SvrProblem", "SvrSolution", "SvrError", "SvrConvergenceError", "solve", "solve_batch",
    "reference_solve", "kkt_report", "kkt_report_csv", "objective", "violations",
    "BACKEND", "available_backends",
]
