"""Real shift generation for the low-rank Riccati iteration.

Two strategies over a window of recent residual factors: eigenpairs of a
small projected Hamiltonian matrix (picking the eigenvalue whose eigenvector
has the largest lower-block norm), and the spectrum of the projected
closed-loop matrix.  Each runs either once per iteration or in a cached mode
that consumes all stable eigenvalues of one projection before recomputing.

Only real shifts are produced: complex eigenvalues contribute their shared
real part once.  Emitted shifts are clamped to a positive floor, since the
iteration scales its update by sqrt(2 gamma).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import splu

from .errors import BasisFailureError, ShiftFailureError

__all__ = [
    "ShiftConfig",
    "ShiftCache",
    "build_basis",
    "hamiltonian_shifts",
    "projection_shifts",
    "next_shift",
]

STRATEGIES = ("hamiltonian", "projection")
MODES = ("cached", "per_iteration")


@dataclass
class ShiftConfig:
    """Strategy grid knob: which spectrum, how wide a window, how often."""

    strategy: str = "hamiltonian"
    window_s: int = 1
    mode: str = "cached"
    gamma_floor: float | None = None  # resolved to 1e-8 * |A|_1 by the solver

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.window_s < 1:
            raise ValueError("window_s must be >= 1")


@dataclass
class ShiftCache:
    """Pending shifts from one projection, oldest-priority first."""

    pending: list = field(default_factory=list)
    source_iteration: int = 0


def build_basis(s_history, s: int, fallback: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the span of the last ``s`` residual factors.

    Falls back to the rows of ``fallback`` (the current residual factor) when
    the history is empty, which is the only seed available before the first
    step.  Rank-deficient columns are dropped by pivoted QR.
    """
    mats = [m for m in list(s_history)[-s:] if m.size]
    if not mats:
        mats = [np.atleast_2d(np.asarray(fallback, dtype=float))]
    stack = np.vstack(mats)
    if not np.any(stack):
        raise BasisFailureError("cannot orthonormalize an all-zero factor stack")
    q, r, _ = sla.qr(stack.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(stack.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.count_nonzero(diag > tol))
    return q[:, :rank]


def _resolve_floor(cfg: ShiftConfig, p) -> float:
    if cfg.gamma_floor is not None:
        return cfg.gamma_floor
    a = p.a_sparse()
    return 1e-8 * float(np.max(np.asarray(abs(a).sum(axis=0)).ravel()))


def _projected_closed_loop(u: np.ndarray, p, f: np.ndarray):
    """U^T (A + B F) E^-1 U together with the E^-1 U workspace."""
    if p.e is None:
        w = u
    else:
        w = splu(p.e_sparse()).solve(np.ascontiguousarray(u))
    aw = p.a_sparse() @ w
    abar = u.T @ aw + (u.T @ p.b) @ (f @ w)
    return abar, w


def _dedupe_keep_order(gammas, rel=1e-12):
    kept = []
    for g in gammas:
        if all(abs(g - h) > rel * max(abs(g), abs(h)) for h in kept):
            kept.append(g)
    return kept


def projection_shifts(
    u: np.ndarray, p, f: np.ndarray, kpi: np.ndarray, *,
    gamma_floor: float, all_shifts: bool = False,
) -> ShiftCache:
    """Shifts from the stable spectrum of the projected closed-loop matrix.

    The primary shift negates the smallest real part; cached mode returns the
    negated real parts of every stable eigenvalue, most negative first.
    """
    abar, _ = _projected_closed_loop(u, p, f)
    lam = np.linalg.eigvals(abar)
    stable = lam[lam.real < 0]
    if stable.size == 0:
        raise ShiftFailureError("projected closed-loop matrix has no stable eigenvalue")
    order = np.argsort(stable.real)
    gammas = _dedupe_keep_order([max(-z.real, gamma_floor) for z in stable[order]])
    if not all_shifts:
        gammas = gammas[:1]
    return ShiftCache(pending=list(gammas))


def hamiltonian_shifts(
    u: np.ndarray, p, f: np.ndarray, kpi: np.ndarray, ccur: np.ndarray, *,
    gamma_floor: float, all_shifts: bool = False,
) -> ShiftCache:
    """Shifts from the eigenpairs of the projected 2d x 2d Hamiltonian matrix.

    Builds Abar = U^T (A + B F) E^-1 U, Gbar = (U^T B_k)(U^T B_k)^T with
    B_k = B Kpi^-1, and Qbar from the projected residual factor, then selects
    stable eigenvalues ordered by descending lower-block eigenvector norm.
    Ties prefer real eigenvalues, then real parts closest to zero.  With no
    stable eigenpair available it degrades to the projection strategy.
    """
    abar, w = _projected_closed_loop(u, p, f)
    bk = sla.solve_triangular(kpi, p.b.T, trans="T", lower=False).T
    ub = u.T @ bk
    gbar = ub @ ub.T
    cu = np.atleast_2d(ccur) @ w
    qbar = cu.T @ cu
    d = abar.shape[0]
    ham = np.block([[abar, gbar], [qbar, -abar.T]])
    lam, vecs = np.linalg.eig(ham)
    qnorm = np.linalg.norm(vecs[d:, :], axis=0)

    stable = lam.real < 0
    if not np.any(stable):
        return projection_shifts(
            u, p, f, kpi, gamma_floor=gamma_floor, all_shifts=all_shifts
        )
    idx = np.nonzero(stable)[0]
    # descending |q|, then smallest |Im|, then real part closest to zero
    order = idx[np.lexsort((-lam[idx].real, np.abs(lam[idx].imag), -qnorm[idx]))]
    gammas = _dedupe_keep_order([max(-lam[i].real, gamma_floor) for i in order])
    if not all_shifts:
        gammas = gammas[:1]
    return ShiftCache(pending=list(gammas))


def _compute(cfg: ShiftConfig, p, state, floor: float) -> ShiftCache:
    u = build_basis(state.s_history, cfg.window_s, state.ccur)
    all_shifts = cfg.mode == "cached"
    if cfg.strategy == "hamiltonian":
        cache = hamiltonian_shifts(
            u, p, state.f, state.kpi, state.ccur,
            gamma_floor=floor, all_shifts=all_shifts,
        )
    else:
        cache = projection_shifts(
            u, p, state.f, state.kpi, gamma_floor=floor, all_shifts=all_shifts
        )
    cache.source_iteration = state.k
    return cache


def next_shift(cfg: ShiftConfig, cache: ShiftCache | None, p, state):
    """Pop the next shift, recomputing per mode.

    Per-iteration mode always recomputes; cached mode consumes the pending
    list and recomputes only when it runs dry.
    """
    floor = _resolve_floor(cfg, p)
    if cfg.mode == "per_iteration" or cache is None or not cache.pending:
        cache = _compute(cfg, p, state, floor)
    gamma = cache.pending.pop(0)
    return gamma, cache
