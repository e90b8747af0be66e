"""The practical low-rank RADI-type iteration and its dense prototype.

One iteration of the practical engine: draw a positive shift, push the
current residual factor and the accumulated feedback through one sparse
factorization of A - gamma*E (sharing it via the low-rank SMW correction),
append a rank-l block to the solution factor, refresh the residual factor and
the feedback/accumulator pair, compress the stacked residual factor by a
truncated SVD, and account the discarded energy exactly.  The trace-norm
residual is then available for free as the squared Frobenius norm of the
kept factor plus the accumulated discard.

The dense prototype (`alg1_init`/`alg1_step`) updates the full coefficient
matrices explicitly each iteration and exists as an equivalence oracle; its
residual factor grows by a factor r per step, so it is only usable for a
handful of iterations at small n.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegenerateProblemError,
    NoProgressError,
    NumericalBreakdownError,
    ShiftRejectionError,
    SpdViolationError,
)
from .kernels import (
    StackedMat,
    TruncationResult,
    chol_spd,
    factor_shifted,
    kron_gram,
    ltimes,
    materialize_stack,
    trunc_svd,
)
from .problems import StandardProblem
from .report import IterationRecord, RunReport
from .shifts import ShiftConfig, next_shift

__all__ = [
    "SolveOptions",
    "SolverState",
    "IterationScratch",
    "init_state",
    "step_once",
    "nres_trace",
    "radi_solve",
    "alg1_init",
    "alg1_step",
    "Alg1State",
]

MAX_SHIFT_REJECTIONS = 5


@dataclass
class SolveOptions:
    """Stopping, truncation, and shift knobs for one solve.

    ``trunc_rel`` is relative to the trace norm of the residual at zero, so
    the default pairs 1e-12 accuracy with 300 iterations.  ``cap_cols`` caps
    the residual-factor row count (default 10*r*l), forcing truncation by
    energy beyond it; ``max_cols_xi`` optionally stops the run when the
    solution factor reaches a width budget (reported as flag "m").  With
    ``stop_on_stall`` the run also stops once the residual net of the
    accumulated truncation debt falls below tolerance (flag "t").
    """

    tol_nres: float = 1e-12
    max_iter: int = 300
    trunc_rel: float = 3.33e-15
    cap_cols: int | None = None
    shift: ShiftConfig = field(default_factory=ShiftConfig)
    stop_on_stall: bool = False
    max_cols_xi: int | None = None
    shift_sequence: list | None = None  # replay externally supplied shifts, cycled
    record_omega: bool = False  # keep the discarded factors (dense test mode)
    lu_options: dict | None = None

    def __post_init__(self):
        if self.tol_nres <= 0 or self.trunc_rel <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolverState:
    """Mutable per-solve state: factors, feedback, accumulators, history."""

    xi: np.ndarray
    f: np.ndarray
    kpi: np.ndarray
    ccur: np.ndarray
    nu0: float
    nu_omega: float = 0.0
    k: int = 0
    s_history: deque = field(default_factory=lambda: deque(maxlen=8))
    omega_factors: list = field(default_factory=list)

    @property
    def xi_width(self) -> int:
        return self.xi.shape[1]


@dataclass
class IterationScratch:
    """Intermediate quantities of one iteration, exposed for tests/replay."""

    gamma: float
    c_a: np.ndarray
    f_a: np.ndarray
    c_gamma: np.ndarray
    y: np.ndarray
    yhat: StackedMat
    n_factor: np.ndarray
    s: np.ndarray
    c_m: StackedMat
    k_factor: np.ndarray
    m_factor: np.ndarray
    trunc: TruncationResult
    t_solve: float = 0.0
    t_ltimes: float = 0.0
    t_svd: float = 0.0
    t_total: float = 0.0


def init_state(p: StandardProblem, window_s: int = 8) -> SolverState:
    n = p.n
    c = np.array(p.c, dtype=float)
    return SolverState(
        xi=np.zeros((n, 0)),
        f=np.array(p.f0, dtype=float),
        kpi=np.array(p.kpi0, dtype=float),
        ccur=c,
        nu0=float(np.linalg.norm(c) ** 2),
        s_history=deque(maxlen=max(window_s, 1)),
    )


def nres_trace(state: SolverState) -> float:
    """Trace-norm normalized residual including accumulated truncation debt."""
    if state.nu0 <= 0.0:
        raise DegenerateProblemError("residual at zero vanishes; the solution is X = 0")
    return (float(np.linalg.norm(state.ccur) ** 2) + state.nu_omega) / state.nu0


def _right_tri_solve(t: np.ndarray, x: np.ndarray) -> np.ndarray:
    """x @ t^-1 for upper-triangular t."""
    return sla.solve_triangular(t, x.T, trans="T", lower=False).T


def step_once(
    p: StandardProblem,
    state: SolverState,
    gamma: float,
    opts: SolveOptions | None = None,
) -> tuple[SolverState, IterationScratch]:
    """One full iteration at a fixed shift; commits to state only on success.

    Raises :class:`ShiftRejectionError` (recoverable with another shift) when
    the shifted factorization or the small SMW core fails, and
    :class:`SpdViolationError` when one of the Gram factorizations loses
    definiteness.
    """
    if gamma <= 0:
        raise ValueError("shift must be positive")
    opts = opts or SolveOptions()
    t_start = time.perf_counter()
    n, m, r = p.n, p.m, p.r
    ell = state.ccur.shape[0]
    e = p.e_sparse()
    sqrt2g = np.sqrt(2.0 * gamma)
    interleaved = not p.kron_flip

    # Rows of C and F through one sparse factorization of A - gamma*E.
    t0 = time.perf_counter()
    fac = factor_shifted(p.a_sparse(), gamma, e=e, lu_options=opts.lu_options)
    both = fac.row_solve(np.vstack([state.ccur, state.f]))
    c_a, f_a = both[:ell], both[ell:]
    c_ab = c_a @ p.b
    f_ab = f_a @ p.b
    lu, piv = sla.lu_factor(np.eye(m) + f_ab)
    diag = np.abs(np.diag(lu))
    if diag.size and diag.min() <= 1e3 * np.finfo(float).eps * max(diag.max(), 1.0):
        raise ShiftRejectionError("I + F_A B is numerically singular at this shift")
    t_mat = sla.lu_solve((lu, piv), f_a)  # (I + F_A B)^-1 F_A
    c_gamma = sqrt2g * (c_a - c_ab @ t_mat)
    t_solve = time.perf_counter() - t0

    # Stochastic couplings of the fresh residual factor.
    t0 = time.perf_counter()
    y = _right_tri_solve(state.kpi, sla.lu_solve((lu, piv), c_ab.T, trans=1).T)
    cm = ltimes(c_gamma, p.ahat)
    yhat = ltimes(c_gamma, p.bhat)
    t_ltimes = time.perf_counter() - t0

    n_factor = chol_spd(np.eye(ell) + y @ y.T).T  # lower, N N^T = I + Y Y^T
    s = sla.solve_triangular(n_factor, c_gamma, lower=True)

    # Residual-factor and feedback updates share sqrt(2g) N^-T S (times E).
    w8 = sqrt2g * sla.solve_triangular(n_factor, s, trans="T", lower=True)
    w8e = w8 if e is None else np.asarray((e.T @ w8.T).T)
    c_top = state.ccur + w8e
    f_mid = state.f - sla.solve_triangular(state.kpi, y.T @ w8e, lower=False)

    cm_blocks = [blk + yh @ f_mid for blk, yh in zip(cm.blocks, yhat.blocks)]
    yhat_blocks = [_right_tri_solve(state.kpi, yh) for yh in yhat.blocks]

    # Gram of the scaled stochastic couplings and the accumulator update.
    z_blocks = [
        sla.solve_triangular(
            n_factor, sla.solve_triangular(n_factor, yh, lower=True),
            trans="T", lower=True,
        )
        for yh in yhat_blocks
    ]
    g10 = np.eye(m)
    for yh, z in zip(yhat_blocks, z_blocks):
        g10 = g10 + yh.T @ z
    k_factor = chol_spd(0.5 * (g10 + g10.T))
    kpi_new = k_factor @ state.kpi

    w12 = np.zeros((m, n))
    for z, blk in zip(z_blocks, cm_blocks):
        w12 += z.T @ blk
    f_new = f_mid - sla.solve_triangular(
        kpi_new, sla.solve_triangular(k_factor, w12, trans="T", lower=False), lower=False
    )

    # Block Gram, its Cholesky factor, and the compressed residual factor.
    if r > 1:
        yh_mat = materialize_stack(yhat_blocks, m, interleaved)
        gram = kron_gram(np.eye(ell) + y @ y.T, r - 1, p.kron_flip) + yh_mat @ yh_mat.T
        m_factor = chol_spd(0.5 * (gram + gram.T)).T  # lower, M M^T = gram
        cm_mat = materialize_stack(cm_blocks, n, interleaved)
        stacked = np.vstack([c_top, sla.solve_triangular(m_factor, cm_mat, lower=True)])
    else:
        m_factor = np.zeros((0, 0))
        stacked = c_top

    t0 = time.perf_counter()
    cap = opts.cap_cols if opts.cap_cols is not None else 10 * r * max(p.l, 1)
    trunc = trunc_svd(stacked, tau_abs=opts.trunc_rel * state.nu0, cap=cap)
    t_svd = time.perf_counter() - t0

    if opts.record_omega:
        kept = stacked @ trunc.vt.T  # Omega = stacked (I - V V^T)
        state.omega_factors.append(stacked - kept @ trunc.vt)

    # Commit.
    state.xi = np.hstack([state.xi, s.T])
    state.ccur = trunc.factor()
    state.f = f_new
    state.kpi = kpi_new
    state.nu_omega += trunc.discarded_sq_trace
    state.k += 1
    state.s_history.append(s)

    scratch = IterationScratch(
        gamma=gamma,
        c_a=c_a,
        f_a=f_a,
        c_gamma=c_gamma,
        y=y,
        yhat=StackedMat.from_blocks(yhat_blocks, block_rows=ell, block_cols=m),
        n_factor=n_factor,
        s=s,
        c_m=StackedMat.from_blocks(cm_blocks, block_rows=ell, block_cols=n),
        k_factor=k_factor,
        m_factor=m_factor,
        trunc=trunc,
        t_solve=t_solve,
        t_ltimes=t_ltimes,
        t_svd=t_svd,
        t_total=time.perf_counter() - t_start,
    )
    return state, scratch


def radi_solve(p: StandardProblem, opts: SolveOptions | None = None):
    """Run the iteration to the stopping rule; returns (state, report).

    Stops when the normalized trace residual (kept energy plus truncation
    debt over the initial energy) drops below tolerance, when the iteration
    budget runs out, when the stall rule fires, or when the solution factor
    hits its width budget.  A rejected shift is retried with the next
    candidate up to a small budget before aborting.
    """
    opts = opts or SolveOptions()
    wall0 = time.perf_counter()
    state = init_state(p, window_s=opts.shift.window_s)
    report = RunReport(backend="scipy-superlu", config=_echo_options(opts))
    report.rows.append(
        IterationRecord(
            k=0,
            gamma=np.nan,
            nres=1.0 if state.nu0 > 0 else 0.0,
            cols_c=state.ccur.shape[0],
            cols_xi=0,
            nu_omega=0.0,
        )
    )
    if state.nu0 == 0.0 or 1.0 <= opts.tol_nres:
        report.converged = True
        report.final_nres = report.rows[0].nres = 0.0 if state.nu0 == 0.0 else 1.0
        report.wall_time = time.perf_counter() - wall0
        return state, report

    cache = None
    seq = list(opts.shift_sequence) if opts.shift_sequence else None
    rejections = 0
    last_error = None

    while state.k < opts.max_iter:
        t0 = time.perf_counter()
        if seq is not None:
            gamma = float(seq[state.k % len(seq)])
        else:
            gamma, cache = next_shift(opts.shift, cache, p, state)
        t_shift = time.perf_counter() - t0

        try:
            state, scratch = step_once(p, state, gamma, opts)
        except (ShiftRejectionError, SpdViolationError) as exc:
            rejections += 1
            last_error = exc
            if rejections > MAX_SHIFT_REJECTIONS:
                if isinstance(exc, SpdViolationError):
                    raise NumericalBreakdownError(
                        state.k, f"Gram factorization failed repeatedly: {exc}"
                    ) from exc
                raise NoProgressError(
                    f"all candidate shifts rejected at iteration {state.k}: {last_error}"
                ) from exc
            continue
        rejections = 0

        nres = nres_trace(state)
        report.rows.append(
            IterationRecord(
                k=state.k,
                gamma=gamma,
                nres=nres,
                cols_c=state.ccur.shape[0],
                cols_xi=state.xi_width,
                nu_omega=state.nu_omega,
                t_shift=t_shift,
                t_solve=scratch.t_solve,
                t_ltimes=scratch.t_ltimes,
                t_svd=scratch.t_svd,
                t_other=max(
                    scratch.t_total - scratch.t_solve - scratch.t_ltimes - scratch.t_svd,
                    0.0,
                ),
            )
        )

        if nres <= opts.tol_nres:
            report.converged = True
            break
        kept_rel = float(np.linalg.norm(state.ccur) ** 2) / state.nu0
        if (opts.stop_on_stall and kept_rel < opts.tol_nres) or state.ccur.shape[0] == 0:
            report.flags = "t"
            break
        if opts.max_cols_xi is not None and state.xi_width >= opts.max_cols_xi:
            report.flags = "m"
            break

    report.iterations = state.k
    report.xi_width = state.xi_width
    report.final_nres = report.rows[-1].nres
    report.wall_time = time.perf_counter() - wall0
    return state, report


def _echo_options(opts: SolveOptions) -> dict:
    return {
        "tol_nres": opts.tol_nres,
        "max_iter": opts.max_iter,
        "trunc_rel": opts.trunc_rel,
        "cap_cols": opts.cap_cols,
        "max_cols_xi": opts.max_cols_xi,
        "stop_on_stall": opts.stop_on_stall,
        "shift": {
            "strategy": opts.shift.strategy,
            "window_s": opts.shift.window_s,
            "mode": opts.shift.mode,
            "gamma_floor": opts.shift.gamma_floor,
        },
    }


# ---------------------------------------------------------------------------
# Dense prototype (equivalence oracle)


@dataclass
class Alg1State:
    """Dense prototype state: coefficients are rewritten every iteration."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    ahat: list
    bhat: list
    xi: np.ndarray
    kron_flip: bool = False

    @property
    def x(self) -> np.ndarray:
        return self.xi @ self.xi.T


def alg1_init(p: StandardProblem) -> Alg1State:
    """Dense starting state from the effective standard-form coefficients."""
    if p.is_generalized:
        raise ValueError("the dense prototype handles the E = I form only")
    if p.n > 200:
        raise ValueError("dense prototype is guarded to n <= 200")
    co = p.dense_coefficients()
    return Alg1State(
        a=co.a,
        b=co.b,
        c=co.c,
        ahat=[blk.copy() for blk in co.ahat],
        bhat=[blk.copy() for blk in co.bhat],
        xi=np.zeros((p.n, 0)),
        kron_flip=p.kron_flip,
    )


def alg1_step(st: Alg1State, gamma: float) -> Alg1State:
    """One literal prototype iteration over dense, explicitly updated matrices."""
    if gamma <= 0:
        raise ValueError("shift must be positive")
    n = st.a.shape[0]
    m = st.b.shape[1]
    ell = st.c.shape[0]
    k = len(st.ahat)
    sqrt2g = np.sqrt(2.0 * gamma)
    interleaved = not st.kron_flip

    a_g = st.a - gamma * np.eye(n)
    c_gamma = sqrt2g * sla.solve(a_g.T, st.c.T).T
    y = c_gamma @ st.b / sqrt2g
    yhat = [c_gamma @ bh for bh in st.bhat]

    n_factor = chol_spd(np.eye(ell) + y @ y.T).T
    s = sla.solve_triangular(n_factor, c_gamma, lower=True)
    xi = np.hstack([st.xi, s.T])

    w = sqrt2g * sla.solve_triangular(n_factor, s, trans="T", lower=True)
    yw = y.T @ w
    cm_blocks = [c_gamma @ ah - yh @ yw for ah, yh in zip(st.ahat, yhat)]

    if k:
        yh_mat = materialize_stack(yhat, m, interleaved)
        gram = kron_gram(np.eye(ell) + y @ y.T, k, st.kron_flip) + yh_mat @ yh_mat.T
        m_factor = chol_spd(0.5 * (gram + gram.T)).T
        cm_mat = materialize_stack(cm_blocks, n, interleaved)
        c_new = np.vstack([st.c + w, sla.solve_triangular(m_factor, cm_mat, lower=True)])
    else:
        c_new = st.c + w

    ny = [sla.solve_triangular(n_factor, yh, lower=True) for yh in yhat]
    g_k = np.eye(m)
    for z in ny:
        g_k = g_k + z.T @ z
    k_factor = chol_spd(0.5 * (g_k + g_k.T))

    lt = k_factor @ yw
    acc = np.zeros((m, n))
    for z, cm in zip(ny, cm_blocks):
        acc += z.T @ sla.solve_triangular(n_factor, cm, lower=True)
    lt = lt + sla.solve_triangular(k_factor, acc, trans="T", lower=False)

    b_new = _right_tri_solve(k_factor, st.b)
    bhat_new = [_right_tri_solve(k_factor, bh) for bh in st.bhat]
    a_new = st.a - b_new @ lt
    ahat_new = [ah - bh @ lt for ah, bh in zip(st.ahat, bhat_new)]

    return Alg1State(
        a=a_new, b=b_new, c=c_new, ahat=ahat_new, bhat=bhat_new,
        xi=xi, kron_flip=st.kron_flip,
    )
