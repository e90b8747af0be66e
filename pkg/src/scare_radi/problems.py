"""Problem containers and dense reference operators.

Holds the original, standard-form, and generalized (mass-matrix) quadratic
matrix equations with sparse coefficients and low-rank factors, the two
transforms between the original and standard forms, and brute-force dense
evaluators for the residual, the feedback, and the defect-correction
("incorporation") residual.  The dense evaluators exist for verification and
are guarded to moderate dimensions.

Problem directory layout consumed by the benchmark loader: Matrix Market
files ``A.mtx``, ``B.mtx``, ``C.mtx``, optional ``E.mtx``, optional
``L.mtx``/``R.mtx``, and ``A1.mtx`` ... ``A{r-1}.mtx``, ``B1.mtx`` ...
``B{r-1}.mtx``.  Absent stochastic files mean r = 1; absent L/R means the
data are already in standard form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    AssumptionViolationError,
    ConformabilityError,
    DefinitenessError,
)
from .kernels import StackedMat, chol_spd

__all__ = [
    "OriginalProblem",
    "StandardProblem",
    "DenseSolution",
    "DenseCoefficients",
    "standardize",
    "adapt_in_place",
    "residual_dense",
    "feedback_dense",
    "feedback_original",
    "incorporation_residual_dense",
]

DENSE_GUARD = 2000


def _as_dense(m) -> np.ndarray:
    if sp.issparse(m):
        return np.asarray(m.toarray(), dtype=float)
    return np.atleast_2d(np.asarray(m, dtype=float))


def _check_shape(name, m, shape):
    if m.shape != shape:
        raise ConformabilityError(f"{name} has shape {m.shape}, expected {shape}")


@dataclass
class OriginalProblem:
    """Coefficient bundle of the original equation.

    ``a_list`` holds the r drift/noise matrices (index 0 is the drift),
    ``b_list`` the matching input matrices.  ``c0`` is a low-rank factor of
    the state weight with the cross term removed, i.e. C0^T C0 = Q - L R^-1 L^T.
    ``e`` is the optional mass matrix (identity when None).
    """

    a_list: list
    b_list: list
    c0: np.ndarray
    l: np.ndarray
    r_weight: np.ndarray
    e: object = None

    def __post_init__(self):
        if len(self.a_list) < 1 or len(self.a_list) != len(self.b_list):
            raise ConformabilityError("need r >= 1 drift/input pairs")
        n = self.a_list[0].shape[0]
        m = self.b_list[0].shape[1]
        self.c0 = np.atleast_2d(np.asarray(self.c0, dtype=float))
        self.l = np.atleast_2d(np.asarray(self.l, dtype=float))
        self.r_weight = np.atleast_2d(np.asarray(self.r_weight, dtype=float))
        for i, (a, b) in enumerate(zip(self.a_list, self.b_list)):
            if a.shape != (n, n) or b.shape != (n, m):
                raise ConformabilityError(f"pair {i} has shapes {a.shape}, {b.shape}")
        _check_shape("L", self.l, (n, m))
        _check_shape("R", self.r_weight, (m, m))
        if self.c0.shape[1] != n:
            raise ConformabilityError(f"C0 column count {self.c0.shape[1]} != {n}")
        if self.e is not None and self.e.shape != (n, n):
            raise ConformabilityError(f"E has shape {self.e.shape}, expected ({n}, {n})")

    @property
    def n(self):
        return self.a_list[0].shape[0]

    @property
    def m(self):
        return self.b_list[0].shape[1]

    @property
    def r(self):
        return len(self.a_list)


@dataclass
class StandardProblem:
    """Standard-form problem: identity input weight, stacked stochastic blocks.

    ``f0``/``kpi0`` carry the initialization the in-place adapter needs so
    that the iteration can run on unmodified original coefficients; a
    natively standard problem has f0 = 0 and kpi0 = I.  ``kron_flip``
    selects the interleaving convention used when stochastic stacks are
    materialized and when the block Gram is assembled as a Kronecker
    product; the row permutation between the two conventions never reaches
    any computed value.
    """

    a: object
    b: np.ndarray
    c: np.ndarray
    ahat: StackedMat
    bhat: StackedMat
    e: object = None
    kron_flip: bool = False
    f0: np.ndarray = None
    kpi0: np.ndarray = None

    def __post_init__(self):
        n = self.a.shape[0]
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        m = self.b.shape[1]
        _check_shape("A", self.a, (n, n))
        _check_shape("B", self.b, (n, m))
        if self.c.shape[1] != n:
            raise ConformabilityError(f"C column count {self.c.shape[1]} != {n}")
        if (self.ahat.block_rows, self.ahat.block_cols) != (n, n):
            raise ConformabilityError("Ahat blocks must be n x n")
        if (self.bhat.block_rows, self.bhat.block_cols) != (n, m):
            raise ConformabilityError("Bhat blocks must be n x m")
        if self.ahat.block_count != self.bhat.block_count:
            raise ConformabilityError("Ahat and Bhat must hold the same block count")
        if self.e is not None and self.e.shape != (n, n):
            raise ConformabilityError(f"E has shape {self.e.shape}, expected ({n}, {n})")
        if self.f0 is None:
            self.f0 = np.zeros((m, n))
        self.f0 = np.atleast_2d(np.asarray(self.f0, dtype=float))
        _check_shape("F0", self.f0, (m, n))
        if self.kpi0 is None:
            self.kpi0 = np.eye(m)
        self.kpi0 = np.atleast_2d(np.asarray(self.kpi0, dtype=float))
        _check_shape("Kpi0", self.kpi0, (m, m))

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.b.shape[1]

    @property
    def l(self):
        return self.c.shape[0]

    @property
    def r(self):
        return self.ahat.block_count + 1

    @property
    def is_generalized(self):
        return self.e is not None

    def a_sparse(self):
        return sp.csc_matrix(self.a)

    def e_sparse(self):
        return None if self.e is None else sp.csc_matrix(self.e)

    def dense_coefficients(self) -> "DenseCoefficients":
        """Effective standard-form coefficients, densified for oracle work.

        Folds the initialization into the matrices: A + B F0, B Kpi0^-1 and
        the same on every stochastic block, which is exactly the standard
        form regardless of whether the container was built by the explicit
        transform or the in-place adapter.
        """
        if self.n > DENSE_GUARD:
            raise ConformabilityError(
                f"dense oracle path is guarded to n <= {DENSE_GUARD}, got n = {self.n}"
            )
        a = _as_dense(self.a)
        b = _as_dense(self.b)
        has_init = np.any(self.f0) or not np.allclose(self.kpi0, np.eye(self.m))
        if has_init:
            a = a + b @ self.f0
            b_eff = sla.solve_triangular(self.kpi0, b.T, trans="T", lower=False).T
            ahat = [_as_dense(blk) + _as_dense(bb) @ self.f0
                    for blk, bb in zip(self.ahat.blocks, self.bhat.blocks)]
            bhat = [
                sla.solve_triangular(self.kpi0, _as_dense(bb).T, trans="T", lower=False).T
                for bb in self.bhat.blocks
            ]
        else:
            b_eff = b
            ahat = [_as_dense(blk) for blk in self.ahat.blocks]
            bhat = [_as_dense(blk) for blk in self.bhat.blocks]
        e = None if self.e is None else _as_dense(self.e)
        return DenseCoefficients(a, b_eff, self.c.copy(), ahat, bhat, e)


@dataclass
class DenseCoefficients:
    """Densified effective standard-form coefficients (oracle scale only)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    ahat: list
    bhat: list
    e: np.ndarray = None

    @property
    def n(self):
        return self.a.shape[0]

    @property
    def m(self):
        return self.b.shape[1]


@dataclass
class DenseSolution:
    """Dense symmetric solution with solver metadata."""

    x: np.ndarray
    iterations: int = 0
    residual: float = 0.0


def _r_inv_lt(r_weight: np.ndarray, l: np.ndarray) -> np.ndarray:
    """R^-1 L^T through the Cholesky factor, rejecting non-SPD weights."""
    try:
        p = chol_spd(r_weight)
    except Exception as exc:
        raise AssumptionViolationError(
            "control weight R must be symmetric positive definite"
        ) from exc
    z = sla.solve_triangular(p, l.T, trans="T", lower=False)
    return sla.solve_triangular(p, z, lower=False), p


def standardize(orig: OriginalProblem) -> StandardProblem:
    """Explicit transform of the original problem to standard form.

    Absorbs the cross/input weights into the coefficients: A = A0 - B0 R^-1 L^T,
    B = B0 P^-1 with P^T P = R, and the same on every stochastic block.  This
    densifies the drift when L is nonzero, so it is the oracle-scale route;
    production solves of original data use :func:`adapt_in_place`.
    """
    rinv_lt, p = _r_inv_lt(orig.r_weight, orig.l)
    n = orig.n

    def absorb(a, b):
        if not np.any(orig.l):
            return a
        return sp.csc_matrix(_as_dense(a) - _as_dense(b) @ rinv_lt)

    def scale_b(b):
        return sla.solve_triangular(p, _as_dense(b).T, trans="T", lower=False).T

    a = absorb(orig.a_list[0], orig.b_list[0])
    b = scale_b(orig.b_list[0])
    ahat = StackedMat.from_blocks(
        [sp.csc_matrix(absorb(ai, bi)) for ai, bi in zip(orig.a_list[1:], orig.b_list[1:])],
        block_rows=n,
        block_cols=n,
    )
    bhat = StackedMat.from_blocks(
        [scale_b(bi) for bi in orig.b_list[1:]], block_rows=n, block_cols=orig.m
    )
    return StandardProblem(
        a=sp.csc_matrix(a),
        b=b,
        c=orig.c0.copy(),
        ahat=ahat,
        bhat=bhat,
        e=orig.e,
        kron_flip=False,
    )


def adapt_in_place(orig: OriginalProblem) -> StandardProblem:
    """Adapter that leaves the original coefficients untouched.

    The weights are carried by the initialization instead: F0 = -R^-1 L^T and
    an accumulator seed Kpi0 with Kpi0^T Kpi0 = R.  The stochastic blocks stay
    plain stacks, which flips the Kronecker interleaving convention.
    """
    rinv_lt, p = _r_inv_lt(orig.r_weight, orig.l)
    n = orig.n
    ahat = StackedMat.from_blocks(
        [sp.csc_matrix(ai) for ai in orig.a_list[1:]], block_rows=n, block_cols=n
    )
    bhat = StackedMat.from_blocks(
        [_as_dense(bi) for bi in orig.b_list[1:]], block_rows=n, block_cols=orig.m
    )
    return StandardProblem(
        a=sp.csc_matrix(orig.a_list[0]),
        b=_as_dense(orig.b_list[0]),
        c=orig.c0.copy(),
        ahat=ahat,
        bhat=bhat,
        e=orig.e,
        kron_flip=True,
        f0=-rinv_lt,
        kpi0=p,
    )


def _middle_and_cross(co: DenseCoefficients, x: np.ndarray):
    """I + Bhat^T ltimes X ltimes Bhat and the cross factor E^T X B + sum Ahat^T X Bhat."""
    mid = np.eye(co.m)
    xe = x if co.e is None else x @ co.e
    cross = (xe.T if co.e is not None else x) @ co.b
    for ah, bh in zip(co.ahat, co.bhat):
        xbh = x @ bh
        mid = mid + bh.T @ xbh
        cross = cross + ah.T @ xbh
    return mid, cross


def residual_dense(p: StandardProblem | DenseCoefficients, x: np.ndarray) -> np.ndarray:
    """Brute-force residual operator evaluation, exact to dense round-off.

    For a mass matrix E the drift terms pair with E (A^T X E + E^T X A and
    E^T X B in the cross factor); with E absent this is the plain standard
    form.  A singular middle matrix I + Bhat^T lt X lt Bhat means X is far
    outside the solution regime and raises :class:`DefinitenessError`.
    """
    co = p.dense_coefficients() if isinstance(p, StandardProblem) else p
    x = np.atleast_2d(np.asarray(x, dtype=float))
    _check_shape("X", x, (co.n, co.n))
    if co.e is None:
        lin = co.a.T @ x + x @ co.a
    else:
        axe = co.a.T @ x @ co.e
        lin = axe + axe.T
    quad = sum((ah.T @ x @ ah for ah in co.ahat), start=np.zeros_like(x))
    mid, cross = _middle_and_cross(co, x)
    try:
        corr = cross @ sla.solve(mid, cross.T, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError("middle matrix I + Bhat' X Bhat is singular") from exc
    res = co.c.T @ co.c + lin + quad - corr
    return 0.5 * (res + res.T)


def feedback_dense(p: StandardProblem | DenseCoefficients, x: np.ndarray) -> np.ndarray:
    """Standard-form feedback -(I + Bhat' lt X lt Bhat)^-1 (X B + Ahat' lt X lt Bhat)^T."""
    co = p.dense_coefficients() if isinstance(p, StandardProblem) else p
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mid, cross = _middle_and_cross(co, x)
    try:
        return -sla.solve(mid, cross.T, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise DefinitenessError("middle matrix I + Bhat' X Bhat is singular") from exc


def feedback_original(p: StandardProblem, x: np.ndarray) -> np.ndarray:
    """Original-coordinates feedback F0 + Kpi0^-1 Fhat_X (equals Fhat when standard)."""
    fhat = feedback_dense(p, x)
    return p.f0 + sla.solve_triangular(p.kpi0, fhat, lower=False)


def incorporation_coefficients(p: StandardProblem | DenseCoefficients, x: np.ndarray):
    """Shifted coefficients (A_X, B_X, Ahat_X, Bhat_X, L_X^T) of the defect equation."""
    co = p.dense_coefficients() if isinstance(p, StandardProblem) else p
    x = np.atleast_2d(np.asarray(x, dtype=float))
    r_x = np.eye(co.m)
    for bh in co.bhat:
        r_x = r_x + bh.T @ x @ bh
    try:
        p_x = chol_spd(0.5 * (r_x + r_x.T))
    except Exception as exc:
        raise DefinitenessError("R_X = I + Bhat' X Bhat is not positive definite") from exc

    def right_scale(b):
        return sla.solve_triangular(p_x, b.T, trans="T", lower=False).T

    b_x = right_scale(co.b)
    bhat_x = [right_scale(bh) for bh in co.bhat]
    xe = x if co.e is None else x @ co.e
    lt = b_x.T @ xe
    for bhx, ah in zip(bhat_x, co.ahat):
        lt = lt + bhx.T @ x @ ah
    a_x = co.a - b_x @ lt
    ahat_x = [ah - bhx @ lt for ah, bhx in zip(co.ahat, bhat_x)]
    return DenseCoefficients(a_x, b_x, co.c, ahat_x, bhat_x, co.e), lt


def incorporation_residual_dense(
    p: StandardProblem | DenseCoefficients, x: np.ndarray, delta: np.ndarray
) -> np.ndarray:
    """Residual of the defect-correction equation at increment ``delta``.

    Built from the shifted coefficients with the base value anchored at the
    plain residual of ``x``; by construction it equals
    ``residual_dense(p, x + delta)``.
    """
    co = p.dense_coefficients() if isinstance(p, StandardProblem) else p
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    _check_shape("Delta", delta, (co.n, co.n))
    shifted, _ = incorporation_coefficients(co, x)
    base = residual_dense(co, x)
    inner = residual_dense(
        DenseCoefficients(
            shifted.a,
            shifted.b,
            np.zeros((0, co.n)),
            shifted.ahat,
            shifted.bhat,
            shifted.e,
        ),
        delta,
    )
    return base + inner
