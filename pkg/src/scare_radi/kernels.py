"""Block linear-algebra kernels.

The left semi-tensor product on vertically stacked blocks, SMW-corrected
shifted row solves, small SPD Cholesky factorization, and truncated SVD with
exact accounting of the discarded energy.  Everything here is a pure function
of its inputs; factorization handles may be shared read-only across threads.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg.lapack import dpotrf
from scipy.sparse.linalg import splu

from .errors import ConformabilityError, ShiftRejectionError, SpdViolationError

__all__ = [
    "StackedMat",
    "ShiftedFactorization",
    "TruncationResult",
    "ltimes",
    "ltimes_dense",
    "ltimes_identities_check",
    "factor_shifted",
    "smw_row_solve",
    "chol_spd",
    "trunc_svd",
    "materialize_stack",
    "kron_gram",
]

_MACHEPS = np.finfo(float).eps


def _left_mul(x: np.ndarray, block) -> np.ndarray:
    """x @ block for dense x and a dense or sparse block, always dense output."""
    if sp.issparse(block):
        return np.asarray((block.T @ x.T).T)
    return x @ block


@dataclass(frozen=True)
class StackedMat:
    """A vertically stacked matrix [M_1; ...; M_k] kept as its list of blocks.

    All blocks share the same shape ``block_rows x block_cols``.  A stack with
    zero blocks is legal and represents the absent stochastic part of a
    deterministic problem; the explicit block dimensions keep downstream
    shapes well defined in that case.
    """

    blocks: tuple
    block_rows: int
    block_cols: int

    def __post_init__(self):
        for blk in self.blocks:
            if blk.shape != (self.block_rows, self.block_cols):
                raise ConformabilityError(
                    f"stacked block of shape {blk.shape} does not match "
                    f"({self.block_rows}, {self.block_cols})"
                )

    @classmethod
    def from_blocks(cls, blocks, block_rows=None, block_cols=None) -> "StackedMat":
        blocks = tuple(blocks)
        if blocks:
            block_rows, block_cols = blocks[0].shape
        elif block_rows is None or block_cols is None:
            raise ValueError("an empty stack needs explicit block dimensions")
        return cls(blocks, block_rows, block_cols)

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @property
    def is_empty(self) -> bool:
        return not self.blocks

    def materialize(self, interleaved: bool = False) -> np.ndarray:
        """Dense (k*p) x q matrix; ``interleaved`` emits row (i, a) at i*k + a."""
        dense = [np.asarray(b.toarray() if sp.issparse(b) else b, dtype=float)
                 for b in self.blocks]
        k = len(dense)
        if k == 0:
            return np.zeros((0, self.block_cols))
        if interleaved:
            return np.stack(dense, axis=1).reshape(k * self.block_rows, self.block_cols)
        return np.vstack(dense)


def materialize_stack(blocks, ncols: int, interleaved: bool) -> np.ndarray:
    """Stack a list of equal-shape dense blocks, interleaved or block-major."""
    blocks = list(blocks)
    if not blocks:
        return np.zeros((0, ncols))
    if interleaved:
        return np.stack(blocks, axis=1).reshape(-1, blocks[0].shape[1])
    return np.vstack(blocks)


def kron_gram(base: np.ndarray, k: int, flip: bool) -> np.ndarray:
    """base (x) I_k, or I_k (x) base when ``flip`` is set."""
    if flip:
        return np.kron(np.eye(k), base)
    return np.kron(base, np.eye(k))


def ltimes(x: np.ndarray, m: StackedMat) -> StackedMat:
    """Left semi-tensor product of a dense matrix with a stacked matrix.

    For the stacked operand this reduces to the blockwise product: block i of
    the result is ``x @ m.blocks[i]``.  Only the row-compatible case used by
    the iteration is supported here; the general divisibility-based product
    lives in :func:`ltimes_dense`.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != m.block_rows:
        raise ConformabilityError(
            f"left operand has shape {x.shape} but stacked blocks are "
            f"{m.block_rows} x {m.block_cols}"
        )
    return StackedMat.from_blocks(
        [_left_mul(x, b) for b in m.blocks],
        block_rows=x.shape[0],
        block_cols=m.block_cols,
    )


def ltimes_dense(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """General left semi-tensor product via explicit Kronecker padding.

    Dense and small by design: this is the oracle used to validate the
    blockwise kernels and the product identities, not a production path.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[1]
    p = b.shape[0]
    if p % n == 0:
        return np.kron(a, np.eye(p // n)) @ b
    if n % p == 0:
        return a @ np.kron(b, np.eye(n // p))
    raise ConformabilityError(
        f"inner dimensions {n} and {p} do not divide either way"
    )


def _rel_dev(lhs: np.ndarray, rhs: np.ndarray) -> float:
    num = np.linalg.norm(lhs - rhs)
    den = np.linalg.norm(lhs)
    if den == 0.0:
        return 0.0 if num == 0.0 else np.inf
    return float(num / den)


def ltimes_identities_check(u, v, seed: int = 0, m=None, d=None) -> float:
    """Max relative deviation over the three semi-tensor product identities.

    Checks, by direct Kronecker construction,
    ``U lt (I + V lt U) = (I + U lt V) lt U``, its inverse form, and the
    Sherman-Morrison-Woodbury form
    ``M^-1 - (M + U lt D lt V)^-1 = M^-1 lt U lt (D^-1 + V lt M^-1 lt U)^-1 lt V lt M^-1``.
    ``m`` and ``d`` default to well-conditioned random matrices of the sizes
    the products dictate.  A singular ``I + V lt U`` skips the inverse
    identities rather than failing.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    rng = np.random.default_rng(seed)

    uv = ltimes_dense(u, v)
    vu = ltimes_dense(v, u)
    if uv.shape[0] != uv.shape[1] or vu.shape[0] != vu.shape[1]:
        raise ConformabilityError("U lt V and V lt U must both be square")
    s_uv = uv.shape[0]
    s_vu = vu.shape[0]

    devs = [
        _rel_dev(
            ltimes_dense(u, np.eye(s_vu) + vu),
            ltimes_dense(np.eye(s_uv) + uv, u),
        )
    ]

    i_vu = np.eye(s_vu) + vu
    i_uv = np.eye(s_uv) + uv
    if (
        np.linalg.matrix_rank(i_vu) == s_vu
        and np.linalg.matrix_rank(i_uv) == s_uv
    ):
        devs.append(
            _rel_dev(
                ltimes_dense(u, np.linalg.inv(i_vu)),
                ltimes_dense(np.linalg.inv(i_uv), u),
            )
        )

    if m is None:
        w = rng.standard_normal((s_uv, s_uv))
        m = np.eye(s_uv) + 0.3 * w / max(np.linalg.norm(w, 2), 1.0)
    if d is None:
        w = rng.standard_normal((s_vu, s_vu))
        d = np.eye(s_vu) + 0.2 * w / max(np.linalg.norm(w, 2), 1.0)
    m = np.atleast_2d(np.asarray(m, dtype=float))
    d = np.atleast_2d(np.asarray(d, dtype=float))
    minv = np.linalg.inv(m)
    dinv = np.linalg.inv(d)
    udv = ltimes_dense(ltimes_dense(u, d), v)
    core = dinv + ltimes_dense(ltimes_dense(v, minv), u)
    if np.linalg.matrix_rank(core) == core.shape[0]:
        lhs = minv - np.linalg.inv(m + udv)
        rhs = ltimes_dense(
            ltimes_dense(ltimes_dense(minv, u), np.linalg.inv(core)),
            ltimes_dense(v, minv),
        )
        devs.append(_rel_dev(lhs, rhs))

    return float(max(devs))


@dataclass
class ShiftedFactorization:
    """Sparse LU of A - gamma*E, reusable for many row solves.

    The handle is read-only after construction and safe to share across
    threads for simultaneous solves.
    """

    gamma: float
    n: int
    _lu: object = field(repr=False)

    def row_solve(self, rows: np.ndarray) -> np.ndarray:
        """rows @ (A - gamma*E)^-1 via one transposed sparse solve."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != self.n:
            raise ConformabilityError(
                f"rows have {rows.shape[1]} columns, expected {self.n}"
            )
        if rows.shape[0] == 0:
            return rows.copy()
        return self._lu.solve(rows.T, trans="T").T


def factor_shifted(a, gamma: float, e=None, lu_options: dict | None = None) -> ShiftedFactorization:
    """Factor A - gamma*E with sparse LU (partial pivoting, fill-reducing ordering)."""
    n = a.shape[0]
    a = sp.csc_matrix(a)
    shifted = a - gamma * (sp.identity(n, format="csc") if e is None else sp.csc_matrix(e))
    try:
        lu = splu(shifted.tocsc(), **(lu_options or {}))
    except RuntimeError as exc:  # SuperLU signals exact singularity this way
        raise ShiftRejectionError(
            f"factorization of A - {gamma}*E failed: {exc}"
        ) from exc
    return ShiftedFactorization(gamma=float(gamma), n=n, _lu=lu)


def _solve_core(core: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve with the small SMW core, rejecting numerically singular cores."""
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(core)
    diag = np.abs(np.diag(lu))
    if diag.size and diag.min() <= 1e3 * _MACHEPS * max(diag.max(), 1.0):
        raise ShiftRejectionError("SMW core matrix I + F A_gamma^-1 B is numerically singular")
    return sla.lu_solve((lu, piv), rhs)


def smw_row_solve(fac: ShiftedFactorization, b: np.ndarray, f, rows: np.ndarray) -> np.ndarray:
    """rows @ (A + B F - gamma*E)^-1 from the factorization of A - gamma*E.

    Uses the low-rank correction
    ``rows A_g^-1 - rows A_g^-1 B (I + F A_g^-1 B)^-1 F A_g^-1``;
    with F = 0 this is the plain shifted solve.
    """
    ra = fac.row_solve(rows)
    if f is None:
        return ra
    f = np.atleast_2d(np.asarray(f, dtype=float))
    if not np.any(f):
        return ra
    b = np.atleast_2d(np.asarray(b, dtype=float))
    fa = fac.row_solve(f)
    core = np.eye(b.shape[1]) + fa @ b
    return ra - (ra @ b) @ _solve_core(core, fa)


def chol_spd(m: np.ndarray) -> np.ndarray:
    """Upper-triangular P with P^T P = M for symmetric positive definite M.

    The single P^T P orientation is used everywhere; callers transpose when
    the other one is needed.  A non-positive pivot raises
    :class:`SpdViolationError` carrying the 1-based pivot index.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ConformabilityError(f"Cholesky needs a square matrix, got {m.shape}")
    if m.shape[0] == 0:
        return np.zeros((0, 0))
    c, info = dpotrf(m, lower=0, clean=1)
    if info > 0:
        raise SpdViolationError(pivot_index=int(info))
    if info < 0:
        raise ValueError(f"illegal value in Cholesky argument {-info}")
    return c


@dataclass
class TruncationResult:
    """Retained factor Sigma V^T of a truncated SVD plus the discarded energy.

    ``discarded_sq_trace`` is the sum of the squared discarded singular
    values, so the Frobenius energy of the input splits exactly into
    ``|sigma|_2^2 + discarded_sq_trace``.
    """

    sigma: np.ndarray
    vt: np.ndarray
    discarded_sq_trace: float

    @property
    def rank(self) -> int:
        return int(self.sigma.size)

    def factor(self) -> np.ndarray:
        """The retained rows Sigma V^T."""
        return self.sigma[:, None] * self.vt


def _select_retained(sq_desc: np.ndarray, tau_abs: float, cap: int) -> int:
    """Smallest leading count whose discarded tail energy is <= tau_abs, capped."""
    tail = np.concatenate([np.cumsum(sq_desc[::-1])[::-1], [0.0]])
    keep = int(np.argmax(tail <= tau_abs))
    keep = min(keep, cap)
    while keep > 0 and sq_desc[keep - 1] == 0.0:
        keep -= 1
    return keep


def trunc_svd(c: np.ndarray, tau_abs: float, cap: int) -> TruncationResult:
    """Truncated SVD of a wide factor with exact discard accounting.

    Retains the minimal leading singular values such that the discarded Gram
    trace satisfies ``sum sigma_i^2 <= tau_abs``, then enforces the row cap,
    moving any overflow into ``discarded_sq_trace``.  The default route
    eigendecomposes the small Gram C C^T and recovers V^T as Sigma^-1 U^T C;
    it falls back to a one-sided SVD when the smallest retained sigma^2 drops
    below 1e-8 of the largest, where the cross product has lost half the
    significant digits.
    """
    c = np.ascontiguousarray(np.atleast_2d(c), dtype=float)
    if tau_abs < 0:
        raise ValueError("tau_abs must be nonnegative")
    if cap < 1:
        raise ValueError("cap must be positive")
    p, n = c.shape
    if p == 0 or not np.any(c):
        return TruncationResult(np.zeros(0), np.zeros((0, n)), 0.0)

    if p <= n:
        gram = c @ c.T
        w, u = np.linalg.eigh(gram)
        sq = np.maximum(w[::-1], 0.0)
        u = u[:, ::-1]
        keep = _select_retained(sq, tau_abs, cap)
        if keep == 0 or sq[keep - 1] >= 1e-8 * sq[0]:
            sigma = np.sqrt(sq[:keep])
            vt = (u[:, :keep].T @ c) / sigma[:, None] if keep else np.zeros((0, n))
            disc = float(np.sum(sq[keep:]))
            return TruncationResult(sigma, vt, disc)

    sv = np.linalg.svd(c, full_matrices=False)
    sq = sv.S**2
    keep = _select_retained(sq, tau_abs, cap)
    return TruncationResult(
        sv.S[:keep].copy(), sv.Vh[:keep].copy(), float(np.sum(sq[keep:]))
    )
