"""Benchmark drivers: problem ingestion, synthetic generators, experiment grid.

Problems are exchanged as Matrix Market directories (see
:mod:`scare_radi.problems` for the layout).  The grid runner crosses the
stochastic cases (deterministic, one noise block per scale, and all scales
combined) with the twelve shift variants and emits one CSV trace and one JSON
summary per cell, plus a compact summary table.
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io as sio
import scipy.sparse as sp

from . import __version__
from .engine import SolveOptions, radi_solve
from .errors import ProblemLoadError
from .kernels import StackedMat, chol_spd
from .problems import OriginalProblem, StandardProblem, adapt_in_place
from .report import RunReport
from .shifts import ShiftConfig

__all__ = [
    "load_problem",
    "gen_noise_blocks",
    "gen_heat_problem",
    "with_noise_blocks",
    "ExperimentConfig",
    "ALL_SHIFT_VARIANTS",
    "variant_label",
    "run_single",
    "run_grid",
]

#: The twelve shift variants of the benchmark grid: (strategy, window, mode).
ALL_SHIFT_VARIANTS = [
    (strategy, s, mode)
    for strategy in ("hamiltonian", "projection")
    for mode in ("cached", "per_iteration")
    for s in (1, 2, 5)
]


def variant_label(strategy: str, s: int, mode: str) -> str:
    """Short grid label: cached mode is plain, per-iteration carries a 'c'."""
    stem = "hami" if strategy == "hamiltonian" else "proj"
    return f"{stem} c {s}" if mode == "per_iteration" else f"{stem} {s}"


def _read_mtx(path: Path, want_sparse: bool):
    try:
        mat = sio.mmread(path)
    except Exception as exc:
        raise ProblemLoadError(f"cannot read {path.name}: {exc}") from exc
    if want_sparse:
        return sp.csc_matrix(mat)
    return np.asarray(mat.toarray() if sp.issparse(mat) else mat, dtype=float)


def load_problem(dir_path) -> StandardProblem | OriginalProblem:
    """Load a problem directory of Matrix Market files.

    The stochastic order r is inferred from the consecutive ``A{i}.mtx``
    files present; ``E.mtx`` makes the problem generalized, and the presence
    of ``L.mtx``/``R.mtx`` marks original-form data (returned as
    :class:`OriginalProblem` for the caller to adapt or standardize).
    """
    dir_path = Path(dir_path)
    if not dir_path.is_dir():
        raise ProblemLoadError(f"{dir_path} is not a directory")
    for name in ("A.mtx", "B.mtx", "C.mtx"):
        if not (dir_path / name).exists():
            raise ProblemLoadError(f"missing mandatory file {name} in {dir_path}")
    a = _read_mtx(dir_path / "A.mtx", want_sparse=True)
    b = _read_mtx(dir_path / "B.mtx", want_sparse=False)
    c = _read_mtx(dir_path / "C.mtx", want_sparse=False)
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n or c.shape[1] != n:
        raise ProblemLoadError(
            f"dimension mismatch: A {a.shape}, B {b.shape}, C {c.shape}"
        )
    e = None
    if (dir_path / "E.mtx").exists():
        e = _read_mtx(dir_path / "E.mtx", want_sparse=True)
        if e.shape != (n, n):
            raise ProblemLoadError(f"dimension mismatch: E {e.shape} vs A {a.shape}")

    ahat_blocks, bhat_blocks = [], []
    i = 1
    while (dir_path / f"A{i}.mtx").exists():
        if not (dir_path / f"B{i}.mtx").exists():
            raise ProblemLoadError(f"A{i}.mtx present but B{i}.mtx missing")
        ai = _read_mtx(dir_path / f"A{i}.mtx", want_sparse=True)
        bi = _read_mtx(dir_path / f"B{i}.mtx", want_sparse=False)
        if ai.shape != (n, n) or bi.shape != b.shape:
            raise ProblemLoadError(f"dimension mismatch in stochastic pair {i}")
        ahat_blocks.append(ai)
        bhat_blocks.append(bi)
        i += 1

    has_l = (dir_path / "L.mtx").exists()
    has_r = (dir_path / "R.mtx").exists()
    if has_l != has_r:
        raise ProblemLoadError("L.mtx and R.mtx must be present together")
    if has_l:
        l = _read_mtx(dir_path / "L.mtx", want_sparse=False)
        r_weight = _read_mtx(dir_path / "R.mtx", want_sparse=False)
        try:
            chol_spd(0.5 * (r_weight + r_weight.T))
        except Exception as exc:
            raise ProblemLoadError(f"R.mtx is not positive definite: {exc}") from exc
        return OriginalProblem(
            a_list=[a, *ahat_blocks],
            b_list=[b, *bhat_blocks],
            c0=c,
            l=l,
            r_weight=r_weight,
            e=e,
        )
    m = b.shape[1]
    return StandardProblem(
        a=a,
        b=b,
        c=c,
        ahat=StackedMat.from_blocks(ahat_blocks, block_rows=n, block_cols=n),
        bhat=StackedMat.from_blocks(bhat_blocks, block_rows=n, block_cols=m),
        e=e,
    )


def gen_noise_blocks(a, b, ns: float, density: float = 1.0, seed: int = 0):
    """One stochastic pair scaled from the base coefficients.

    Multiplies the base entries elementwise by uniform (0, 1] values on the
    base sparsity pattern (optionally subsampled to ``density``), scaled by
    ``ns``, so the noise pattern is contained in the base pattern and
    ``|A1|_F <= ns |A|_F``.
    """
    if ns < 0:
        raise ValueError("noise scale must be nonnegative")
    rng = np.random.default_rng(seed)
    a = sp.coo_matrix(a)
    keep = np.ones(a.nnz, dtype=bool)
    if density < 1.0:
        keep = rng.random(a.nnz) < density
    vals = a.data[keep] * (1.0 - rng.random(int(keep.sum())))  # uniform (0, 1]
    a1 = sp.csc_matrix(
        sp.coo_matrix((ns * vals, (a.row[keep], a.col[keep])), shape=a.shape)
    )
    b = np.asarray(b, dtype=float)
    mask_b = 1.0 - rng.random(b.shape)
    if density < 1.0:
        mask_b *= rng.random(b.shape) < density
    b1 = ns * b * mask_b
    return a1, b1


def gen_heat_problem(
    n: int, m: int, l: int, seed: int = 0, mass_matrix: bool = False,
    scale: float | None = None, damping: float = 0.0,
) -> StandardProblem:
    """Synthetic diffusion instance: stable 1D stencil, random unit input/output.

    A is the (n+1)^2-scaled second-difference stencil (symmetric negative
    definite), E optionally a tridiagonal SPD mass matrix, and B, C random
    dense with unit-norm columns/rows.  A deterministic desk-scale stand-in
    for the cooling-benchmark data when those are not on disk.

    ``scale`` overrides the (n+1)^2 stiffness and ``damping`` subtracts a
    multiple of the identity.  Both matter once multiplicative noise blocks
    are added on top: elementwise noise of relative size ns breaks the
    stencil's cancellation on smooth modes, contributing a mean-square
    growth of about 0.5 ns^2 scale^2 against a decay of only 2 |lambda_min|,
    so a stochastic instance that is meant to admit a stabilizing solution
    needs 2*damping to dominate that product.  (The cooling-benchmark data
    this stands in for have a much stronger slowest mode relative to their
    entry size than a fine pure stencil of equal dimension.)
    """
    if n < 3:
        raise ValueError("need n >= 3")
    if damping < 0:
        raise ValueError("damping must be nonnegative")
    rng = np.random.default_rng(seed)
    scale = float((n + 1) ** 2) if scale is None else float(scale)
    ones = np.ones(n - 1)
    a = sp.csc_matrix(
        scale * sp.diags([ones, -2.0 * np.ones(n), ones], [-1, 0, 1])
        - damping * sp.identity(n)
    )
    e = None
    if mass_matrix:
        e = sp.csc_matrix(sp.diags([ones / 6.0, 4.0 / 6.0 * np.ones(n), ones / 6.0], [-1, 0, 1]))
    b = rng.standard_normal((n, m))
    b /= np.linalg.norm(b, axis=0, keepdims=True)
    c = rng.standard_normal((l, n))
    c /= np.linalg.norm(c, axis=1, keepdims=True)
    return StandardProblem(
        a=a,
        b=b,
        c=c,
        ahat=StackedMat.from_blocks([], block_rows=n, block_cols=n),
        bhat=StackedMat.from_blocks([], block_rows=n, block_cols=m),
        e=e,
    )


def with_noise_blocks(
    base: StandardProblem, scales, seed: int = 0, density: float = 1.0
) -> StandardProblem:
    """Extend an r = 1 problem with one stochastic pair per noise scale."""
    if base.r != 1:
        raise ValueError("base problem must have r = 1")
    ahat, bhat = [], []
    for j, ns in enumerate(scales):
        a1, b1 = gen_noise_blocks(base.a, base.b, ns, density=density, seed=seed + j)
        ahat.append(a1)
        bhat.append(b1)
    return StandardProblem(
        a=base.a,
        b=base.b,
        c=base.c,
        ahat=StackedMat.from_blocks(ahat, block_rows=base.n, block_cols=base.n),
        bhat=StackedMat.from_blocks(bhat, block_rows=base.n, block_cols=base.m),
        e=base.e,
        kron_flip=base.kron_flip,
        f0=base.f0,
        kpi0=base.kpi0,
    )


@dataclass
class ExperimentConfig:
    """One grid specification; JSON config files mirror these fields."""

    problem: str | None = None
    generate: dict | None = None  # {"kind": "heat", "n": ..., "m": ..., "l": ...}
    r_cases: list = field(default_factory=lambda: [1, 2, 5])
    noise_scales: list = field(default_factory=lambda: [1e-5, 1e-4, 1e-3, 1e-2])
    noise_density: float = 1.0
    variants: list = field(default_factory=lambda: list(ALL_SHIFT_VARIANTS))
    tol: float = 1e-12
    max_iter: int = 300
    trunc_rel: float = 3.33e-15
    cap_cols: int | None = None
    max_cols_xi: int | None = None
    stop_on_stall: bool = False
    seed: int = 0
    output_dir: str | None = None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            raw = json.load(fh)
        variants = raw.pop("variants", None)
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys in {path}: {sorted(unknown)}")
        cfg = cls(**raw)
        if variants is not None:
            cfg.variants = [tuple(v) for v in variants]
        return cfg


def _base_problem(cfg: ExperimentConfig) -> StandardProblem:
    if cfg.problem:
        loaded = load_problem(cfg.problem)
        if isinstance(loaded, OriginalProblem):
            loaded = adapt_in_place(loaded)
        return loaded
    gen = dict(cfg.generate or {"kind": "heat", "n": 200, "m": 2, "l": 2})
    kind = gen.pop("kind", "heat")
    if kind != "heat":
        raise ValueError(f"unknown generator kind {kind!r}")
    gen.setdefault("seed", cfg.seed)
    return gen_heat_problem(**gen)


def _grid_cases(cfg: ExperimentConfig, base: StandardProblem):
    """(case label, problem) pairs following the benchmark design."""
    cases = []
    for r in cfg.r_cases:
        if r == 1:
            cases.append(("r1", base))
        elif r == 2:
            for j, ns in enumerate(cfg.noise_scales):
                p = with_noise_blocks(base, [ns], seed=cfg.seed + 100 + j,
                                      density=cfg.noise_density)
                cases.append((f"r2_ns{ns:g}", p))
        else:
            scales = list(cfg.noise_scales)[: r - 1]
            if len(scales) < r - 1:
                raise ValueError(f"r = {r} needs {r - 1} noise scales, "
                                 f"got {len(cfg.noise_scales)}")
            p = with_noise_blocks(base, scales, seed=cfg.seed + 100,
                                  density=cfg.noise_density)
            cases.append((f"r{r}", p))
    return cases


def solve_options_for(cfg: ExperimentConfig, strategy: str, s: int, mode: str) -> SolveOptions:
    return SolveOptions(
        tol_nres=cfg.tol,
        max_iter=cfg.max_iter,
        trunc_rel=cfg.trunc_rel,
        cap_cols=cfg.cap_cols,
        max_cols_xi=cfg.max_cols_xi,
        stop_on_stall=cfg.stop_on_stall,
        shift=ShiftConfig(strategy=strategy, window_s=s, mode=mode),
    )


def run_single(p: StandardProblem, opts: SolveOptions, label: str,
               out_dir=None) -> RunReport:
    """Solve one cell and optionally persist its trace and summary."""
    _, report = radi_solve(p, opts)
    report.label = label
    report.config["provenance"] = f"scare-radi {__version__}"
    report.config["problem"] = {"n": p.n, "m": p.m, "l": p.l, "r": p.r,
                                "generalized": p.is_generalized}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_")
        report.to_csv(out_dir / f"{stem}.csv")
        report.to_json(out_dir / f"{stem}.json")
    return report


def _worker_count(n_cells: int) -> int:
    env = os.environ.get("SCARE_RADI_THREADS")
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            cap = 1
        return min(cap, n_cells)
    return 1


def run_grid(cfg: ExperimentConfig) -> list[RunReport]:
    """Run the full case x variant grid, one report per cell.

    Cells are independent; worker parallelism is capped by the
    ``SCARE_RADI_THREADS`` environment variable (default: serial).  Failures
    inside a cell are recorded on its report instead of aborting the grid.
    """
    base = _base_problem(cfg)
    cells = [
        (f"{case}__{variant_label(strategy, s, mode)}", problem, strategy, s, mode)
        for case, problem in _grid_cases(cfg, base)
        for (strategy, s, mode) in cfg.variants
    ]

    def run_cell(cell):
        label, problem, strategy, s, mode = cell
        opts = solve_options_for(cfg, strategy, s, mode)
        try:
            return run_single(problem, opts, label, cfg.output_dir)
        except Exception as exc:  # record per-cell failures like non-convergence
            report = RunReport(label=label, flags="x")
            report.config["error"] = f"{type(exc).__name__}: {exc}"
            return report

    workers = _worker_count(len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run_cell, cells))
    else:
        reports = [run_cell(cell) for cell in cells]

    if cfg.output_dir is not None:
        _write_summary_table(reports, Path(cfg.output_dir) / "summary.json")
    return reports


def _write_summary_table(reports, path: Path):
    """Compact (ite, dim, time, remark) table across all cells."""
    table = {}
    for rep in reports:
        remark = rep.flags or ("" if rep.converged else f"nres={rep.final_nres:.3e}")
        table[rep.label] = {
            "ite": rep.iterations,
            "dim": rep.xi_width,
            "time": round(rep.wall_time, 4),
            "remark": remark,
        }
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
