"""Per-run convergence records and their CSV/JSON serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

__all__ = ["IterationRecord", "RunReport", "CSV_COLUMNS"]

CSV_COLUMNS = [
    "iter",
    "gamma",
    "nres",
    "cols_C",
    "cols_Xi",
    "nu_omega",
    "t_shift",
    "t_solve",
    "t_ltimes",
    "t_svd",
    "t_other",
]

TIMING_FIELDS = ("t_shift", "t_solve", "t_ltimes", "t_svd", "t_other")


@dataclass
class IterationRecord:
    k: int
    gamma: float
    nres: float
    cols_c: int
    cols_xi: int
    nu_omega: float
    t_shift: float = 0.0
    t_solve: float = 0.0
    t_ltimes: float = 0.0
    t_svd: float = 0.0
    t_other: float = 0.0

    def csv_row(self):
        return [
            self.k,
            repr(self.gamma),
            repr(self.nres),
            self.cols_c,
            self.cols_xi,
            repr(self.nu_omega),
            f"{self.t_shift:.6f}",
            f"{self.t_solve:.6f}",
            f"{self.t_ltimes:.6f}",
            f"{self.t_svd:.6f}",
            f"{self.t_other:.6f}",
        ]


@dataclass
class RunReport:
    """Convergence trace plus summary of one solver run.

    ``flags`` carries ``"m"`` when the solution-factor width cap stopped the
    run and ``"t"`` when the truncation-stall rule fired (the residual net of
    accumulated truncation debt dropped below tolerance while the total did
    not).
    """

    rows: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    xi_width: int = 0
    final_nres: float = 1.0
    wall_time: float = 0.0
    flags: str = ""
    backend: str = "scipy-superlu"
    label: str = ""
    config: dict = field(default_factory=dict)

    @property
    def nres_history(self):
        return [row.nres for row in self.rows]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(row.csv_row())

    def summary_dict(self, include_timings: bool = True) -> dict:
        out = {
            "label": self.label,
            "converged": self.converged,
            "iterations": self.iterations,
            "xi_width": self.xi_width,
            "final_nres": self.final_nres,
            "flags": self.flags,
            "backend": self.backend,
            "config": self.config,
        }
        if include_timings:
            out["wall_time"] = self.wall_time
        return out

    def numeric_content(self) -> dict:
        """Everything except wall times, for determinism comparisons."""
        rows = []
        for row in self.rows:
            d = asdict(row)
            for name in TIMING_FIELDS:
                d.pop(name)
            rows.append(d)
        return {"rows": rows, "summary": self.summary_dict(include_timings=False)}

    def to_json(self, path):
        payload = self.summary_dict()
        payload["rows"] = [asdict(r) for r in self.rows]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
