"""
Оркестрация экспериментов сценария: независимые прогоны в пуле потоков,
сбор RunManifest и запись результатов.
"""

from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.optimize import brentq
from scipy.special import j0, jn_zeros, y0

from config import settings

from .errors import Diverged, KSymError
from .geometry import Direction, DomainKind
from .grid import Field, build_laplacian
from .logger import logger
from .nonlin import Nonlinearity, NonlinearityKind
from .radial import solve_radial
from .scenario import Experiment, Scenario
from .solvers import SolveResult, continuation, distinctness, nehari_minimize, newton_solve
from .spectra import morse_index, smallest_eigs, truncation_trend
from .storage import emit_outputs, save_field, write_pgm
from .symmetry import classify, difference_field, xi_h_diagnostic


# --- Ожидаемые количества и эталоны ---

def expected_counts(nl: Nonlinearity, k_list: Sequence[int], mode: str = "positive") -> int:
    """
    Нижняя оценка числа различных решений.

    k_max + 1 для Лейна–Эмдена; для Энона j₁ = 1 + ⌈α/2⌉ (положительные)
    и j₂ = 1 + ⌈(2 + α)κ/2⌉ (нодальные).
    """
    if nl.kind is NonlinearityKind.HENON:
        if mode == "nodal":
            return 1 + math.ceil((2.0 + nl.alpha) * settings.KAPPA / 2.0)
        return 1 + math.ceil(nl.alpha / 2.0)
    return max(k_list) + 1


def disk_dirichlet_eigenvalues(radius: float = 1.0) -> Tuple[float, float]:
    """j₀,₁² / R² и j₁,₁² / R²: первое и второе (двукратное) собственные значения диска."""
    return float(jn_zeros(0, 1)[0] ** 2 / radius ** 2), float(jn_zeros(1, 1)[0] ** 2 / radius ** 2)


def annulus_dirichlet_eigenvalue(a: float, b: float) -> float:
    """Первый корень J₀(√λ a)Y₀(√λ b) − J₀(√λ b)Y₀(√λ a) = 0."""

    def cross(x):
        return j0(x * a) * y0(x * b) - j0(x * b) * y0(x * a)

    # Первый корень близок к π/(b − a)
    step = 0.05 * math.pi / (b - a)
    x = step
    while cross(x) * cross(x + step) > 0:
        x += step
    return float(brentq(cross, x, x + step, xtol=1e-14)) ** 2


# --- Манифест ---

@dataclass
class RunRecord:
    run_id: str
    k: int
    seed: str
    status: str = "ok"
    error: Optional[str] = None
    error_type: Optional[str] = None
    solve: Optional[Dict[str, Any]] = None
    morse_full: Optional[Dict[str, Any]] = None
    morse_k: Optional[Dict[str, Any]] = None
    symmetry: Optional[Dict[str, Any]] = None
    xi: Optional[Dict[str, Any]] = None
    branch: Optional[List[List[float]]] = None
    files: Dict[str, str] = field(default_factory=dict)
    wall_time: float = 0.0
    result: Optional[SolveResult] = field(default=None, repr=False)

    @property
    def numerical_failure(self) -> bool:
        return self.status == "failed"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run": self.run_id,
            "k": self.k,
            "seed": self.seed,
            "status": self.status,
            "error": self.error,
            "error_type": self.error_type,
            "solve": self.solve,
            "morse_full": self.morse_full,
            "morse_k": self.morse_k,
            "symmetry": self.symmetry,
            "xi": self.xi,
            "branch": self.branch,
            "files": self.files,
        }

    def summary_row(self) -> List[Any]:
        sym = self.symmetry or {}
        eigs = sym.get("sector_eigs") or [None, None]
        return [
            self.run_id,
            self.k,
            self.solve["energy"] if self.solve else None,
            self.solve["residual"] if self.solve else None,
            self.morse_full["index"] if self.morse_full else None,
            self.morse_k["index"] if self.morse_k else None,
            sym.get("verdict", self.status if self.status != "ok" else None),
            sym.get("psi_star"),
            eigs[0],
            eigs[1],
        ]


@dataclass
class RunManifest:
    scenario: Scenario
    records: List[RunRecord] = field(default_factory=list)
    distinctness: Optional[Dict[str, Any]] = None
    refinement: Optional[List[Dict[str, float]]] = None
    truncation: Optional[List[List[float]]] = None
    seed_rng: Optional[int] = None
    total_time: float = 0.0

    @property
    def failed(self) -> List[RunRecord]:
        return [r for r in self.records if r.numerical_failure]

    def to_report(self) -> Dict[str, Any]:
        s = self.scenario
        return {
            "tool": "ksym",
            "version": settings.VERSION,
            "scenario": {"name": s.name, "hash": s.hash, "experiment": s.experiment.value},
            "grid": {"domain": s.domain.to_dict(), "N_r": s.n_r, "N_theta": s.n_theta},
            "nonlinearity": s.nonlinearity.to_config() if s.nonlinearity else None,
            "runs": [r.to_dict() for r in self.records],
            "distinctness": self.distinctness,
            "refinement": self.refinement,
            "truncation": self.truncation,
        }

    def timings(self) -> Dict[str, Any]:
        return {
            "scenario_hash": self.scenario.hash,
            "seed_rng": self.seed_rng,
            "total": self.total_time,
            "runs": {r.run_id: r.wall_time for r in self.records},
        }

    def h_profile_rows(self) -> List[List[Any]]:
        rows = []
        for record in self.records:
            if record.xi:
                rows.extend([record.run_id, row[1], row[2]] for row in record.xi["rows"])
        return rows


# --- Прогоны ---

def _run_id(k: int, seed: str) -> str:
    return f"k{k}-" + re.sub(r"[^A-Za-z0-9_-]+", "", seed)


class Runner:
    """Выполняет сценарий и пишет результаты в out_dir."""

    def __init__(self, scenario: Scenario, out_dir, workers: int = 1, seed_rng: Optional[int] = None):
        self.scenario = scenario
        self.out_dir = Path(out_dir)
        self.workers = max(1, int(workers))
        self.seed_rng = seed_rng
        self.grid = scenario.make_grid()
        self.nl = scenario.nonlinearity

    # Решение одного прогона

    def _solve(self, k: int, seed: str, record: RunRecord) -> SolveResult:
        s = self.scenario
        if self.nl.homogeneous:
            return nehari_minimize(
                self.grid, self.nl, k, seed, s.mode,
                tol=s.solver.tol, maxiter=s.solver.nehari_maxiter, gtol=s.solver.nehari_gtol,
            )
        branch = continuation(self.grid, self.nl, s.continuation, k, s.solver.tol)
        record.branch = [[s.continuation[i], b.energy, b.residual, b.u.sup_norm()]
                         for i, b in enumerate(branch)]
        if len(branch) < len(s.continuation):
            raise Diverged(f"continuation stopped after {len(branch)} of {len(s.continuation)} values")
        return branch[-1]

    def _radial(self, record: RunRecord) -> SolveResult:
        s = self.scenario
        profile = solve_radial(s.domain, self.nl, s.mode, s.n_r)
        return newton_solve(self.grid, self.nl, profile.lift(self.grid), 1, s.solver.tol,
                            s.solver.newton_maxiter, provenance=f"radial:{s.mode}")

    def _save(self, record: RunRecord, name: str, u: Field):
        run_dir = self.out_dir / "runs" / record.run_id
        header = save_field(u, run_dir / name)
        write_pgm(u, run_dir / f"{name}.pgm")
        record.files[name] = header.relative_to(self.out_dir).as_posix()
        record.files[f"{name}_pgm"] = (run_dir / f"{name}.pgm").relative_to(self.out_dir).as_posix()

    def _execute(self, record: RunRecord, solve: Callable[[RunRecord], SolveResult]) -> RunRecord:
        exp = self.scenario.experiment
        started = time.perf_counter()
        try:
            result = solve(record)
            record.result = result
            record.solve = result.to_dict()
            self._save(record, "u", result.u)

            record.morse_full = morse_index(result.u, self.nl).to_dict()
            if record.k > 0:
                record.morse_k = morse_index(result.u, self.nl, record.k).to_dict()
            if exp is not Experiment.SPECTRUM:
                for key in (record.morse_full, record.morse_k):
                    if key:
                        key.pop("eigenvalues", None)

            classified = exp in (Experiment.CLASSIFY, Experiment.XI_DIAGNOSTIC)
            if classified or (exp is Experiment.MULTIPLICITY and record.k > 0):
                report = classify(result.u, self.nl, record.k)
                if exp is Experiment.XI_DIAGNOSTIC:
                    report.h_samples = xi_h_diagnostic(result.u, self.nl, record.k)
                    record.xi = report.h_samples.to_dict()
                record.symmetry = report.to_dict()
                record.symmetry.pop("h_samples", None)
                if report.psi_star is not None:
                    self._save(record, "w_psi", difference_field(result.u, Direction(report.psi_star)))
        except KSymError as e:
            record.status = "failed"
            record.error = str(e)
            record.error_type = type(e).__name__
            logger.error(f"Run {record.run_id} failed: {e}", exc_info=True)
        except Exception as e:
            record.status = "failed"
            record.error = str(e)
            record.error_type = type(e).__name__
            logger.error(f"Run {record.run_id} crashed: {e}", exc_info=True)
        record.wall_time = time.perf_counter() - started
        return record

    def _tasks(self) -> List[Tuple[RunRecord, Callable[[RunRecord], SolveResult]]]:
        s = self.scenario
        tasks = []
        if s.experiment is Experiment.MULTIPLICITY:
            tasks.append((RunRecord("radial", 0, "radial"), self._radial))
            for k in s.k_list:
                seed = s.seeds[0]
                tasks.append((RunRecord(_run_id(k, seed), k, seed),
                              lambda rec, k=k, seed=seed: self._solve(k, seed, rec)))
            return tasks
        seeds = s.seeds if self.nl.homogeneous else ["continuation"]
        for k in s.k_list:
            for seed in seeds:
                tasks.append((RunRecord(_run_id(k, seed), k, seed),
                              lambda rec, k=k, seed=seed: self._solve(k, seed, rec)))
        return tasks

    # Эксперименты без решателя

    def _refinement(self) -> List[Dict[str, float]]:
        s = self.scenario
        d = s.domain
        if d.kind is DomainKind.DISK:
            oracle = disk_dirichlet_eigenvalues(d.r_outer)[0]
        else:
            oracle = annulus_dirichlet_eigenvalue(d.r_inner, d.r_outer)
        rows, prev = [], None
        for level in range(s.refinement_levels):
            grid = s.make_grid(level)
            lam = float(smallest_eigs(build_laplacian(grid), 1).eigenvalues[0])
            err = abs(lam - oracle)
            ratio = prev / err if prev is not None and err > 0 else None
            logger.info(f"Refinement level {level} ({grid.n_r}x{grid.n_theta}): lambda1={lam:.10g}, "
                        f"error={err:.3e}, ratio={ratio}")
            rows.append({"level": level, "N_r": grid.n_r, "N_theta": grid.n_theta,
                         "lambda1": lam, "oracle": oracle, "error": err, "ratio": ratio})
            prev = err
        return rows

    def _distinctness(self, records: List[RunRecord]) -> Dict[str, Any]:
        ok = [r for r in records if r.result is not None]
        n = len(ok)
        distance = np.zeros((n, n))
        distinct = np.zeros((n, n), dtype=bool)
        for i in range(n):
            for j in range(i + 1, n):
                d = distinctness(ok[i].result, ok[j].result)
                distance[i, j] = distance[j, i] = d.distance
                distinct[i, j] = distinct[j, i] = d.distinct
        # Классы «одинаковых с точностью до поворота»
        classes: List[int] = []
        for i in range(n):
            if all(distinct[i, j] for j in classes):
                classes.append(i)
        expected = expected_counts(self.nl, self.scenario.k_list, self.scenario.mode)
        logger.info(f"Multiplicity: {len(classes)} distinct solution(s), expected at least {expected}")
        return {
            "runs": [r.run_id for r in ok],
            "distance": distance.tolist(),
            "distinct": distinct.tolist(),
            "distinct_count": len(classes),
            "expected_count": expected,
            "meets_expected": len(classes) >= expected,
        }

    def run(self) -> RunManifest:
        s = self.scenario
        started = time.perf_counter()
        logger.info(f"Running '{s.name}' ({s.experiment.value}) on {self.grid}, workers={self.workers}")
        manifest = RunManifest(s, seed_rng=self.seed_rng)

        if s.experiment is Experiment.REFINEMENT:
            manifest.refinement = self._refinement()
        else:
            tasks = self._tasks()
            manifest.records = Parallel(n_jobs=self.workers, prefer="threads")(
                delayed(self._execute)(record, solve) for record, solve in tasks
            )
            if s.experiment is Experiment.MULTIPLICITY:
                manifest.distinctness = self._distinctness(manifest.records)

        if s.truncation_radii:
            k = min(s.k_list)
            manifest.truncation = [list(row) for row in truncation_trend(
                s.domain, s.truncation_radii, s.truncation_nodes_per_unit, s.n_theta, k)]

        manifest.total_time = time.perf_counter() - started
        emit_outputs(manifest, self.out_dir)
        failed = manifest.failed
        if failed:
            logger.warning(f"{len(failed)} of {len(manifest.records)} run(s) failed")
        return manifest
