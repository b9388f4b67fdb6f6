"""
Сценарий эксперимента: строгая JSON-схема, проверка предусловий до расчёта
и хеш для воспроизводимости.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from config import settings

from .errors import ConfigError
from .geometry import DomainKind, DomainSpec
from .grid import PolarGrid
from .logger import logger
from .nonlin import Nonlinearity
from .solvers import SEED_PATTERN, seed_changes_sign


class Experiment(str, Enum):
    SOLVE = "Solve"
    SPECTRUM = "Spectrum"
    CLASSIFY = "Classify"
    MULTIPLICITY = "Multiplicity"
    XI_DIAGNOSTIC = "XiDiagnostic"
    REFINEMENT = "Refinement"


# Допустимые ключи по уровням схемы
_TOP_KEYS = {
    "name", "experiment", "domain", "grid", "nonlinearity", "k_list", "seeds", "mode",
    "solver", "continuation", "refinement", "truncation",
}
_REQUIRED = ("name", "experiment", "domain", "grid", "k_list")
_DOMAIN_KEYS = {"kind", "r_inner", "r_outer"}
_GRID_KEYS = {"n_r", "n_theta"}
_NONLIN_KEYS = {"kind", "params"}
_SOLVER_KEYS = {"tol", "newton_maxiter", "nehari_maxiter", "nehari_gtol"}
_REFINEMENT_KEYS = {"levels"}
_TRUNCATION_KEYS = {"radii", "nodes_per_unit"}


@dataclass(frozen=True)
class SolverSettings:
    tol: float = settings.NEWTON_TOL
    newton_maxiter: int = settings.NEWTON_MAXITER
    nehari_maxiter: int = settings.NEHARI_MAXITER
    nehari_gtol: float = settings.NEHARI_GTOL


@dataclass
class Scenario:
    name: str
    experiment: Experiment
    domain: DomainSpec
    n_r: int
    n_theta: int
    nonlinearity: Optional[Nonlinearity]
    k_list: List[int]
    seeds: List[str] = field(default_factory=lambda: ["radial"])
    mode: str = "positive"
    solver: SolverSettings = field(default_factory=SolverSettings)
    continuation: List[float] = field(default_factory=list)
    refinement_levels: int = 3
    truncation_radii: List[float] = field(default_factory=list)
    truncation_nodes_per_unit: int = 16
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def hash(self) -> str:
        return scenario_hash(self.raw)

    def make_grid(self, level: int = 0) -> PolarGrid:
        """Сетка сценария; level > 0 удваивает обе размерности level раз."""
        scale = 2 ** level
        return PolarGrid(self.domain, self.n_r * scale, self.n_theta * scale)

    @classmethod
    def load(cls, path) -> "Scenario":
        """
        Читает и проверяет сценарий.

        Raises:
            ConfigError: файл не читается, не JSON или нарушает схему
        """
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("<file>", f"scenario file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError("<file>", f"invalid JSON: {e}")
        scenario = cls.from_dict(data)
        logger.info(f"Loaded scenario '{scenario.name}' ({scenario.experiment.value}) from {path}")
        return scenario

    @classmethod
    def from_dict(cls, data: Any) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "scenario must be a JSON object")
        _check_keys(data, _TOP_KEYS, "")
        for key in _REQUIRED:
            if key not in data:
                raise ConfigError(key, "missing required field")

        name = data["name"]
        if not isinstance(name, str) or not name or "/" in name:
            raise ConfigError("name", "must be a non-empty string without '/'")
        try:
            experiment = Experiment(data["experiment"])
        except ValueError:
            raise ConfigError("experiment", f"unknown experiment {data['experiment']!r}")

        domain = _parse_domain(data["domain"])
        n_r, n_theta = _parse_grid(data["grid"])
        k_list = _parse_k_list(data["k_list"])

        lcm = reduce(lambda a, b: a * b // math.gcd(a, b), k_list, 1)
        if n_theta % (2 * lcm):
            raise ConfigError("grid.n_theta", f"{n_theta} is not divisible by 2*lcm(k_list) = {2 * lcm}")
        if n_theta < 4 * max(k_list):
            # Иначе в открытом полусекторе S^+ нет узлов
            raise ConfigError("grid.n_theta", f"{n_theta} is below 4*max(k_list) = {4 * max(k_list)}")

        nl = None
        if "nonlinearity" in data:
            nl = _parse_nonlinearity(data["nonlinearity"])
        elif experiment is not Experiment.REFINEMENT:
            raise ConfigError("nonlinearity", "missing required field")

        mode = data.get("mode", "positive")
        if mode not in ("positive", "nodal"):
            raise ConfigError("mode", f"must be 'positive' or 'nodal', got {mode!r}")

        seeds = data.get("seeds", ["radial"])
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("seeds", "must be a non-empty list")
        for idx, seed in enumerate(seeds):
            _check_seed(seed, k_list, f"seeds[{idx}]")

        solver = _parse_solver(data.get("solver", {}))
        continuation = _number_list(data.get("continuation", []), "continuation")

        levels = 3
        if "refinement" in data:
            ref = data["refinement"]
            _check_object(ref, "refinement")
            _check_keys(ref, _REFINEMENT_KEYS, "refinement")
            levels = _int(ref.get("levels", 3), "refinement.levels", minimum=2)

        radii, per_unit = [], 16
        if "truncation" in data:
            trunc = data["truncation"]
            _check_object(trunc, "truncation")
            _check_keys(trunc, _TRUNCATION_KEYS, "truncation")
            if domain.kind is not DomainKind.TRUNCATED_EXTERIOR:
                raise ConfigError("truncation", "only meaningful for TruncatedExterior domains")
            radii = _number_list(trunc.get("radii", []), "truncation.radii")
            if any(r <= domain.r_inner for r in radii):
                raise ConfigError("truncation.radii", "every radius must exceed r_inner")
            per_unit = _int(trunc.get("nodes_per_unit", 16), "truncation.nodes_per_unit", minimum=2)

        scenario = cls(
            name, experiment, domain, n_r, n_theta, nl, k_list, list(seeds), mode, solver,
            continuation, levels, radii, per_unit, raw=data,
        )
        _check_preconditions(scenario)
        return scenario


def scenario_hash(data: Dict[str, Any]) -> str:
    """sha256 канонического JSON (сортированные ключи, без пробелов)."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# --- Разбор полей ---

def _path(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _check_object(value: Any, path: str):
    if not isinstance(value, dict):
        raise ConfigError(path, "must be a JSON object")


def _check_keys(data: Dict[str, Any], allowed: set, prefix: str):
    for key in sorted(data):
        if key not in allowed:
            raise ConfigError(_path(prefix, key), "unknown key")


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"must be a finite number, got {value!r}")
    return float(value)


def _int(value: Any, path: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _number_list(value: Any, path: str) -> List[float]:
    if not isinstance(value, list):
        raise ConfigError(path, "must be a list of numbers")
    return [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _parse_domain(data: Any) -> DomainSpec:
    _check_object(data, "domain")
    _check_keys(data, _DOMAIN_KEYS, "domain")
    for key in ("kind", "r_outer"):
        if key not in data:
            raise ConfigError(f"domain.{key}", "missing required field")
    try:
        kind = DomainKind(data["kind"])
    except ValueError:
        raise ConfigError("domain.kind", f"unknown domain kind {data['kind']!r}")
    r_inner = _number(data.get("r_inner", 0.0), "domain.r_inner")
    r_outer = _number(data["r_outer"], "domain.r_outer")
    try:
        return DomainSpec(kind, r_inner, r_outer)
    except ValueError as e:
        raise ConfigError("domain", str(e))


def _parse_grid(data: Any) -> Tuple[int, int]:
    _check_object(data, "grid")
    _check_keys(data, _GRID_KEYS, "grid")
    n_r = _int(data.get("n_r", settings.DEFAULT_N_R), "grid.n_r", minimum=2)
    n_theta = _int(data.get("n_theta", settings.DEFAULT_N_THETA), "grid.n_theta", minimum=8)
    if n_theta % 2:
        raise ConfigError("grid.n_theta", "must be even")
    return n_r, n_theta


def _parse_k_list(data: Any) -> List[int]:
    if not isinstance(data, list) or not data:
        raise ConfigError("k_list", "must be a non-empty list of positive integers")
    ks = [_int(k, f"k_list[{i}]") for i, k in enumerate(data)]
    if len(set(ks)) != len(ks):
        raise ConfigError("k_list", "duplicate entries")
    return ks


def _parse_nonlinearity(data: Any) -> Nonlinearity:
    _check_object(data, "nonlinearity")
    _check_keys(data, _NONLIN_KEYS, "nonlinearity")
    if "kind" not in data:
        raise ConfigError("nonlinearity.kind", "missing required field")
    params = data.get("params", {})
    _check_object(params, "nonlinearity.params")
    for key, value in params.items():
        _number(value, f"nonlinearity.params.{key}")
    try:
        return Nonlinearity.from_config({"kind": data["kind"], "params": params})
    except ValueError as e:
        raise ConfigError("nonlinearity", str(e))


def _parse_solver(data: Any) -> SolverSettings:
    _check_object(data, "solver")
    _check_keys(data, _SOLVER_KEYS, "solver")
    defaults = SolverSettings()
    tol = _number(data.get("tol", defaults.tol), "solver.tol")
    gtol = _number(data.get("nehari_gtol", defaults.nehari_gtol), "solver.nehari_gtol")
    if tol <= 0 or gtol <= 0:
        raise ConfigError("solver", "tolerances must be positive")
    return SolverSettings(
        tol,
        _int(data.get("newton_maxiter", defaults.newton_maxiter), "solver.newton_maxiter"),
        _int(data.get("nehari_maxiter", defaults.nehari_maxiter), "solver.nehari_maxiter"),
        gtol,
    )


def _check_seed(seed: Any, k_list: List[int], path: str):
    if not isinstance(seed, str):
        raise ConfigError(path, "seed must be a string")
    match = SEED_PATTERN.match(seed)
    if not match:
        raise ConfigError(path, f"unknown seed {seed!r}")
    if match.group(2) is not None:
        q = int(match.group(2))
        bad = [k for k in k_list if q < 1 or q % k]
        if bad:
            raise ConfigError(path, f"{seed!r} is not invariant for k in {bad}")


def _check_preconditions(s: Scenario):
    """Предусловия модулей, проверяемые до любых вычислений."""
    nl = s.nonlinearity
    if s.experiment is Experiment.REFINEMENT:
        return
    if nl.homogeneous:
        if s.continuation:
            raise ConfigError("continuation", f"{nl.kind.value} has exact Nehari scaling; continuation is for exponential kinds")
        if s.experiment is Experiment.XI_DIAGNOSTIC and s.mode != "nodal":
            raise ConfigError("mode", "XiDiagnostic needs a nodal minimizer (k-invariant Morse index 2)")
        if s.mode == "nodal":
            for idx, seed in enumerate(s.seeds):
                kind, q = SEED_PATTERN.match(seed).groups()
                bad = [k for k in s.k_list if not seed_changes_sign(kind, int(q or k), k)]
                if bad:
                    raise ConfigError(f"seeds[{idx}]", f"{seed!r} does not change sign after projection for k in {bad}")
        return
    # Экспоненциальные виды: только продолжение по параметру из нуля
    if s.mode == "nodal":
        raise ConfigError("mode", f"nodal least-energy solutions need LaneEmden or Henon, got {nl.kind.value}")
    if s.experiment in (Experiment.MULTIPLICITY, Experiment.XI_DIAGNOSTIC):
        raise ConfigError("nonlinearity.kind", f"{s.experiment.value} needs LaneEmden or Henon")
    if not s.continuation:
        raise ConfigError("continuation", f"{nl.kind.value} solutions are traced by continuation; list the parameter values")
    if any(v <= 0 for v in s.continuation):
        raise ConfigError("continuation", "parameter values must be positive")
