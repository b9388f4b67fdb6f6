"""
Геометрия радиальных областей: направления, отражения σ_e, повороты R_{2π/k}
и секторы S_{2k,e}, S^±_{k,e} — всё в виде точных перестановок узлов сетки.

Узлы нумеруются плоским индексом n = i * N_θ + j (сначала r, затем θ).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np

from .errors import AxisNotGridAligned, IncompatibleSymmetry

if TYPE_CHECKING:
    from .grid import PolarGrid

TWO_PI = 2.0 * math.pi


class DomainKind(str, Enum):
    DISK = "Disk"
    ANNULUS = "Annulus"
    TRUNCATED_EXTERIOR = "TruncatedExterior"


@dataclass(frozen=True)
class DomainSpec:
    """Радиально симметричная область: диск, кольцо или усечённая внешность шара."""

    kind: DomainKind
    r_inner: float
    r_outer: float

    def __post_init__(self):
        object.__setattr__(self, "kind", DomainKind(self.kind))
        if self.kind is DomainKind.DISK and self.r_inner != 0.0:
            raise ValueError("Disk requires r_inner = 0")
        if self.kind is not DomainKind.DISK and not self.r_inner > 0.0:
            raise ValueError(f"{self.kind.value} requires r_inner > 0")
        if not self.r_outer > self.r_inner:
            raise ValueError("r_outer must exceed r_inner")

    @classmethod
    def disk(cls, radius: float = 1.0) -> "DomainSpec":
        return cls(DomainKind.DISK, 0.0, float(radius))

    @classmethod
    def annulus(cls, r_inner: float, r_outer: float) -> "DomainSpec":
        return cls(DomainKind.ANNULUS, float(r_inner), float(r_outer))

    @classmethod
    def truncated_exterior(cls, r_inner: float, r_far: float) -> "DomainSpec":
        return cls(DomainKind.TRUNCATED_EXTERIOR, float(r_inner), float(r_far))

    @property
    def area(self) -> float:
        return math.pi * (self.r_outer ** 2 - self.r_inner ** 2)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "r_inner": self.r_inner, "r_outer": self.r_outer}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DomainSpec":
        return cls(DomainKind(data["kind"]), float(data["r_inner"]), float(data["r_outer"]))


@dataclass(frozen=True)
class Direction:
    """Направление e = (cos ψ, sin ψ); ψ хранится по модулю 2π."""

    psi: float

    def __post_init__(self):
        object.__setattr__(self, "psi", float(self.psi) % TWO_PI)

    @classmethod
    def from_lattice(cls, m: int, n_theta: int) -> "Direction":
        """Направление ψ_m = mπ/N_θ."""
        return cls(math.pi * (m % (2 * n_theta)) / n_theta)

    @property
    def e(self) -> np.ndarray:
        return np.array([math.cos(self.psi), math.sin(self.psi)])

    @property
    def e_perp(self) -> np.ndarray:
        return np.array([-math.sin(self.psi), math.cos(self.psi)])

    def lattice_index(self, n_theta: int) -> int:
        """
        Индекс m направления на решётке mπ/N_θ.

        Raises:
            AxisNotGridAligned: если ψ не кратно π/N_θ
        """
        x = self.psi * n_theta / math.pi
        m = int(round(x))
        if abs(x - m) > 1e-9 * max(1.0, abs(x)):
            raise AxisNotGridAligned(
                f"psi={self.psi:.12g} is not a multiple of pi/{n_theta}"
            )
        return m % (2 * n_theta)


class SectorPart(str, Enum):
    PLUS = "Plus"
    MINUS = "Minus"
    DOUBLE = "Double"


@dataclass(frozen=True)
class SectorSpec:
    k: int
    direction: Direction
    part: SectorPart

    def __post_init__(self):
        if int(self.k) < 1:
            raise ValueError("k must be a positive integer")
        object.__setattr__(self, "part", SectorPart(self.part))

    def label(self) -> str:
        return f"{self.part.value}(k={self.k}, psi={self.direction.psi:.6f})"


@dataclass(frozen=True)
class NodeMask:
    """
    Маска внутренних узлов и помеченные граничные множества.

    gamma1 — узлы, примыкающие к ∂Ω (на ячеечной сетке узлов на ∂Ω нет),
    gamma2 — узлы на оси r_e, gamma3 — узлы на краях r_{ψ±π/k}.
    Все массивы плоские, длины N_r * N_θ.
    """

    interior: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray
    sector: Optional[SectorSpec] = None

    def __post_init__(self):
        for name in ("interior", "gamma1", "gamma2", "gamma3"):
            arr = np.asarray(getattr(self, name), dtype=bool).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self) -> int:
        return self.interior.size

    @property
    def count(self) -> int:
        return int(self.interior.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior)

    @property
    def labeled(self) -> np.ndarray:
        """Узлы на прямых краях сектора (Дирихле прямо в узле)."""
        return self.gamma2 | self.gamma3


def _node_arrays(n_r: int, n_theta: int):
    i = np.repeat(np.arange(n_r), n_theta)
    j = np.tile(np.arange(n_theta), n_r)
    return i, j


def reflection_permutation(n_r: int, n_theta: int, e: Direction) -> np.ndarray:
    """
    Перестановка узлов для σ_e: (r_i, θ_j) → (r_i, 2ψ − θ_j).

    При ψ = mπ/N_θ угол 2ψ − θ_j = θ_{m−j}, поэтому j' = (m − j) mod N_θ.
    """
    m = e.lattice_index(n_theta)
    i, j = _node_arrays(n_r, n_theta)
    return i * n_theta + (m - j) % n_theta


def rotation_permutation(n_r: int, n_theta: int, k: int, steps: int = 1) -> np.ndarray:
    """Перестановка узлов для поворота на steps * 2π/k."""
    if n_theta % k:
        raise IncompatibleSymmetry(f"N_theta={n_theta} is not divisible by k={k}")
    shift = steps * (n_theta // k)
    i, j = _node_arrays(n_r, n_theta)
    return i * n_theta + (j + shift) % n_theta


def reflect_node(grid: "PolarGrid", e: Direction, node: int) -> int:
    return int(reflection_permutation(grid.n_r, grid.n_theta, e)[node])


def rotate_node(grid: "PolarGrid", k: int, node: int) -> int:
    return int(rotation_permutation(grid.n_r, grid.n_theta, k)[node])


def angular_offsets(n_theta: int, m: int) -> np.ndarray:
    """
    Смещение θ_j − ψ_m в единицах π/N_θ, приведённое в [0, 2N_θ).

    θ_j = 2jπ/N_θ, ψ_m = mπ/N_θ, поэтому смещение равно (2j − m) mod 2N_θ;
    это целочисленная арифметика без ошибок округления.
    """
    j = np.arange(n_theta)
    return (2 * j - m) % (2 * n_theta)


def _boundary_rings(grid: "PolarGrid") -> np.ndarray:
    rings = np.zeros(grid.n_r, dtype=bool)
    rings[-1] = True
    if grid.domain.kind is not DomainKind.DISK:
        rings[0] = True
    return np.repeat(rings, grid.n_theta)


def whole_mask(grid: "PolarGrid") -> NodeMask:
    n = grid.n_nodes
    none = np.zeros(n, dtype=bool)
    return NodeMask(np.ones(n, dtype=bool), _boundary_rings(grid), none, none)


def sector_mask(grid: "PolarGrid", spec: SectorSpec) -> NodeMask:
    """
    Маска открытого сектора S^+_{k,e}, S^-_{k,e} или S_{2k,e}.

    Args:
        grid: полярная сетка
        spec: k, направление и часть сектора

    Returns:
        NodeMask с внутренними узлами и метками Γ₁, Γ₂, Γ₃

    Raises:
        IncompatibleSymmetry: если N_θ не делится на 2k или меньше 4k
        AxisNotGridAligned: если направление вне решётки
    """
    k = spec.k
    n_theta = grid.n_theta
    if n_theta % (2 * k):
        raise IncompatibleSymmetry(f"N_theta={n_theta} is not divisible by 2k={2 * k}")
    if n_theta < 4 * k:
        # При N_θ = 2k открытый полусектор чётного направления пуст
        raise IncompatibleSymmetry(f"N_theta={n_theta} is below 4k={4 * k}: half-sectors have no nodes")
    m = spec.direction.lattice_index(n_theta)
    d = angular_offsets(n_theta, m)
    span = n_theta // k  # π/k в единицах π/N_θ
    full = 2 * n_theta

    plus = (d > 0) & (d < span)
    minus = (d > full - span) & (d < full)
    axis = d == 0
    edge_plus = d == span
    edge_minus = d == (full - span) % full

    if spec.part is SectorPart.PLUS:
        cols, g3 = plus, edge_plus
    elif spec.part is SectorPart.MINUS:
        cols, g3 = minus, edge_minus
    else:
        cols, g3 = plus | minus | axis, edge_plus | edge_minus

    interior = np.tile(cols, grid.n_r)
    gamma2 = np.tile(axis, grid.n_r)
    gamma3 = np.tile(g3, grid.n_r)
    gamma1 = interior & _boundary_rings(grid)
    return NodeMask(interior, gamma1, gamma2, gamma3, sector=spec)
