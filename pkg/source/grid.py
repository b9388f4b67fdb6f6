"""
Полярная тензорная сетка, поля на ней и дискретный оператор −Δ с условиями Дирихле.

Сетка ячеечная по r: r_i = r_inner + (i + ½)Δr, поэтому полюс диска вне сетки.
По θ узлы θ_j = 2πj/N_θ. Оператор собирается в форме конечных объёмов,
так что K симметрична, а уравнение −Δu = g имеет вид K u = M g, M = diag(quad_w).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import IncompatibleSymmetry, MaskMismatch
from .geometry import DomainKind, DomainSpec, NodeMask, whole_mask
from .logger import logger


class PolarGrid:
    """Дискретизация радиальной области с квадратурными весами r_i Δr Δθ."""

    def __init__(self, domain: DomainSpec, n_r: int, n_theta: int):
        """
        Args:
            domain: область (диск, кольцо, усечённая внешность)
            n_r: число узлов по r
            n_theta: число узлов по θ (чётное, не меньше 8)
        """
        if n_theta < 8 or n_theta % 2:
            raise ValueError(f"N_theta must be even and >= 8, got {n_theta}")
        if n_r < 2:
            raise ValueError(f"N_r must be >= 2, got {n_r}")

        self.domain = domain
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.dr = (domain.r_outer - domain.r_inner) / self.n_r
        self.dtheta = 2.0 * math.pi / self.n_theta

        self.r = domain.r_inner + (np.arange(self.n_r) + 0.5) * self.dr
        self.theta = self.dtheta * np.arange(self.n_theta)
        # Радиусы граней между ячейками i и i+1
        self.r_faces = domain.r_inner + np.arange(1, self.n_r) * self.dr
        self.quad_w = np.outer(self.r * self.dr * self.dtheta, np.ones(self.n_theta))

        for arr in (self.r, self.theta, self.r_faces, self.quad_w):
            arr.flags.writeable = False

    def __repr__(self) -> str:
        return f"PolarGrid({self.domain.kind.value}, N_r={self.n_r}, N_theta={self.n_theta})"

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_r, self.n_theta

    @property
    def n_nodes(self) -> int:
        return self.n_r * self.n_theta

    @property
    def signature(self) -> tuple:
        return (self.domain, self.n_r, self.n_theta)

    def compatible(self, other: "PolarGrid") -> bool:
        return self is other or self.signature == other.signature

    def node(self, i: int, j: int) -> int:
        return i * self.n_theta + (j % self.n_theta)

    def node_ij(self, node: int) -> Tuple[int, int]:
        return divmod(int(node), self.n_theta)

    @cached_property
    def r_nodes(self) -> np.ndarray:
        """Радиус каждого узла, форма (N_r, N_θ)."""
        out = np.repeat(self.r[:, None], self.n_theta, axis=1)
        out.flags.writeable = False
        return out

    @cached_property
    def xy(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.r_nodes * np.cos(self.theta), self.r_nodes * np.sin(self.theta)

    # --- Проводимости конечно-объёмной схемы ---

    @cached_property
    def radial_conductance(self) -> np.ndarray:
        """r_{i+½} Δθ / Δr для внутренних граней."""
        return self.r_faces * self.dtheta / self.dr

    @cached_property
    def angular_conductance(self) -> np.ndarray:
        """Δr / (r_i Δθ) для граней между соседями по θ на кольце i."""
        return self.dr / (self.r * self.dtheta)

    @cached_property
    def boundary_conductance(self) -> Tuple[float, float]:
        """
        Проводимости граней Дирихле (внутренняя, внешняя).

        Значение на грани равно нулю, ближайший узел на расстоянии Δr/2, отсюда 2r/Δr.
        Для диска внутренняя грань — полюс с r_{-½} = 0: связь узла (r_0, θ_j)
        с (r_0, θ_j + π) через начало координат имеет нулевой вес.
        """
        inner = 2.0 * self.domain.r_inner * self.dtheta / self.dr
        outer = 2.0 * self.domain.r_outer * self.dtheta / self.dr
        if self.domain.kind is DomainKind.DISK:
            inner = 0.0
        return inner, outer

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Симметричная матрица K дискретного −Δ на всей области (M-матрица)."""
        n_r, n_t = self.n_r, self.n_theta
        idx = np.arange(self.n_nodes).reshape(n_r, n_t)
        rows, cols, vals = [], [], []

        def couple(a: np.ndarray, b: np.ndarray, c: np.ndarray):
            rows.extend([a, b, a, b])
            cols.extend([a, b, b, a])
            vals.extend([c, c, -c, -c])

        # Радиальные грани
        c_r = np.repeat(self.radial_conductance[:, None], n_t, axis=1)
        couple(idx[:-1].ravel(), idx[1:].ravel(), c_r.ravel())
        # Угловые грани (периодичность по θ)
        c_t = np.repeat(self.angular_conductance[:, None], n_t, axis=1)
        couple(idx.ravel(), np.roll(idx, -1, axis=1).ravel(), c_t.ravel())
        # Грани Дирихле на ∂Ω
        g_in, g_out = self.boundary_conductance
        rows.extend([idx[0], idx[-1]])
        cols.extend([idx[0], idx[-1]])
        vals.extend([np.full(n_t, g_in), np.full(n_t, g_out)])

        K = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_nodes, self.n_nodes),
        ).tocsr()
        K.eliminate_zeros()
        logger.debug(f"Assembled stiffness for {self}: nnz={K.nnz}")
        return K

    def neg_laplacian(self, values: np.ndarray) -> np.ndarray:
        """
        −Δ_h u в потоковой форме, без сборки матрицы.

        Равно (K u) / quad_w, но разности считаются до умножения на проводимости,
        поэтому для радиальных полей угловой вклад нулевой точно.
        """
        u = np.asarray(values, dtype=float).reshape(self.shape)
        flux = np.zeros_like(u)
        # Радиальные потоки
        fr = self.radial_conductance[:, None] * (u[1:] - u[:-1])
        flux[:-1] += fr
        flux[1:] -= fr
        g_in, g_out = self.boundary_conductance
        flux[0] -= g_in * u[0]
        flux[-1] -= g_out * u[-1]
        # Угловые потоки
        ft = self.angular_conductance[:, None] * (np.roll(u, -1, axis=1) - u)
        flux += ft
        flux -= np.roll(ft, 1, axis=1)
        return -flux / self.quad_w

    def inner(self, u, v) -> float:
        """Квадратурное скалярное произведение Σ quad_w u v."""
        return float(np.sum(self.quad_w * _values(u) * _values(v)))

    def norm(self, u) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.shape))

    def from_function(self, func) -> "Field":
        """Поле из функции func(r, θ) на узлах."""
        return Field(self, func(self.r_nodes, self.theta[None, :] + 0.0 * self.r_nodes))


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, Field) else np.asarray(u, dtype=float)


class Field:
    """Сеточная функция; значения во внутренних узлах, на ∂Ω неявно ноль."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: PolarGrid, values):
        arr = np.array(values, dtype=float).reshape(grid.shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("Field values must be finite")
        arr.flags.writeable = False
        self.grid = grid
        self.values = arr

    def __repr__(self) -> str:
        return f"Field({self.grid!r}, sup={self.sup_norm():.6g})"

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def _check(self, other: "Field"):
        if not self.grid.compatible(other.grid):
            raise IncompatibleSymmetry("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, scalar: float):
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)


@dataclass(frozen=True)
class OperatorMatrix:
    """
    Разреженная симметричная дискретизация −Δ − V на узлах маски.

    entries = K|mask − diag(mass * V), mass = quad_w|mask. Задача на
    собственные значения: entries v = λ diag(mass) v.
    """

    grid: PolarGrid
    mask: NodeMask
    entries: sp.csr_matrix
    mass: np.ndarray
    potential: np.ndarray

    @property
    def size(self) -> int:
        return self.mass.size

    def restrict(self, values) -> np.ndarray:
        return _values(values).ravel()[self.mask.indices]

    def extend(self, vec: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n_nodes)
        out[self.mask.indices] = vec
        return out.reshape(self.grid.shape)

    def with_potential(self, pot) -> "OperatorMatrix":
        """Оператор −Δ − V для потенциала pot (Field или массив на всей сетке)."""
        v = self.restrict(pot)
        entries = (self.entries + sp.diags(self.mass * self.potential) - sp.diags(self.mass * v)).tocsr()
        return OperatorMatrix(self.grid, self.mask, entries, self.mass, v)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.entries @ vec

    def norm_scale(self) -> float:
        """‖M^{-½} A M^{-½}‖₁ — масштаб спектра."""
        d = 1.0 / np.sqrt(self.mass)
        B = sp.diags(d) @ self.entries @ sp.diags(d)
        return float(abs(B).sum(axis=0).max())


def build_laplacian(grid: PolarGrid, mask: Optional[NodeMask] = None) -> OperatorMatrix:
    """
    Дискретный −Δ с условиями Дирихле на всех границах маски.

    Узлы на прямых краях (Γ₂, Γ₃) исключаются вместе со своими столбцами.
    Если край сектора проходит между узлами (нечётный индекс направления),
    ближайший узел находится на расстоянии Δθ/2 от края, и к диагонали
    добавляется вторая угловая проводимость.

    Args:
        grid: полярная сетка
        mask: вся область или маска сектора

    Returns:
        OperatorMatrix над узлами маски

    Raises:
        IncompatibleSymmetry: если маска построена для другой сетки
    """
    mask = mask if mask is not None else whole_mask(grid)
    if mask.n_nodes != grid.n_nodes:
        raise IncompatibleSymmetry(
            f"mask has {mask.n_nodes} nodes, grid {grid} has {grid.n_nodes}"
        )
    idx = mask.indices
    K = grid.stiffness[idx][:, idx].tocsr()

    # Полуячеечные края Дирихле
    i, j = np.divmod(idx, grid.n_theta)
    c_t = grid.angular_conductance[i]
    extra = np.zeros(idx.size)
    for step in (-1, 1):
        nb = i * grid.n_theta + (j + step) % grid.n_theta
        cut = ~mask.interior[nb] & ~mask.labeled[nb]
        extra += np.where(cut, c_t, 0.0)
    if np.any(extra):
        K = (K + sp.diags(extra)).tocsr()

    mass = grid.quad_w.ravel()[idx].copy()
    return OperatorMatrix(grid, mask, K, mass, np.zeros(idx.size))


def angular_derivative(u: Field) -> Field:
    """Центральная периодическая разность u_θ второго порядка."""
    v = u.values
    return Field(u.grid, (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) / (2.0 * u.grid.dtheta))


def project_values(values: np.ndarray, n_theta: int, k: int) -> np.ndarray:
    """Среднее по k поворотам для массива формы (N_r, N_θ) или (N_r * N_θ,)."""
    if n_theta % k:
        raise IncompatibleSymmetry(f"N_theta={n_theta} is not divisible by k={k}")
    arr = np.asarray(values, dtype=float)
    if k == 1:
        return arr.copy()
    shape = arr.shape
    block = arr.reshape(-1, k, n_theta // k).mean(axis=1)
    return np.tile(block, (1, k)).reshape(shape)


def project_k_invariant(u: Field, k: int) -> Field:
    """
    Проектор на k-инвариантные поля: среднее по поворотам на 2πs/k.

    Усреднение идёт по одному сектору с последующим копированием,
    поэтому результат инвариантен точно.
    """
    return Field(u.grid, project_values(u.values, u.grid.n_theta, k))


def quad_form(u_ref: Field, pot: Optional[Field], v: Field, w: Field,
              mask: Optional[NodeMask] = None) -> float:
    """
    Q(v, w) = ∫ ∇v·∇w − V v w на подобласти маски.

    Args:
        u_ref: опорное решение (определяет сетку)
        pot: потенциал V (обычно f'(|x|, u)); None означает ноль
        v, w: пробные функции, равные нулю вне маски
        mask: маска подобласти (по умолчанию вся область)

    Raises:
        MaskMismatch: если v или w не равны нулю вне маски
    """
    grid = u_ref.grid
    mask = mask if mask is not None else whole_mask(grid)
    for name, f in (("v", v), ("w", w)):
        if not grid.compatible(f.grid):
            raise MaskMismatch(f"{name} lives on a different grid")
        if np.any(f.flat[~mask.interior] != 0.0):
            raise MaskMismatch(f"{name} does not vanish outside the mask")
    A = build_laplacian(grid, mask)
    if pot is not None:
        A = A.with_potential(pot)
    return float(A.restrict(v) @ A.apply(A.restrict(w)))
