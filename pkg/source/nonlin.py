"""
Каталог нелинейностей f(r, s): Лейн–Эмден, Энон, Гельфанд, sinh-Пуассон.

Для каждой — f, f' = ∂f/∂s, первообразная F и флаги выпуклости,
от которых зависит применимость теорем о симметрии.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Tuple

import numpy as np

from config import settings

from .errors import NonlinearityOverflow
from .geometry import Direction, reflection_permutation
from .grid import Field


class NonlinearityKind(str, Enum):
    LANE_EMDEN = "LaneEmden"
    HENON = "Henon"
    GELFAND = "Gelfand"
    SINH_POISSON = "SinhPoisson"


# Допустимые параметры по видам (ключи конфигурации)
_PARAMS = {
    NonlinearityKind.LANE_EMDEN: ("p",),
    NonlinearityKind.HENON: ("p", "alpha"),
    NonlinearityKind.GELFAND: ("lambda", "alpha"),
    NonlinearityKind.SINH_POISSON: ("epsilon", "alpha"),
}

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(settings.GAUSS_POINTS)
_GL_T = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS


@dataclass(frozen=True)
class Nonlinearity:
    kind: NonlinearityKind
    p: float = 0.0
    alpha: float = 0.0
    lam: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NonlinearityKind(self.kind))
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.kind is NonlinearityKind.LANE_EMDEN and self.alpha != 0.0:
            raise ValueError("LaneEmden has no radial weight; use Henon")
        if self.homogeneous and not self.p > 1:
            raise ValueError(f"{self.kind.value} requires p > 1")
        if self.kind is NonlinearityKind.GELFAND and not self.lam > 0:
            raise ValueError("Gelfand requires lambda > 0")
        if self.kind is NonlinearityKind.SINH_POISSON and not self.eps > 0:
            raise ValueError("SinhPoisson requires epsilon > 0")

    @classmethod
    def lane_emden(cls, p: float) -> "Nonlinearity":
        return cls(NonlinearityKind.LANE_EMDEN, p=float(p))

    @classmethod
    def henon(cls, p: float, alpha: float) -> "Nonlinearity":
        return cls(NonlinearityKind.HENON, p=float(p), alpha=float(alpha))

    @classmethod
    def gelfand(cls, lam: float, alpha: float = 0.0) -> "Nonlinearity":
        return cls(NonlinearityKind.GELFAND, lam=float(lam), alpha=float(alpha))

    @classmethod
    def sinh_poisson(cls, eps: float, alpha: float = 0.0) -> "Nonlinearity":
        return cls(NonlinearityKind.SINH_POISSON, eps=float(eps), alpha=float(alpha))

    @classmethod
    def from_config(cls, data: Dict[str, Any]) -> "Nonlinearity":
        """
        Строит нелинейность из {"kind": ..., "params": {...}}.

        Raises:
            ValueError: неизвестный вид или параметр
        """
        kind = NonlinearityKind(data["kind"])
        params = dict(data.get("params", {}))
        unknown = set(params) - set(_PARAMS[kind])
        if unknown:
            raise ValueError(f"unknown parameters for {kind.value}: {sorted(unknown)}")
        return cls(
            kind,
            p=float(params.get("p", 0.0)),
            alpha=float(params.get("alpha", 0.0)),
            lam=float(params.get("lambda", 0.0)),
            eps=float(params.get("epsilon", 0.0)),
        )

    def to_config(self) -> Dict[str, Any]:
        values = {"p": self.p, "alpha": self.alpha, "lambda": self.lam, "epsilon": self.eps}
        return {"kind": self.kind.value, "params": {k: values[k] for k in _PARAMS[self.kind]}}

    # --- Метаданные ---

    @property
    def homogeneous(self) -> bool:
        """Есть точное масштабирование на многообразие Нехари."""
        return self.kind in (NonlinearityKind.LANE_EMDEN, NonlinearityKind.HENON)

    @property
    def exponential(self) -> bool:
        return not self.homogeneous

    @property
    def f_convex(self) -> bool:
        """f(r, ·) выпукла; для степенных видов — только при s > 0."""
        return self.kind is not NonlinearityKind.SINH_POISSON

    @property
    def f_convex_positive_only(self) -> bool:
        return self.homogeneous

    @property
    def fp_convex(self) -> bool:
        """f'(r, ·) выпукла на всей оси."""
        if self.homogeneous:
            return self.p >= 2.0
        return self.kind is NonlinearityKind.SINH_POISSON

    @property
    def parameter(self) -> float:
        """Параметр продолжения: λ для Гельфанда, ε для sinh-Пуассона, p иначе."""
        if self.kind is NonlinearityKind.GELFAND:
            return self.lam
        if self.kind is NonlinearityKind.SINH_POISSON:
            return self.eps
        return self.p

    def with_parameter(self, value: float) -> "Nonlinearity":
        if self.kind is NonlinearityKind.GELFAND:
            return replace(self, lam=float(value))
        if self.kind is NonlinearityKind.SINH_POISSON:
            return replace(self, eps=float(value))
        return replace(self, p=float(value))

    def label(self) -> str:
        params = ", ".join(f"{k}={v:g}" for k, v in self.to_config()["params"].items())
        return f"{self.kind.value}({params})"

    # --- Вычисления ---

    def weight(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.alpha == 0.0:
            return np.ones_like(r)
        return r ** self.alpha

    def _check_range(self, s: np.ndarray):
        if self.exponential and np.any(np.abs(s) > settings.EXP_SAFE):
            raise NonlinearityOverflow(
                f"|s| exceeds {settings.EXP_SAFE:g} for {self.kind.value}"
            )

    def f(self, r, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        self._check_range(s)
        w = self.weight(r)
        if self.homogeneous:
            return w * np.abs(s) ** (self.p - 1.0) * s
        if self.kind is NonlinearityKind.GELFAND:
            return w * self.lam * np.exp(s)
        return w * self.eps * (np.exp(s) - np.exp(-s))

    def fp(self, r, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        self._check_range(s)
        w = self.weight(r)
        if self.homogeneous:
            # |0|^{p-1} = 0 при p > 1, что и даёт соглашение f'(r, 0) = 0
            return w * self.p * np.abs(s) ** (self.p - 1.0)
        if self.kind is NonlinearityKind.GELFAND:
            return w * self.lam * np.exp(s)
        return w * self.eps * (np.exp(s) + np.exp(-s))

    def F(self, r, s) -> np.ndarray:
        """Первообразная F(r, s) = ∫₀ˢ f(r, t) dt."""
        s = np.asarray(s, dtype=float)
        self._check_range(s)
        w = self.weight(r)
        if self.homogeneous:
            return w * np.abs(s) ** (self.p + 1.0) / (self.p + 1.0)
        if self.kind is NonlinearityKind.GELFAND:
            return w * self.lam * np.expm1(s)
        return 2.0 * w * self.eps * (np.cosh(s) - 1.0)

    def segment_average(self, r, a, b) -> np.ndarray:
        """
        ∫₀¹ f'(r, t·a + (1−t)·b) dt, симметрично по (a, b) поточечно.

        Гельфанд и sinh-Пуассон считаются в замкнутой форме без вычитания
        близких чисел. Степенные виды: (f(a) − f(b))/(a − b) на длинных отрезках,
        иначе 16-точечная квадратура Гаусса–Лежандра.
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        r = np.broadcast_to(np.asarray(r, dtype=float), a.shape)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        self._check_range(lo)
        self._check_range(hi)
        span = hi - lo

        if self.kind is NonlinearityKind.GELFAND:
            safe = np.where(span > 0, span, 1.0)
            ratio = np.where(span > 0, np.expm1(span) / safe, 1.0)
            return self.weight(r) * self.lam * np.exp(lo) * ratio

        if self.kind is NonlinearityKind.SINH_POISSON:
            # 2ε cosh(m) sinh(h)/h: m середина отрезка, h его полудлина
            mid, half = 0.5 * (lo + hi), 0.5 * span
            safe = np.where(half > 0, half, 1.0)
            ratio = np.where(half > 0, np.sinh(half) / safe, 1.0)
            return self.weight(r) * 2.0 * self.eps * np.cosh(mid) * ratio

        quad = self._gauss_average(r, lo, span)
        scale = 1.0 + np.abs(lo) + np.abs(hi)
        long = span > settings.CLOSED_FORM_MIN_SPAN * scale
        safe = np.where(long, span, 1.0)
        closed = (self.f(r, hi) - self.f(r, lo)) / safe
        return np.where(long, closed, quad)

    def _gauss_average(self, r, lo, span) -> np.ndarray:
        total = np.zeros_like(lo)
        for t, w in zip(_GL_T, _GL_W):
            total += w * self.fp(r, lo + t * span)
        return total


def eval_f(nl: Nonlinearity, r, s):
    return nl.f(r, s)


def eval_fp(nl: Nonlinearity, r, s):
    return nl.fp(r, s)


def eval_F(nl: Nonlinearity, r, s):
    return nl.F(r, s)


def comparison_potentials(nl: Nonlinearity, u: Field, e: Direction) -> Tuple[Field, Field]:
    """
    Потенциалы сравнения V_e и V_es для разности w_e = u∘σ_e − u.

    V_e(x) = ∫₀¹ f'(|x|, t u(σ_e x) + (1−t) u(x)) dt,
    V_es(x) = ½ (f'(|x|, u(x)) + f'(|x|, u(σ_e x))).
    Оба поля инвариантны относительно σ_e.

    Raises:
        AxisNotGridAligned: направление вне решётки
        NonlinearityOverflow: экспоненциальный вид вне безопасного диапазона
    """
    grid = u.grid
    perm = reflection_permutation(grid.n_r, grid.n_theta, e)
    a = u.flat
    b = a[perm]
    r = grid.r_nodes.ravel()
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    v_e = nl.segment_average(r, lo, hi)
    v_es = 0.5 * (nl.fp(r, lo) + nl.fp(r, hi))
    return Field(grid, v_e), Field(grid, v_es)
