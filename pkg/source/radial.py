"""
Одномерный решатель радиальных профилей: стрельба с бисекцией и ньютоновская доводка.

Схема совпадает с радиальной частью двумерного оператора на той же сетке
по r, поэтому поднятый на PolarGrid профиль — точное дискретное решение.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from config import settings

from .errors import Diverged, IncompatibleSymmetry, NoBracket, NonlinearityOverflow
from .geometry import DomainKind, DomainSpec
from .grid import Field, PolarGrid
from .logger import logger
from .nonlin import Nonlinearity

_MODE_RE = re.compile(r"^(positive|nodal)(?:\((\d+)\))?$")


def zero_target(mode: str) -> int:
    """Число внутренних нулей профиля: positive → 0, nodal → 1, nodal(n) → n."""
    match = _MODE_RE.match(str(mode).strip())
    if not match:
        raise ValueError(f"unknown mode '{mode}'")
    if match.group(1) == "positive":
        if match.group(2) not in (None, "0"):
            raise ValueError("positive mode takes no zero count")
        return 0
    return int(match.group(2) or 1)


@dataclass(frozen=True)
class RadialProfile:
    """Решение одномерной задачи на узлах r_i сетки."""

    domain: DomainSpec
    r: np.ndarray
    values: np.ndarray
    zeros: int
    residual: float
    shooting_value: float

    @property
    def n_r(self) -> int:
        return self.values.size

    def sign_changes(self) -> int:
        return _sign_changes(self.values)

    def is_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.values) < 0))

    def lift(self, grid: PolarGrid) -> Field:
        """Радиальное поле u(r_i, θ_j) = values[i]."""
        if grid.domain != self.domain or grid.n_r != self.n_r:
            raise IncompatibleSymmetry(
                f"profile on {self.domain.kind.value} with N_r={self.n_r} does not fit {grid}"
            )
        return Field(grid, np.repeat(self.values[:, None], grid.n_theta, axis=1))


def _sign_changes(seq: np.ndarray) -> int:
    s = np.sign(seq)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


class _Stencil:
    """Радиальная часть конечно-объёмной схемы, делённая на Δθ."""

    def __init__(self, domain: DomainSpec, n_r: int):
        dr = (domain.r_outer - domain.r_inner) / n_r
        self.r = domain.r_inner + (np.arange(n_r) + 0.5) * dr
        self.w = self.r * dr
        faces = domain.r_inner + np.arange(1, n_r) * dr
        self.c = faces / dr
        inner = 0.0 if domain.kind is DomainKind.DISK else 2.0 * domain.r_inner / dr
        self.c_in = inner
        self.c_out = 2.0 * domain.r_outer / dr
        # Грань виртуального узла u_N: значение на ∂Ω равно (u_{N-1} + u_N)/2
        self.c_virtual = domain.r_outer / dr

    def neg_laplacian(self, u: np.ndarray) -> np.ndarray:
        flux = np.zeros_like(u)
        fr = self.c * (u[1:] - u[:-1])
        flux[:-1] += fr
        flux[1:] -= fr
        flux[0] -= self.c_in * u[0]
        flux[-1] -= self.c_out * u[-1]
        return -flux / self.w

    def banded(self, diag_extra: np.ndarray) -> np.ndarray:
        n = self.r.size
        ab = np.zeros((3, n))
        main = np.zeros(n)
        main[:-1] += self.c
        main[1:] += self.c
        main[0] += self.c_in
        main[-1] += self.c_out
        ab[0, 1:] = -self.c
        ab[1] = main + diag_extra
        ab[2, :-1] = -self.c
        return ab


def _shoot(st: _Stencil, nl: Nonlinearity, s: float) -> Tuple[np.ndarray, float]:
    """Траектория по рекуррентности от u_0 = s; возвращает узлы и значение на ∂Ω."""
    n = st.r.size
    u = np.empty(n + 1)
    u[0] = s
    flux_in = st.c_in * s
    with np.errstate(all="ignore"):
        for i in range(n):
            src = float(st.w[i] * nl.f(st.r[i], u[i]))
            g = st.c[i] if i < n - 1 else st.c_virtual
            u[i + 1] = u[i] - (src - flux_in) / g
            if not np.isfinite(u[i + 1]):
                u[i + 1:] = np.nan
                break
            flux_in = g * (u[i + 1] - u[i])
    return u[:n], 0.5 * (u[n - 1] + u[n])


def _too_many_zeros(st: _Stencil, nl: Nonlinearity, s: float, target: int) -> bool:
    try:
        values, face = _shoot(st, nl, s)
    except NonlinearityOverflow:
        return True
    seq = np.append(values, face)
    if not np.all(np.isfinite(seq)):
        return True
    return _sign_changes(seq) >= target + 1


def _polish(st: _Stencil, nl: Nonlinearity, u: np.ndarray, maxiter: int = 50) -> Tuple[np.ndarray, float]:
    """Ньютон на трёхдиагональной системе до невязки RADIAL_TOL."""
    for it in range(maxiter):
        f = nl.f(st.r, u)
        res = st.neg_laplacian(u) - f
        scale = max(1.0, float(np.max(np.abs(f))))
        err = float(np.max(np.abs(res)))
        if err <= settings.RADIAL_TOL * scale:
            return u, err
        ab = st.banded(-st.w * nl.fp(st.r, u))
        step = solve_banded((1, 1), ab, -st.w * res)
        if not np.all(np.isfinite(step)):
            break
        u = u + step
    raise Diverged(f"radial Newton polish stalled at residual {err:.3e}")


def solve_radial(domain: DomainSpec, nl: Nonlinearity, mode: str = "positive",
                 n_r: Optional[int] = None) -> RadialProfile:
    """
    Радиальное решение задачи Дирихле с заданным числом внутренних нулей.

    Параметр стрельбы s = u_0 (значение в первом узле) перебирается
    геометрически s = 1e-3 * 2^k до смены предиката «нулей не меньше n+1»,
    затем отрезок сжимается бисекцией и решение доводится Ньютоном.

    Args:
        domain: область
        nl: нелинейность
        mode: "positive", "nodal" или "nodal(n)"
        n_r: число узлов по r (по умолчанию settings.DEFAULT_N_R)

    Returns:
        RadialProfile

    Raises:
        NoBracket: предикат не сменился на всём диапазоне s
        Diverged: доводка Ньютоном не сошлась
    """
    target = zero_target(mode)
    n_r = int(n_r or settings.DEFAULT_N_R)
    st = _Stencil(domain, n_r)

    s_prev = 1e-3
    first = _too_many_zeros(st, nl, s_prev, target)
    bracket = None
    for k in range(1, settings.SHOOTING_SCAN):
        s = 1e-3 * 2.0 ** k
        if _too_many_zeros(st, nl, s, target) != first:
            bracket = (s_prev, s)
            break
        s_prev = s
    if bracket is None:
        raise NoBracket(f"no shooting bracket for {nl.label()} with {target} zero(s)")

    lo, hi = bracket
    for _ in range(settings.SHOOTING_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _too_many_zeros(st, nl, mid, target) == first:
            lo = mid
        else:
            hi = mid
    # Берём конец отрезка, где нулей ещё ровно target
    s_star = hi if first else lo
    values, _ = _shoot(st, nl, s_star)
    if not np.all(np.isfinite(values)):
        raise NoBracket(f"shooting trajectory is not finite at s={s_star:.6g}")

    values, residual = _polish(st, nl, values)
    zeros = _sign_changes(values)
    if zeros != target:
        logger.warning(f"Radial profile has {zeros} sign change(s), expected {target}")
    logger.info(
        f"Radial {mode} {nl.label()} on {domain.kind.value}: u_0={values[0]:.8g}, "
        f"residual={residual:.2e}"
    )
    for arr in (values, st.r):
        arr.flags.writeable = False
    return RadialProfile(domain, st.r, values, zeros, residual, s_star)
