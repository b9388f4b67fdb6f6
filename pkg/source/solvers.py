"""
Поиск решений −Δu = f(|x|, u) на PolarGrid: демпфированный Ньютон
в k-инвариантном подпространстве, минимизация на многообразии Нехари
(положительная и нодальная), продолжение по параметру и сравнение решений.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import root

from config import settings

from .errors import (
    CollapsedSign,
    ConfigError,
    Diverged,
    NonlinearityOverflow,
    NumericalError,
    SingularJacobian,
)
from .grid import Field, PolarGrid, project_values
from .logger import logger
from .nonlin import Nonlinearity
from .radial import solve_radial

SEED_PATTERN = re.compile(r"^(radial|cos-mode|peaks)(?:\((\d+)\))?$")


@dataclass(frozen=True)
class SolveResult:
    """Сошедшееся решение с энергией, невязкой и происхождением."""

    u: Field
    energy: float
    residual: float
    iterations: int
    constraint_residuals: Tuple[float, ...] = ()
    provenance: str = ""
    k: int = 1
    energy_trace: Tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "residual": self.residual,
            "iterations": self.iterations,
            "constraint_residuals": list(self.constraint_residuals),
            "provenance": self.provenance,
            "k": self.k,
        }


@dataclass(frozen=True)
class Distinctness:
    distinct: bool
    distance: float
    shift: int
    energy_gap: float

    @property
    def verdict(self) -> str:
        return "distinct" if self.distinct else "same-up-to-rotation"


# --- Функционалы ---

def _project(values: np.ndarray, grid: PolarGrid, k: int) -> np.ndarray:
    return project_values(values, grid.n_theta, k) if k > 1 else np.asarray(values, dtype=float)


def energy(grid: PolarGrid, nl: Nonlinearity, u: Field) -> float:
    """E(u) = ½ uᵀKu − Σ quad_w F(r, u)."""
    v = u.values
    kinetic = grid.inner(v, grid.neg_laplacian(v))
    return 0.5 * kinetic - float(np.sum(grid.quad_w * nl.F(grid.r_nodes, v)))


def residual_norm(grid: PolarGrid, nl: Nonlinearity, u: Field) -> float:
    """‖−Δ_h u − f(|x|, u)‖∞."""
    v = u.values
    return float(np.max(np.abs(grid.neg_laplacian(v) - nl.f(grid.r_nodes, v))))


def _residual(grid: PolarGrid, nl: Nonlinearity, v: np.ndarray) -> Tuple[np.ndarray, float]:
    f = nl.f(grid.r_nodes, v)
    return grid.neg_laplacian(v) - f, max(1.0, float(np.max(np.abs(f))))


def _weighted_norm(grid: PolarGrid, res: np.ndarray) -> float:
    return math.sqrt(float(np.sum(grid.quad_w * res * res)))


def jacobian(grid: PolarGrid, nl: Nonlinearity, v: np.ndarray) -> sp.csr_matrix:
    """K − diag(quad_w f'(r, u)): симметричная форма якобиана невязки, умноженной на M."""
    w = grid.quad_w.ravel()
    fp = nl.fp(grid.r_nodes, v).ravel()
    return (grid.stiffness - sp.diags(w * fp)).tocsr()


# --- Ньютон ---

def newton_solve(grid: PolarGrid, nl: Nonlinearity, init: Field, k: int = 1,
                 tol: Optional[float] = None, maxiter: Optional[int] = None,
                 provenance: str = "") -> SolveResult:
    """
    Демпфированный Ньютон для F(u) = −Δ_h u − f(|x|, u) в H_{0,k}.

    Итерации проектируются на k-инвариантные поля; шаг подбирается
    дроблением по Армихо для взвешенной нормы ‖F‖.

    Args:
        grid: сетка
        nl: нелинейность
        init: начальное приближение
        k: порядок симметрии
        tol: порог ‖F‖∞ относительно max(1, ‖f(|x|, u)‖∞)
        maxiter: лимит итераций

    Returns:
        SolveResult

    Raises:
        SingularJacobian: вырожденная линейная система
        Diverged: дробление шага или лимит итераций исчерпаны
    """
    if not grid.compatible(init.grid):
        raise ValueError("init lives on a different grid")
    tol = settings.NEWTON_TOL if tol is None else tol
    maxiter = settings.NEWTON_MAXITER if maxiter is None else maxiter
    w = grid.quad_w.ravel()

    v = _project(init.values, grid, k)
    res, scale = _residual(grid, nl, v)
    for it in range(maxiter + 1):
        err = float(np.max(np.abs(res)))
        logger.debug(f"Newton it={it}: |F|={err:.3e}")
        if err <= tol * scale:
            u = Field(grid, v)
            result = SolveResult(u, energy(grid, nl, u), err, it, (), provenance or "newton", k)
            logger.info(f"Newton converged in {it} it, residual={err:.2e}, E={result.energy:.8g}")
            return result
        if it == maxiter:
            break

        J = jacobian(grid, nl, v)
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                delta = spla.spsolve(J.tocsc(), -w * res.ravel())
            except spla.MatrixRankWarning as exc:
                raise SingularJacobian(f"singular Jacobian at Newton iteration {it}") from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian(f"non-finite Newton step at iteration {it}")
        delta = _project(delta.reshape(grid.shape), grid, k)

        merit = _weighted_norm(grid, res)
        t = 1.0
        for _ in range(settings.LINE_SEARCH_HALVINGS):
            trial = v + t * delta
            try:
                res_t, scale_t = _residual(grid, nl, trial)
            except NonlinearityOverflow:
                t *= 0.5
                continue
            if np.all(np.isfinite(res_t)) and _weighted_norm(grid, res_t) <= (1.0 - settings.ARMIJO_C * t) * merit:
                break
            t *= 0.5
        else:
            raise Diverged(f"line search failed at Newton iteration {it} (|F|={err:.3e})")
        v, res, scale = trial, res_t, scale_t

    raise Diverged(f"Newton did not converge in {maxiter} iterations (|F|={err:.3e})")


# --- Многообразие Нехари ---

class _NehariGeometry:
    """Формы uᵀKv и Σ w r^α |u|^{p+1} для однородных нелинейностей."""

    def __init__(self, grid: PolarGrid, nl: Nonlinearity):
        self.grid = grid
        self.nl = nl
        self.K = grid.stiffness
        self.wr = (grid.quad_w * nl.weight(grid.r_nodes)).ravel()

    def kin(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(a @ (self.K @ b))

    def pot(self, a: np.ndarray) -> float:
        return float(np.sum(self.wr * np.abs(a) ** (self.nl.p + 1.0)))

    def energy(self, v: np.ndarray) -> float:
        p = self.nl.p
        return 0.5 * self.kin(v, v) - self.pot(v) / (p + 1.0)

    def rescale_positive(self, v: np.ndarray) -> np.ndarray:
        v = np.abs(v)
        a, b = self.kin(v, v), self.pot(v)
        if not b > 0:
            raise CollapsedSign("iterate vanished")
        return (a / b) ** (1.0 / (self.nl.p - 1.0)) * v

    def sign_parts(self, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """u⁺ и u⁻; CollapsedSign, если одна из частей пренебрежимо мала."""
        plus, minus = np.maximum(v, 0.0), np.minimum(v, 0.0)
        w = self.grid.quad_w.ravel()
        total = float(np.sum(w * v * v))
        for name, part in (("u+", plus), ("u-", minus)):
            if float(np.sum(w * part * part)) <= 1e-12 * total:
                raise CollapsedSign(f"{name} vanished during nodal descent")
        return plus, minus

    def rescale_nodal(self, v: np.ndarray) -> np.ndarray:
        """
        t₊u⁺ + t₋u⁻ с E'(u)[u^±] = 0; связь частей через C = (u⁺)ᵀK u⁻.
        """
        plus, minus = self.sign_parts(v)
        p = self.nl.p
        a_p, a_m = self.kin(plus, plus), self.kin(minus, minus)
        b_p, b_m = self.pot(plus), self.pot(minus)
        c = self.kin(plus, minus)

        def equations(x):
            tp, tm = np.exp(x)
            return [a_p + (tm / tp) * c - tp ** (p - 1.0) * b_p,
                    a_m + (tp / tm) * c - tm ** (p - 1.0) * b_m]

        scale = a_p + a_m
        x = np.zeros(2)
        if np.max(np.abs(equations(x))) > settings.NODAL_SCALING_TOL * scale:
            x0 = np.array([math.log(a_p / b_p) / (p - 1.0), math.log(a_m / b_m) / (p - 1.0)])
            # Приём по невязке: у точного x0 hybr возвращает status 5 и success=False
            sol = root(equations, x0, method="hybr", tol=1e-12)
            residual = float(np.max(np.abs(sol.fun)))
            if not np.all(np.isfinite(sol.x)) or residual > settings.NODAL_SCALING_TOL * scale:
                raise Diverged(f"nodal Nehari scaling failed: {sol.message} (residual {residual:.2e})")
            x = sol.x
        tp, tm = np.exp(x)
        return tp * plus + tm * minus

    def constraint_residuals(self, v: np.ndarray, nodal: bool) -> Tuple[float, ...]:
        if not nodal:
            a = self.kin(v, v)
            return (abs(a - self.pot(v)) / a,)
        out = []
        for part in (np.maximum(v, 0.0), np.minimum(v, 0.0)):
            a = self.kin(part, part)
            out.append(abs(self.kin(v, part) - self.pot(part)) / a)
        return tuple(out)


def nehari_minimize(grid: PolarGrid, nl: Nonlinearity, k: int = 1,
                    seed: Union[Field, str] = "radial", mode: str = "positive",
                    tol: Optional[float] = None, maxiter: Optional[int] = None,
                    gtol: Optional[float] = None) -> SolveResult:
    """
    Минимум энергии на N_k (positive) или на нодальном многообразии (nodal).

    Каждый шаг: градиент g = Ku − w f(u) в H¹-метрике (d = −K⁻¹g),
    проекция на k-инвариантные поля, дробление по Армихо и возврат
    на многообразие масштабированием. Результат доводится Ньютоном.

    Args:
        grid: сетка
        nl: LaneEmden или Henon
        k: порядок симметрии
        seed: поле или имя ("radial", "cos-mode(q)", "peaks(q)")
        mode: "positive" или "nodal"

    Returns:
        SolveResult с историей энергии и невязками ограничений

    Raises:
        CollapsedSign: одна из частей u^± исчезла
        Diverged: не сошлись масштабирование или финальный Ньютон
    """
    if not nl.homogeneous:
        raise ValueError(f"Nehari minimization needs a homogeneous nonlinearity, got {nl.kind.value}")
    if mode not in ("positive", "nodal"):
        raise ValueError(f"unknown mode '{mode}'")
    nodal = mode == "nodal"
    maxiter = settings.NEHARI_MAXITER if maxiter is None else maxiter
    gtol = settings.NEHARI_GTOL if gtol is None else gtol
    name = seed if isinstance(seed, str) else "field"
    if isinstance(seed, str):
        seed = resolve_seed(grid, nl, seed, mode, k)

    geo = _NehariGeometry(grid, nl)
    rescale = geo.rescale_nodal if nodal else geo.rescale_positive
    K_lu = spla.splu(grid.stiffness.tocsc())
    w = grid.quad_w.ravel()

    v = rescale(_project(seed.flat, grid, k))
    e = geo.energy(v)
    trace = [e]
    step = 1.0
    it = 0
    for it in range(1, maxiter + 1):
        g = geo.K @ v - w * nl.f(grid.r_nodes.ravel(), v)
        d = -_project(K_lu.solve(g), grid, k).ravel()
        slope = float(g @ d)
        rel = math.sqrt(max(-slope, 0.0) / geo.kin(v, v))
        if rel < gtol:
            logger.debug(f"Nehari gradient {rel:.2e} below gtol after {it - 1} it")
            break

        s = min(1.0, 2.0 * step)
        for _ in range(settings.LINE_SEARCH_HALVINGS):
            trial = rescale(v + s * d)
            e_trial = geo.energy(trial)
            if e_trial <= e + settings.ARMIJO_C * s * slope:
                break
            s *= 0.5
        else:
            logger.debug(f"Nehari line search stalled at it={it}, gradient {rel:.2e}")
            break
        v, e, step = trial, e_trial, s
        trace.append(e)
        if it % 100 == 0:
            logger.debug(f"Nehari it={it}: E={e:.10g}, gradient {rel:.2e}")

    logger.info(f"Nehari {mode} k={k} seed={name}: E={e:.10g} after {it} it, polishing")
    polished = newton_solve(grid, nl, Field(grid, v.reshape(grid.shape)), k, tol,
                            provenance=f"nehari:{mode}:{name}")
    final = polished.u.flat
    if nodal:
        # Ньютон мог уйти к решению без смены знака
        geo.sign_parts(final)
    return SolveResult(
        polished.u,
        polished.energy,
        polished.residual,
        it + polished.iterations,
        geo.constraint_residuals(final, nodal),
        polished.provenance,
        k,
        tuple(trace),
    )


# --- Затравки ---

def seed_changes_sign(kind: str, q: int, k: int) -> bool:
    """
    Меняет ли нодальная затравка знак после проекции на k-инвариантные поля.

    Поворот на 2π/k сдвигает пики на q/k позиций, поэтому после проекции
    знак пика равен сумме знаков (−1)^j по его орбите.
    """
    if kind != "peaks":
        return True
    orbit_signs = ((-1) ** np.arange(q)).reshape(k, q // k).sum(axis=0)
    return bool(orbit_signs.max() > 0 and orbit_signs.min() < 0)


def resolve_seed(grid: PolarGrid, nl: Nonlinearity, name: str, mode: str = "positive",
                 k: int = 1) -> Field:
    """
    Именованная затравка, спроектированная на k-инвариантные поля.

    "radial" — поднятый радиальный профиль (положительный или с одним нулём),
    "cos-mode(q)" — профиль, умноженный на 1 + 0.1 cos qθ,
    "peaks(q)" — q гауссовых пиков на окружности среднего радиуса,
    в нодальном режиме знаки чередуются.

    Raises:
        ConfigError: неизвестное имя, q не кратно k или нодальная затравка
            без смены знака
    """
    match = SEED_PATTERN.match(name.strip())
    if not match:
        raise ConfigError("seeds", f"unknown seed '{name}'")
    kind, q = match.group(1), int(match.group(2) or k)
    if q < 1 or q % k:
        raise ConfigError("seeds", f"seed '{name}' is not invariant under rotations by 2pi/{k}")
    nodal = mode == "nodal"
    if nodal and not seed_changes_sign(kind, q, k):
        raise ConfigError("seeds", f"seed '{name}' does not change sign after projection for k={k}")
    domain = grid.domain

    if kind == "peaks":
        x, y = grid.xy
        mid = 0.5 * (domain.r_inner + domain.r_outer)
        width = 0.25 * (domain.r_outer - domain.r_inner)
        values = np.zeros(grid.shape)
        for j in range(q):
            angle = 2.0 * math.pi * j / q
            bump = np.exp(-((x - mid * math.cos(angle)) ** 2 + (y - mid * math.sin(angle)) ** 2) / width ** 2)
            values += (-1.0) ** j * bump if nodal else bump
    else:
        profile = solve_radial(domain, nl, "nodal" if nodal else "positive", grid.n_r).lift(grid)
        values = profile.values
        if kind == "cos-mode":
            values = values * (1.0 + 0.1 * np.cos(q * grid.theta))[None, :]

    return Field(grid, _project(values, grid, k))


# --- Продолжение и сравнение ---

def continuation(grid: PolarGrid, nl: Nonlinearity, values: Sequence[float], k: int = 1,
                 tol: Optional[float] = None) -> List[SolveResult]:
    """
    Продолжение по λ (Гельфанд) или ε (sinh-Пуассон) от нулевого поля.

    Каждый шаг стартует с предыдущего решения; при первой численной ошибке
    (как правило, у точки поворота) возвращается пройденная ветвь.
    """
    if nl.homogeneous:
        raise ValueError("continuation starts from u = 0 and needs an exponential kind")
    branch: List[SolveResult] = []
    current = grid.zeros()
    for value in values:
        nl_v = nl.with_parameter(value)
        try:
            result = newton_solve(grid, nl_v, current, k, tol, provenance=f"continuation:{value:g}")
        except NumericalError as e:
            logger.warning(f"Continuation stopped at {nl_v.label()}: {e}")
            break
        branch.append(result)
        current = result.u
    return branch


def distinctness(a: SolveResult, b: SolveResult) -> Distinctness:
    """
    Сравнение решений с точностью до поворотов сетки.

    distance = min_j ‖a∘ρ_j − b‖₂ / ‖b‖₂ по всем N_θ сдвигам;
    решения различны, если distance > 1e-3 или относительная разница
    энергий больше 1e-6.
    """
    grid = b.u.grid
    if not grid.compatible(a.u.grid):
        raise ValueError("solutions live on different grids")
    ref = b.u.values
    base = grid.norm(ref)
    best, shift = math.inf, 0
    for j in range(grid.n_theta):
        dist = grid.norm(np.roll(a.u.values, j, axis=1) - ref) / base
        if dist < best:
            best, shift = dist, j
    gap = abs(a.energy - b.energy) / abs(b.energy) if b.energy else abs(a.energy)
    distinct = best > settings.DISTINCT_DISTANCE or gap > settings.DISTINCT_ENERGY
    return Distinctness(distinct, best, shift, gap)
