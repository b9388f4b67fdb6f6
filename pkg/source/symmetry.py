"""
Проверка симметрии решений: разности отражений w_e = u∘σ_e − u,
сканирование осей, угловая монотонность, диагностика ξ_ψ / h(ψ)
и итоговая классификация (радиальное / осесимметричное и монотонное / нарушение).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from config import settings

from .errors import IndexMismatch, NonpositiveOverlap, NotKInvariant
from .geometry import (
    Direction,
    DomainKind,
    SectorPart,
    SectorSpec,
    reflection_permutation,
    sector_mask,
)
from .grid import Field, angular_derivative, project_values
from .logger import logger
from .nonlin import Nonlinearity, comparison_potentials
from .spectra import Subspace, linearized_operator, sector_lambda1, smallest_eigs


class Verdict(str, Enum):
    RADIAL = "Radial"
    AXIS_SYMMETRIC_MONOTONE = "AxisSymmetricMonotone"
    VIOLATION = "Violation"


@dataclass(frozen=True)
class ScanRow:
    m: int
    psi: float
    w_min: float
    w_max: float
    w_sup: float


@dataclass
class AxisScan:
    """Статистика w_ψ на S^+_{k,ψ} для решётки направлений в [0, 2π/k)."""

    k: int
    rows: List[ScanRow]
    psi_tilde: Optional[float]
    best_m: int
    near_ties: List[int]
    u_sup: float
    resolution: float

    @property
    def psi_star(self) -> float:
        return self.rows[self.best_m].psi

    @property
    def best_ratio(self) -> float:
        return self.rows[self.best_m].w_sup / self.u_sup if self.u_sup else 0.0

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "psi_tilde": self.psi_tilde,
            "psi_star": self.psi_star,
            "best_ratio": self.best_ratio,
            "near_ties": [self.rows[i].psi for i in self.near_ties],
            "resolution": self.resolution,
            "rows": [[r.m, r.psi, r.w_min, r.w_max, r.w_sup] for r in self.rows],
        }


@dataclass(frozen=True)
class Monotonicity:
    """Доли узлов с u_θ < −tol и u_θ > tol на S^+ и S^−."""

    plus_negative: float
    plus_positive: float
    minus_negative: float
    minus_positive: float
    sign_plus: int
    sign_minus: int
    tol_sign: float

    @property
    def strict(self) -> bool:
        return self.sign_plus != 0 and self.sign_minus == -self.sign_plus

    def to_dict(self) -> dict:
        return {
            "plus": [self.plus_negative, self.plus_positive],
            "minus": [self.minus_negative, self.minus_positive],
            "sign_plus": self.sign_plus,
            "sign_minus": self.sign_minus,
            "strict": self.strict,
            "tol_sign": self.tol_sign,
        }


@dataclass(frozen=True)
class HRow:
    m: int
    psi: float
    h: float
    lambda_plus: float
    lambda_minus: float
    overlap_plus: float
    overlap_minus: float


@dataclass
class XiDiagnostic:
    k: int
    rows: List[HRow]
    zero_tol: float
    endpoint_gap: float
    endpoint_ok: bool
    sign_change: Optional[Tuple[int, int]]
    psi_prime: Optional[float]
    lambda_at_psi_prime: Optional[Tuple[float, float]]

    @property
    def certified(self) -> bool:
        if not self.endpoint_ok or self.lambda_at_psi_prime is None:
            return False
        return max(self.lambda_at_psi_prime) >= -self.zero_tol

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "zero_tol": self.zero_tol,
            "endpoint_gap": self.endpoint_gap,
            "endpoint_ok": self.endpoint_ok,
            "sign_change": list(self.sign_change) if self.sign_change else None,
            "psi_prime": self.psi_prime,
            "lambda_at_psi_prime": list(self.lambda_at_psi_prime) if self.lambda_at_psi_prime else None,
            "certified": self.certified,
            "rows": [[r.m, r.psi, r.h, r.lambda_plus, r.lambda_minus] for r in self.rows],
        }


@dataclass
class SymmetryReport:
    verdict: Verdict
    k: int
    psi_star: Optional[float]
    angular_ratio: float
    scan: Optional[AxisScan] = None
    monotonicity: Optional[Monotonicity] = None
    sector_eigs: Optional[Tuple[float, float]] = None
    extrema: Optional[Dict[str, float]] = None
    details: str = ""
    tolerances: Dict[str, float] = field(default_factory=dict)
    h_samples: Optional[XiDiagnostic] = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "k": self.k,
            "psi_star": self.psi_star,
            "angular_ratio": self.angular_ratio,
            "scan": self.scan.to_dict() if self.scan else None,
            "monotonicity": self.monotonicity.to_dict() if self.monotonicity else None,
            "sector_eigs": list(self.sector_eigs) if self.sector_eigs else None,
            "extrema": self.extrema,
            "details": self.details,
            "tolerances": self.tolerances,
            "h_samples": self.h_samples.to_dict() if self.h_samples else None,
        }


# --- Базовые операции ---

def difference_field(u: Field, e: Direction) -> Field:
    """
    w_e = u∘σ_e − u через точную перестановку узлов.

    Raises:
        AxisNotGridAligned: направление вне решётки
    """
    grid = u.grid
    perm = reflection_permutation(grid.n_r, grid.n_theta, e)
    flat = u.flat
    return Field(grid, flat[perm] - flat)


def check_k_invariant(u: Field, k: int):
    """Raises NotKInvariant, если ‖u − P_k u‖∞ > K_INVARIANCE_TOL * max(1, ‖u‖∞)."""
    gap = float(np.max(np.abs(u.values - project_values(u.values, u.grid.n_theta, k))))
    if gap > settings.K_INVARIANCE_TOL * max(1.0, u.sup_norm()):
        raise NotKInvariant(f"field is not {k}-invariant (deviation {gap:.3e})")


def _plus_stats(u: Field, k: int, m: int) -> ScanRow:
    grid = u.grid
    e = Direction.from_lattice(m, grid.n_theta)
    w = difference_field(u, e).flat
    plus = sector_mask(grid, SectorSpec(k, e, SectorPart.PLUS)).interior
    vals = w[plus]
    return ScanRow(m, e.psi, float(vals.min()), float(vals.max()), float(np.abs(vals).max()))


def axis_scan(u: Field, k: int, tol: Optional[float] = None, workers: int = 1) -> AxisScan:
    """
    Перебор направлений ψ_m = mπ/N_θ в [0, 2π/k).

    Для каждого — min, max и sup |w_ψ| на S^+_{k,ψ}. ψ̃ — последнее
    направление непрерывного префикса [0, π/k), где min w_ψ ≥ −tol;
    ψ* — argmin sup |w_ψ| (при равенстве — первое).

    Raises:
        NotKInvariant: u не k-инвариантно
    """
    check_k_invariant(u, k)
    n_theta = u.grid.n_theta
    u_sup = u.sup_norm()
    tol = settings.TOL_SIGN_REL * u_sup if tol is None else tol
    lattice = range(2 * n_theta // k)

    if workers > 1:
        rows = Parallel(n_jobs=workers, prefer="threads")(delayed(_plus_stats)(u, k, m) for m in lattice)
    else:
        rows = [_plus_stats(u, k, m) for m in lattice]

    psi_tilde = None
    for row in rows[: n_theta // k]:
        if row.w_min < -tol:
            break
        psi_tilde = row.psi

    sups = np.array([r.w_sup for r in rows])
    best = int(np.argmin(sups))
    ties = [int(i) for i in np.flatnonzero(sups <= 2.0 * sups[best])]
    scan = AxisScan(k, rows, psi_tilde, best, ties, u_sup, math.pi / n_theta)
    logger.debug(
        f"Axis scan k={k}: psi*={scan.psi_star:.6f}, ratio={scan.best_ratio:.3e}, "
        f"psi_tilde={psi_tilde}, ties={len(ties)}"
    )
    return scan


def _side_sign(negative: float, positive: float, tol_mono: float) -> int:
    if negative < tol_mono and positive > negative:
        return 1
    if positive < tol_mono and negative > positive:
        return -1
    return 0


def monotonicity_verdict(u: Field, e: Direction, k: int, tol_mono: Optional[float] = None) -> Monotonicity:
    """
    Знак дискретной u_θ на S^+_{k,e} и S^−_{k,e}.

    Строгий вердикт: на каждой стороне доля меньшинства меньше tol_mono,
    а знаки большинства на сторонах противоположны.

    Raises:
        AxisNotGridAligned: направление вне решётки
    """
    tol_mono = settings.TOL_MONO if tol_mono is None else tol_mono
    grid = u.grid
    tol_sign = settings.TOL_SIGN_REL * u.sup_norm()
    du = angular_derivative(u).flat

    fractions = []
    for part in (SectorPart.PLUS, SectorPart.MINUS):
        vals = du[sector_mask(grid, SectorSpec(k, e, part)).interior]
        fractions.append((float(np.mean(vals < -tol_sign)), float(np.mean(vals > tol_sign))))
    (pn, pp), (mn, mp) = fractions
    return Monotonicity(pn, pp, mn, mp, _side_sign(pn, pp, tol_mono), _side_sign(mn, mp, tol_mono), tol_sign)


def residual_L_e(u: Field, nl: Nonlinearity, e: Direction, k: int = 1) -> float:
    """
    ‖(−Δ_h − V_e) w_e‖∞ на внутренних узлах S_{2k,e}.

    Для решения равна разности невязок в x и σ_e x (с точностью до
    квадратуры V_e); для произвольного поля — порядка единицы.
    """
    grid = u.grid
    w = difference_field(u, e)
    v_e, _ = comparison_potentials(nl, u, e)
    res = grid.neg_laplacian(w.values).ravel() - v_e.flat * w.flat
    inside = sector_mask(grid, SectorSpec(k, e, SectorPart.DOUBLE)).interior
    return float(np.max(np.abs(res[inside])))


def split_fields(w: Field, e: Direction, k: int) -> Tuple[Field, Field]:
    """
    w¹ = w⁺ на S^+ и (−w)⁺ на S^−; w² = (−w)⁺ на S^+ и w⁺ на S^−.

    Обе части неотрицательны, с непересекающимися носителями и σ_e-симметричны,
    если w антисимметрично.
    """
    grid = w.grid
    plus = sector_mask(grid, SectorSpec(k, e, SectorPart.PLUS)).interior.reshape(grid.shape)
    minus = sector_mask(grid, SectorSpec(k, e, SectorPart.MINUS)).interior.reshape(grid.shape)
    pos = np.maximum(w.values, 0.0)
    neg = np.maximum(-w.values, 0.0)
    w1 = np.where(plus, pos, 0.0) + np.where(minus, neg, 0.0)
    w2 = np.where(plus, neg, 0.0) + np.where(minus, pos, 0.0)
    return Field(grid, w1), Field(grid, w2)


# --- ξ_ψ и h(ψ) ---

def _h_row(u: Field, nl: Nonlinearity, k: int, m: int, phi1: Field, phi2: Field, zero_tol: float) -> HRow:
    grid = u.grid
    e = Direction.from_lattice(m, grid.n_theta)
    lam_p, phi_p = sector_lambda1(u, nl, SectorSpec(k, e, SectorPart.PLUS), zero_tol)
    lam_m, phi_m = sector_lambda1(u, nl, SectorSpec(k, e, SectorPart.MINUS), zero_tol)
    ip, im = grid.inner(phi_p, phi1), grid.inner(phi_m, phi1)
    if ip <= 0 or im <= 0:
        raise NonpositiveOverlap(
            f"overlap with phi_1 at psi={e.psi:.6f}: plus={ip:.3e}, minus={im:.3e}"
        )
    a, b = math.sqrt(im / ip), math.sqrt(ip / im)
    xi = a * phi_p.values - b * phi_m.values
    return HRow(m, e.psi, grid.inner(xi, phi2), lam_p, lam_m, ip, im)


def xi_h_diagnostic(u: Field, nl: Nonlinearity, k: int, workers: int = 1) -> XiDiagnostic:
    """
    Таблица h(ψ) = ∫ ξ_ψ φ₂ для ψ на решётке [0, π/k] и сертификат смены знака.

    ξ_ψ = A φ_ψ^+ − B φ_ψ^−, A = √(∫φ^−φ₁ / ∫φ^+φ₁), B = 1/A, так что ξ_ψ ⊥ φ₁.
    В найденной точке смены знака ψ' проверяется max λ₁(L_u, S^±_{k,ψ'}) ≥ −zero_tol.

    Raises:
        IndexMismatch: k-инвариантный индекс Морса не равен 2
        NonpositiveOverlap: ∫ φ_ψ^± φ₁ ≤ 0
    """
    check_k_invariant(u, k)
    grid = u.grid
    spectrum = smallest_eigs(linearized_operator(u, nl), 3, Subspace.k_invariant(k))
    m_k = spectrum.negative_count
    if m_k != 2:
        raise IndexMismatch(f"k-invariant Morse index is {m_k}, the xi construction needs 2")
    phi1, phi2 = spectrum.eigenfields[0], spectrum.eigenfields[1]
    zero_tol = spectrum.zero_tol

    lattice = range(grid.n_theta // k + 1)
    if workers > 1:
        rows = Parallel(n_jobs=workers, prefer="threads")(
            delayed(_h_row)(u, nl, k, m, phi1, phi2, zero_tol) for m in lattice
        )
    else:
        rows = [_h_row(u, nl, k, m, phi1, phi2, zero_tol) for m in lattice]

    h = np.array([r.h for r in rows])
    h0 = abs(h[0])
    gap = abs(h[-1] + h[0])
    # h нормирована единичными собственными функциями; ниже пола h(0) считается нулём
    endpoint_ok = gap <= 1e-8 * max(h0, settings.H_ZERO_FLOOR)

    sign_change = None
    if h0 <= settings.H_ZERO_FLOOR:
        sign_change = (0, 0)
    else:
        for i in range(h.size - 1):
            if h[i + 1] == 0.0 or h[i] * h[i + 1] < 0:
                sign_change = (i, i + 1)
                break

    psi_prime, lam_at = None, None
    if sign_change is not None:
        i, j = sign_change
        pick = i if abs(h[i]) <= abs(h[j]) else j
        psi_prime = rows[pick].psi
        lam_at = (rows[pick].lambda_plus, rows[pick].lambda_minus)

    diag = XiDiagnostic(k, rows, zero_tol, float(gap), bool(endpoint_ok), sign_change, psi_prime, lam_at)
    logger.info(
        f"xi/h k={k}: h(0)={h[0]:.6e}, endpoint gap={gap:.2e}, "
        f"psi'={psi_prime}, certified={diag.certified}"
    )
    return diag


# --- Классификация ---

def _extrema_placement(u: Field, k: int, m_star: int) -> Dict[str, float]:
    """
    Доля внутренних локальных экстремумов u не дальше одного углового шага
    от осей ψ* + hπ/k (или в первом кольце).
    """
    grid = u.grid
    v = u.values
    pad = np.zeros((grid.n_r + 2, grid.n_theta))
    pad[1:-1] = v
    nbrs = [pad[:-2], pad[2:], np.roll(v, 1, axis=1), np.roll(v, -1, axis=1)]
    is_max = np.all([v > n for n in nbrs], axis=0)
    is_min = np.all([v < n for n in nbrs], axis=0)
    if grid.domain.kind is DomainKind.DISK:
        # Полюс вне сетки: в первом кольце сравниваем только с соседями по r и θ
        is_max[0] = np.all([v[0] > n[0] for n in nbrs[1:]], axis=0)
        is_min[0] = np.all([v[0] < n[0] for n in nbrs[1:]], axis=0)
    i, j = np.nonzero(is_max | is_min)
    if i.size == 0:
        return {"count": 0, "placed": 1.0}

    span = grid.n_theta // k
    rem = (2 * j - m_star) % span
    dist = np.minimum(rem, span - rem)
    ok = (dist <= 2) | (i == 0)
    return {"count": int(i.size), "placed": float(np.mean(ok))}


def classify(u: Field, nl: Nonlinearity, k: int, tol_radial: Optional[float] = None,
             tol_sym: Optional[float] = None, tol_mono: Optional[float] = None,
             workers: int = 1) -> SymmetryReport:
    """
    Итоговый вердикт: Radial, AxisSymmetricMonotone(ψ*) или Violation.

    Args:
        u: сошедшееся k-инвариантное решение
        nl: нелинейность
        k: порядок симметрии
        tol_radial, tol_sym, tol_mono: пороги (по умолчанию из settings)

    Returns:
        SymmetryReport; Violation содержит несработавшую статистику
    """
    tol_radial = settings.TOL_RADIAL if tol_radial is None else tol_radial
    tol_sym = settings.TOL_SYM if tol_sym is None else tol_sym
    tol_mono = settings.TOL_MONO if tol_mono is None else tol_mono
    tolerances = {
        "tol_radial": tol_radial,
        "tol_sym": tol_sym,
        "tol_mono": tol_mono,
        "tol_sign_rel": settings.TOL_SIGN_REL,
    }
    check_k_invariant(u, k)
    u_sup = u.sup_norm()
    ratio = angular_derivative(u).sup_norm() / u_sup if u_sup else 0.0
    if ratio < tol_radial:
        logger.info(f"Classify k={k}: Radial (|u_theta|/|u|={ratio:.2e})")
        return SymmetryReport(Verdict.RADIAL, k, 0.0, ratio, tolerances=tolerances)

    scan = axis_scan(u, k, workers=workers)
    e = Direction(scan.psi_star)
    mono = monotonicity_verdict(u, e, k, tol_mono)
    lam_p, _ = sector_lambda1(u, nl, SectorSpec(k, e, SectorPart.PLUS))
    lam_m, _ = sector_lambda1(u, nl, SectorSpec(k, e, SectorPart.MINUS))
    extrema = _extrema_placement(u, k, scan.rows[scan.best_m].m)

    failures = []
    if scan.best_ratio >= tol_sym:
        failures.append(f"min |w_psi|/|u| = {scan.best_ratio:.3e} >= tol_sym")
    if not mono.strict:
        failures.append(
            f"u_theta not one-signed: plus {mono.plus_negative:.3f}/{mono.plus_positive:.3f}, "
            f"minus {mono.minus_negative:.3f}/{mono.minus_positive:.3f}"
        )

    if failures:
        verdict, details = Verdict.VIOLATION, "; ".join(failures)
        logger.warning(f"Classify k={k}: Violation ({details})")
    else:
        verdict, details = Verdict.AXIS_SYMMETRIC_MONOTONE, f"psi*={scan.psi_star:.6f}"
        logger.info(f"Classify k={k}: AxisSymmetricMonotone at psi*={scan.psi_star:.6f}")
        if extrema["placed"] < 1.0:
            logger.warning(f"Extrema off the symmetry axes: placed fraction {extrema['placed']:.3f}")

    return SymmetryReport(
        verdict, k, scan.psi_star, ratio, scan, mono, (lam_p, lam_m), extrema, details, tolerances
    )
