"""
Нижняя часть спектра линеаризованного оператора L_u = −Δ − f'(|x|, u):
на всей области, в k-инвариантном подпространстве и в секторах.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config import settings

from .errors import ConvergenceFailure, IncompatibleSymmetry
from .geometry import DomainSpec, Direction, SectorPart, SectorSpec, sector_mask, whole_mask
from .grid import Field, OperatorMatrix, PolarGrid, build_laplacian, project_values
from .logger import logger
from .nonlin import Nonlinearity


class SubspaceKind(str, Enum):
    FULL = "Full"
    K_INVARIANT = "KInvariant"
    SECTOR = "Sector"


@dataclass(frozen=True)
class Subspace:
    kind: SubspaceKind = SubspaceKind.FULL
    k: int = 1
    sector: Optional[SectorSpec] = None

    @classmethod
    def full(cls) -> "Subspace":
        return cls(SubspaceKind.FULL)

    @classmethod
    def k_invariant(cls, k: int) -> "Subspace":
        return cls(SubspaceKind.K_INVARIANT, k=int(k))

    @classmethod
    def of_sector(cls, spec: SectorSpec) -> "Subspace":
        return cls(SubspaceKind.SECTOR, k=spec.k, sector=spec)

    def label(self) -> str:
        if self.kind is SubspaceKind.K_INVARIANT:
            return f"KInvariant({self.k})"
        if self.kind is SubspaceKind.SECTOR:
            return f"Sector({self.sector.label()})"
        return "Full"


@dataclass
class SpectrumResult:
    """Собственные пары по возрастанию; собственные поля M-ортонормированы."""

    eigenvalues: np.ndarray
    eigenfields: List[Field]
    subspace: Subspace
    zero_tol: float
    residuals: np.ndarray

    @property
    def negative_count(self) -> int:
        return int(np.sum(self.eigenvalues < -self.zero_tol))

    @property
    def marginal_count(self) -> int:
        return int(np.sum(np.abs(self.eigenvalues) <= self.zero_tol))


@dataclass
class MorseIndex:
    negative: int
    marginal: int
    eigenvalues: np.ndarray
    subspace: Subspace
    zero_tol: float
    spectrum: Optional[SpectrumResult] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "subspace": self.subspace.label(),
            "index": self.negative,
            "marginal": self.marginal,
            "zero_tol": self.zero_tol,
            "eigenvalues": [float(x) for x in self.eigenvalues],
        }


def _projector(A: OperatorMatrix, subspace: Subspace):
    """Функция-проектор на подпространство в координатах узлов маски."""
    if subspace.kind is not SubspaceKind.K_INVARIANT or subspace.k == 1:
        return None
    if A.mask.count != A.grid.n_nodes:
        raise IncompatibleSymmetry("k-invariant spectra need the whole-domain mask")
    n_theta, k = A.grid.n_theta, subspace.k
    if n_theta % k:
        raise IncompatibleSymmetry(f"N_theta={n_theta} is not divisible by k={k}")

    def proj(x: np.ndarray) -> np.ndarray:
        if x.ndim == 1:
            return project_values(x, n_theta, k)
        cols = x.shape[1]
        arr = x.reshape(A.grid.n_r, n_theta, cols)
        block = arr.reshape(A.grid.n_r, k, n_theta // k, cols).mean(axis=1)
        return np.tile(block, (1, k, 1)).reshape(x.shape)

    return proj


def _normalize_sign(vec: np.ndarray, mass: np.ndarray) -> np.ndarray:
    s = float(np.sum(mass * vec))
    if abs(s) <= 1e-12 * float(np.sum(mass * np.abs(vec))):
        s = float(vec[np.argmax(np.abs(vec))])
    return -vec if s < 0 else vec


def _dense_eigs(B: sp.csr_matrix, m: int, proj) -> Tuple[np.ndarray, np.ndarray]:
    H = B.toarray()
    if proj is not None:
        # Дополнение к k-инвариантному подпространству уводится вверх сдвигом
        shift = 2.0 * float(np.abs(H).sum(axis=0).max()) + 1.0
        P = proj(np.eye(H.shape[0]))
        H = proj(proj(H).T).T + shift * (np.eye(H.shape[0]) - P)
        H = 0.5 * (H + H.T)
    vals, vecs = sla.eigh(H, subset_by_index=[0, m - 1])
    return vals, vecs


def _partial_residual(B: sp.csr_matrix, sigma: float, nu: np.ndarray, vecs: np.ndarray) -> float:
    """Наибольшая невязка ‖By − λy‖/‖y‖ сошедшихся пар; inf, если их нет."""
    if nu is None or len(nu) == 0:
        return float("inf")
    worst = 0.0
    for idx, x in enumerate(nu):
        y = vecs[:, idx]
        lam = sigma + 1.0 / x
        worst = max(worst, float(np.linalg.norm(B @ y - lam * y) / np.linalg.norm(y)))
    return worst


def _lanczos_eigs(B: sp.csr_matrix, m: int, proj, sigma: float, n_theta: int) -> Tuple[np.ndarray, np.ndarray]:
    n = B.shape[0]
    lu = spla.splu((B - sigma * sp.identity(n)).tocsc())
    if proj is None:
        matvec = lu.solve
    else:
        def matvec(x):
            return proj(lu.solve(proj(np.asarray(x, dtype=float).ravel())))
    op = spla.LinearOperator((n, n), matvec=matvec, dtype=float)
    # Детерминированный стартовый вектор
    v0 = 1.0 + 0.1 * np.cos(np.arange(n) * (2.0 * np.pi / max(n_theta, 1)) + 0.3)
    if proj is not None:
        v0 = proj(v0)
    try:
        nu, vecs = spla.eigsh(op, k=m, which="LA", v0=v0, tol=0.0,
                              maxiter=settings.LANCZOS_MAXITER)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            f"Lanczos did not converge: {len(exc.eigenvalues)} of {m} pairs",
            residual=_partial_residual(B, sigma, exc.eigenvalues, exc.eigenvectors),
        ) from exc
    order = np.argsort(-nu)
    nu, vecs = nu[order], vecs[:, order]
    return sigma + 1.0 / nu, vecs


def smallest_eigs(A: OperatorMatrix, m: int, subspace: Optional[Subspace] = None,
                  zero_tol: Optional[float] = None) -> SpectrumResult:
    """
    m наименьших собственных значений задачи A v = λ M v в подпространстве.

    До settings.DENSE_MAX_NODES узлов используется плотная eigh, дальше Ланцош в режиме
    сдвиг-обращение с σ = −max|V|. k-инвариантность задаётся проектором
    на каждой итерации.

    Args:
        A: оператор −Δ − V на маске
        m: число собственных пар
        subspace: Full, KInvariant(k) или Sector(spec)
        zero_tol: порог нуля; по умолчанию ZERO_TOL_REL * ‖A‖₁

    Returns:
        SpectrumResult с собственными полями на всей сетке

    Raises:
        ConvergenceFailure: итерации исчерпаны или невязка пары выше допуска
    """
    subspace = subspace or Subspace.full()
    proj = _projector(A, subspace)
    n = A.size
    dim = n // subspace.k if proj is not None else n
    m = max(1, min(int(m), dim - 1 if dim > 1 else 1))

    d = 1.0 / np.sqrt(A.mass)
    B = (sp.diags(d) @ A.entries @ sp.diags(d)).tocsr()
    B = (0.5 * (B + B.T)).tocsr()
    norm_b = float(abs(B).sum(axis=0).max())
    if zero_tol is None:
        zero_tol = settings.ZERO_TOL_REL * norm_b

    if n <= settings.DENSE_MAX_NODES:
        vals, vecs = _dense_eigs(B, m, proj)
    else:
        sigma = -float(np.max(np.abs(A.potential))) if A.potential.size else 0.0
        vals, vecs = _lanczos_eigs(B, m, proj, sigma, A.grid.n_theta)

    fields, residuals = [], []
    for idx in range(vals.size):
        v = _normalize_sign(vecs[:, idx] * d, A.mass)
        Mv = A.mass * v
        residuals.append(float(np.linalg.norm(A.apply(v) - vals[idx] * Mv) / np.linalg.norm(Mv)))
        fields.append(Field(A.grid, A.extend(v)))

    worst = max(residuals) if residuals else 0.0
    bound = max(settings.EIG_RESIDUAL_TOL, settings.EIG_RESIDUAL_TOL_REL * norm_b)
    if not worst <= bound:
        raise ConvergenceFailure(f"eigenpair residual {worst:.2e} exceeds {bound:.2e} ({subspace.label()})",
                                 residual=worst)

    result = SpectrumResult(np.asarray(vals, dtype=float), fields, subspace,
                            float(zero_tol), np.asarray(residuals))
    logger.debug(
        f"Spectrum {subspace.label()} n={n}: "
        f"{', '.join(f'{x:.6g}' for x in result.eigenvalues[:4])} "
        f"(max residual {result.residuals.max():.2e})"
    )
    return result


def linearized_operator(u: Field, nl: Nonlinearity, mask=None) -> OperatorMatrix:
    """L_u = −Δ − f'(|x|, u) на маске (по умолчанию вся область)."""
    grid = u.grid
    pot = nl.fp(grid.r_nodes, u.values)
    return build_laplacian(grid, mask if mask is not None else whole_mask(grid)).with_potential(pot)


def morse_index(u: Field, nl: Nonlinearity, k: Optional[int] = None,
                zero_tol: Optional[float] = None) -> MorseIndex:
    """
    Индекс Морса u: число собственных значений L_u ниже −zero_tol.

    Args:
        u: сошедшееся решение
        nl: нелинейность
        k: порядок симметрии; None — всё пространство
        zero_tol: порог нуля

    Returns:
        MorseIndex с количеством отрицательных и «пограничных» (|λ| ≤ zero_tol)
    """
    A = linearized_operator(u, nl)
    subspace = Subspace.full() if k is None else Subspace.k_invariant(k)
    m = settings.MORSE_EIGS
    while True:
        spectrum = smallest_eigs(A, m, subspace, zero_tol)
        top = spectrum.eigenvalues[-1]
        if top > spectrum.zero_tol or m >= settings.MORSE_EIGS_MAX or spectrum.eigenvalues.size < m:
            break
        m *= 2

    index = MorseIndex(spectrum.negative_count, spectrum.marginal_count,
                       spectrum.eigenvalues, subspace, spectrum.zero_tol, spectrum)
    logger.info(f"Morse index {subspace.label()}: {index.negative} (marginal {index.marginal})")
    if index.marginal:
        logger.warning(f"{index.marginal} marginal eigenvalue(s) within zero_tol={index.zero_tol:.2e}")
    return index


def sector_lambda1(u: Field, nl: Nonlinearity, spec: SectorSpec,
                   zero_tol: Optional[float] = None) -> Tuple[float, Field]:
    """
    λ₁(L_u, S^±_{k,e}) и первая собственная функция.

    Собственная функция нормирована ∫ φ² = 1 и неотрицательна внутри сектора.
    """
    if spec.part is SectorPart.DOUBLE:
        raise ValueError("sector_lambda1 expects a Plus or Minus half-sector")
    mask = sector_mask(u.grid, spec)
    A = linearized_operator(u, nl, mask)
    result = smallest_eigs(A, 1, Subspace.of_sector(spec), zero_tol)
    return float(result.eigenvalues[0]), result.eigenfields[0]


def truncation_trend(domain: DomainSpec, radii: Sequence[float], nodes_per_unit: int,
                     n_theta: int, k: int = 1) -> List[Tuple[float, float]]:
    """
    λ₁(−Δ, S^+_{k,e}) на усечениях {r_inner < |x| < R} для растущих R.

    Для внешних областей истинная нижняя грань не вычисляется; возвращается
    тренд по радиусам усечения.
    """
    rows = []
    for radius in radii:
        trunc = DomainSpec(domain.kind, domain.r_inner, float(radius))
        n_r = max(4, int(round(nodes_per_unit * (radius - domain.r_inner))))
        grid = PolarGrid(trunc, n_r, n_theta)
        spec = SectorSpec(k, Direction(0.0), SectorPart.PLUS)
        A = build_laplacian(grid, sector_mask(grid, spec))
        lam = float(smallest_eigs(A, 1, Subspace.of_sector(spec)).eigenvalues[0])
        logger.info(f"Truncation R={radius:g}: lambda1={lam:.6g}")
        rows.append((float(radius), lam))
    return rows
