"""
Иерархия ошибок ksym.

Ошибки конфигурации и форматов ведут к коду выхода 2,
численные (NumericalError) — к коду 3.
"""

from typing import Optional


class KSymError(Exception):
    """Базовая ошибка проекта."""


# --- Геометрия и сетка ---

class AxisNotGridAligned(KSymError):
    """Направление не лежит на решётке ψ_m = mπ/N_θ."""


class IncompatibleSymmetry(KSymError):
    """N_θ не согласовано с порядком симметрии k (или маска не от этой сетки)."""


class MaskMismatch(KSymError):
    """Поле не обращается в ноль вне маски."""


class NotKInvariant(KSymError):
    """Поле не инвариантно относительно поворота на 2π/k."""


# --- Численные ошибки ---

class NumericalError(KSymError):
    """Базовая численная ошибка."""


class NonlinearityOverflow(NumericalError):
    """Аргумент экспоненты вне безопасного диапазона."""


class ConvergenceFailure(NumericalError):
    """Итерационный собственный решатель исчерпал бюджет."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class NoBracket(NumericalError):
    """Стрельба не смогла окружить целевое число нулей."""


class Diverged(NumericalError):
    """Ньютон или спуск не сходятся."""


class SingularJacobian(NumericalError):
    """Вырожденный якобиан: вероятно, точка бифуркации."""


class CollapsedSign(NumericalError):
    """u⁺ или u⁻ исчезла при нодальном спуске."""


class IndexMismatch(NumericalError):
    """k-инвариантный индекс Морса отличается от требуемого."""


class NonpositiveOverlap(NumericalError):
    """∫ φ_ψ^± φ₁ ≤ 0, построение ξ_ψ невозможно."""


# --- Конфигурация и файлы ---

class ConfigError(KSymError):
    """Нарушение схемы сценария; path указывает на поле."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class FormatError(KSymError):
    """Некорректный заголовок контейнера поля."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TruncatedPayload(KSymError):
    """Размер .f64 не совпадает с count из заголовка."""


class IoError(KSymError):
    """Ошибка записи результатов."""
