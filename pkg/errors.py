"""
Иерархия исключений пакета.

Каждое исключение наследуется от PorousMediaError и одновременно от того
встроенного типа, который естественно ловить вызывающему коду: ValueError
для некорректных входных данных, RuntimeError для численных сбоев.
"""
from typing import Optional


class PorousMediaError(Exception):
    """Базовое исключение пакета."""


class InvalidSpectrumError(PorousMediaError, ValueError):
    """Неположительные или убывающие собственные значения оператора."""


class DimensionMismatchError(PorousMediaError, ValueError):
    """Число мод поля не совпадает с числом мод оператора."""


class SingularMultiplierError(PorousMediaError, ValueError):
    """Спектральный множитель не определён в одном из λ_k."""


class UnsupportedBasisError(PorousMediaError, ValueError):
    """Операция требует базиса синусов Дирихле."""


class InvalidPsiError(PorousMediaError, ValueError):
    """Некорректные параметры нелинейности Ψ."""


class UnsupportedCombinationError(PorousMediaError, ValueError):
    """Нелинейная Ψ с абстрактным спектром."""


class MarkIndexError(PorousMediaError, IndexError):
    """Индекс метки вне пространства меток."""


class InvalidMarkSpaceError(PorousMediaError, ValueError):
    """Некорректные метки, веса или коэффициент скачка."""


class InfeasibleTruncationError(PorousMediaError, ValueError):
    """Ни один компакт K_n не обеспечивает заданную оценку хвоста."""


class InvalidControlError(PorousMediaError, ValueError):
    """Некорректная сетка управления."""


class PreconditionViolationError(PorousMediaError, ValueError):
    """Управление не принадлежит ограниченному классу."""


class InsufficientDataError(PorousMediaError, ValueError):
    """Недостаточно строк Монте-Карло для экстраполяции."""


class StepFailureError(PorousMediaError, RuntimeError):
    """Итерация Пикара на шаге по времени не сошлась."""

    def __init__(self, message: str, time: float, dt: float,
                 residual: float, iterations: int,
                 halvings: Optional[int] = None):
        super().__init__(message)
        self.time = time
        self.dt = dt
        self.residual = residual
        self.iterations = iterations
        self.halvings = halvings

    def diagnostics(self) -> dict:
        """Возвращает диагностику сбоя в виде словаря."""
        return {
            "time": self.time,
            "dt": self.dt,
            "residual": self.residual,
            "iterations": self.iterations,
            "halvings": self.halvings,
        }
