"""
Спектральное пространство состояний.

Модуль описывает отрицательно определённый оператор L через его спектр,
состояния как конечные наборы коэффициентов в собственном базисе L,
Γ-преобразование и нормы тройки Гельфанда L²(μ) ⊂ F*₁,₂ как диагональные
спектральные множители. Область E = (0, π) с мерой Лебега и базисом синусов
Дирихле e_k(ξ) = √(2/π)·sin(kξ); произвольный положительный спектр задаётся
как абстрактный.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from errors import (
    DimensionMismatchError,
    InvalidSpectrumError,
    SingularMultiplierError,
    UnsupportedBasisError,
)

logger = logging.getLogger(__name__)

BASIS_DIRICHLET_SINE = "dirichlet_sine"
BASIS_ABSTRACT = "abstract"

OPERATOR_KINDS = ("laplacian", "fractional", "explicit")
NORM_KINDS = ("L2", "F12", "F12_star", "F12_star_eps")


def _frozen_array(values) -> np.ndarray:
    """Копирует значения в неизменяемый массив float64."""
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Спектр −L: положительные неубывающие λ₁..λ_K и описание базиса."""

    eigenvalues: np.ndarray
    basis: str = BASIS_DIRICHLET_SINE
    kind: str = "laplacian"
    alpha: Optional[float] = None
    shift: float = 0.0

    def __post_init__(self):
        eigenvalues = _frozen_array(self.eigenvalues).reshape(-1)
        object.__setattr__(self, "eigenvalues", eigenvalues)

        if eigenvalues.size < 1:
            raise InvalidSpectrumError("Operator needs at least one mode (K >= 1)")
        if not np.all(np.isfinite(eigenvalues)):
            raise InvalidSpectrumError(f"Non-finite eigenvalues: {eigenvalues}")
        if np.any(eigenvalues <= 0.0):
            raise InvalidSpectrumError(f"Eigenvalues must be positive: {eigenvalues}")
        if np.any(np.diff(eigenvalues) < 0.0):
            raise InvalidSpectrumError(f"Eigenvalues must be ascending: {eigenvalues}")
        if self.basis not in (BASIS_DIRICHLET_SINE, BASIS_ABSTRACT):
            raise InvalidSpectrumError(f"Unknown basis: {self.basis}")

    @property
    def K(self) -> int:
        """Число мод."""
        return int(self.eigenvalues.size)

    def shifted(self, eps: float) -> "OperatorSpec":
        """Спектр оператора ε − L, т.е. λ_k + ε."""
        if eps < 0.0:
            raise InvalidSpectrumError(f"Shift must be nonnegative, got {eps}")
        if eps == 0.0:
            return self
        return OperatorSpec(
            eigenvalues=self.eigenvalues + eps,
            basis=self.basis,
            kind=self.kind,
            alpha=self.alpha,
            shift=self.shift + eps,
        )

    def describe(self) -> dict:
        """Описание для логов и отчётов."""
        return {
            "kind": self.kind,
            "basis": self.basis,
            "K": self.K,
            "alpha": self.alpha,
            "shift": self.shift,
        }


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Состояние: K коэффициентов в ортонормированном собственном базисе L."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        coeffs = _frozen_array(self.coeffs).reshape(-1)
        if not np.all(np.isfinite(coeffs)):
            raise ValueError(f"Spectral field has non-finite coefficients: {coeffs}")
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def K(self) -> int:
        """Число мод."""
        return int(self.coeffs.size)

    @classmethod
    def zeros(cls, K: int) -> "SpectralField":
        """Нулевое поле из K мод."""
        return cls(np.zeros(K))

    @classmethod
    def unit(cls, K: int, k: int) -> "SpectralField":
        """Поле e_k (k считается с единицы)."""
        coeffs = np.zeros(K)
        coeffs[k - 1] = 1.0
        return cls(coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.coeffs - other.coeffs)

    def scaled(self, factor: float) -> "SpectralField":
        """Поле, умноженное на скаляр."""
        return SpectralField(factor * self.coeffs)

    def to_list(self) -> list:
        """Коэффициенты в виде списка для сериализации."""
        return [float(c) for c in self.coeffs]


def make_operator(kind: str, K: int, alpha: Optional[float] = None,
                  eigenvalues: Optional[Sequence[float]] = None) -> OperatorSpec:
    """
    Строит спектр −L.

    Args:
        kind: laplacian, fractional (нужен alpha ∈ (0, 1]) или explicit
            (нужен список eigenvalues длины K)
        K: число мод

    Returns:
        OperatorSpec: λ_k = k² для лапласиана, (k²)^α для дробного лапласиана
        в базисе синусов Дирихле на (0, π); явный спектр считается абстрактным.
    """
    if K < 1:
        raise InvalidSpectrumError(f"K must be >= 1, got {K}")

    modes = np.arange(1, K + 1, dtype=float)
    if kind == "laplacian":
        return OperatorSpec(modes ** 2, BASIS_DIRICHLET_SINE, "laplacian", 1.0)
    if kind == "fractional":
        if alpha is None or not 0.0 < alpha <= 1.0:
            raise InvalidSpectrumError(f"Fractional exponent must lie in (0, 1], got {alpha}")
        return OperatorSpec(np.power(modes ** 2, alpha), BASIS_DIRICHLET_SINE,
                            "fractional", float(alpha))
    if kind == "explicit":
        if eigenvalues is None:
            raise InvalidSpectrumError("Explicit operator requires an eigenvalue list")
        if len(eigenvalues) != K:
            raise InvalidSpectrumError(
                f"Explicit spectrum has {len(eigenvalues)} values, expected K={K}"
            )
        return OperatorSpec(eigenvalues, BASIS_ABSTRACT, "explicit", None)
    raise InvalidSpectrumError(f"Unknown operator kind: {kind}")


def check_dimensions(op: OperatorSpec, *fields: SpectralField):
    """Проверяет, что все поля созданы для того же числа мод, что и оператор."""
    for u in fields:
        if u.K != op.K:
            raise DimensionMismatchError(
                f"Field has {u.K} modes, operator has K={op.K}"
            )


def apply_L(op: OperatorSpec, u: SpectralField) -> SpectralField:
    """Действие L: коэффициент k умножается на −λ_k."""
    check_dimensions(op, u)
    return SpectralField(-op.eigenvalues * u.coeffs)


def multiplier_values(op: OperatorSpec, m: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Значения m(λ_k); бросает SingularMultiplierError, если m не определён."""
    with np.errstate(all="ignore"):
        values = np.broadcast_to(np.asarray(m(op.eigenvalues), dtype=float),
                                 op.eigenvalues.shape)
    if not np.all(np.isfinite(values)):
        bad = op.eigenvalues[~np.isfinite(values)]
        raise SingularMultiplierError(f"Multiplier is undefined at eigenvalues {bad}")
    return values


def spectral_multiplier(op: OperatorSpec, m: Callable[[np.ndarray], np.ndarray],
                        u: SpectralField) -> SpectralField:
    """Диагональный множитель: коэффициент k умножается на m(λ_k)."""
    check_dimensions(op, u)
    return SpectralField(multiplier_values(op, m) * u.coeffs)


def gamma_transform(op: OperatorSpec, u: SpectralField, r: float) -> SpectralField:
    """Γ-преобразование V_r = (1 − L)^{−r/2}."""
    return spectral_multiplier(op, lambda lam: (1.0 + lam) ** (-0.5 * r), u)


def alpha_smoother(alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    """Множитель √α·(α − L)^{−1/2}; сжатие на L²(μ) при α > 0."""
    return lambda lam: np.sqrt(alpha) / np.sqrt(alpha + lam)


def norm_weights(op: OperatorSpec, which: str, eps: Optional[float] = None) -> np.ndarray:
    """Спектральные веса w_k, для которых ‖u‖² = Σ w_k c_k²."""
    lam = op.eigenvalues
    if which == "L2":
        return np.ones_like(lam)
    if which == "F12":
        return 1.0 + lam
    if which == "F12_star":
        return 1.0 / (1.0 + lam)
    if which == "F12_star_eps":
        if eps is None or eps <= 0.0:
            raise ValueError(f"F12_star_eps needs eps > 0, got {eps}")
        return 1.0 / (eps + lam)
    raise ValueError(f"Unknown norm: {which}")


def inner(u: SpectralField, v: SpectralField, op: OperatorSpec, which: str = "L2",
          eps: Optional[float] = None) -> float:
    """Скалярное произведение в выбранном пространстве тройки."""
    check_dimensions(op, u, v)
    return float(np.sum(norm_weights(op, which, eps) * u.coeffs * v.coeffs))


def norm(u: SpectralField, op: OperatorSpec, which: str = "L2",
         eps: Optional[float] = None) -> float:
    """Норма L2, F12, F12_star или F12_star_eps(ε)."""
    check_dimensions(op, u)
    return float(np.sqrt(np.sum(norm_weights(op, which, eps) * u.coeffs ** 2)))


@lru_cache(maxsize=64)
def sine_matrix(K: int, M: int) -> np.ndarray:
    """Матрица S_{jk} = e_k(ξ_j), ξ_j = jπ/(M + 1), j = 1..M."""
    xi = np.arange(1, M + 1) * np.pi / (M + 1)
    matrix = np.sqrt(2.0 / np.pi) * np.sin(np.outer(xi, np.arange(1, K + 1)))
    matrix.setflags(write=False)
    return matrix


def collocation_points(M: int) -> np.ndarray:
    """Узлы коллокации ξ_j = jπ/(M + 1)."""
    return np.arange(1, M + 1) * np.pi / (M + 1)


def synthesize(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Значения на сетке по коэффициентам (прямое синус-преобразование)."""
    return sine_matrix(coeffs.shape[-1], M) @ coeffs


def analyze(values: np.ndarray, K: int) -> np.ndarray:
    """Первые K коэффициентов по значениям на сетке (обратное преобразование)."""
    M = values.shape[-1]
    return (np.pi / (M + 1)) * (sine_matrix(K, M).T @ values)


def _check_collocation(op: OperatorSpec, M: int):
    if op.basis != BASIS_DIRICHLET_SINE:
        raise UnsupportedBasisError(
            f"Grid evaluation needs the {BASIS_DIRICHLET_SINE} basis, got {op.basis}"
        )
    if M < 2 * op.K:
        raise DimensionMismatchError(f"Collocation size M={M} is below 2K={2 * op.K}")


def to_grid(op: OperatorSpec, u: SpectralField, M: int) -> np.ndarray:
    """Значения поля в узлах ξ_j = jπ/(M + 1), j = 1..M."""
    check_dimensions(op, u)
    _check_collocation(op, M)
    return synthesize(u.coeffs, M)


def from_grid(op: OperatorSpec, values: Sequence[float]) -> SpectralField:
    """Проекция значений на сетке на первые K мод; обратна к to_grid."""
    values = np.asarray(values, dtype=float)
    _check_collocation(op, values.size)
    return SpectralField(analyze(values, op.K))
