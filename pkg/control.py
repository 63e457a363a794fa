"""
Управления g на Z_T = [0, T] × Z и их энтропийная стоимость.

Управление задаётся кусочно-постоянной сеткой n_t × m (ячейки по времени ×
метки). Стоимость Q(g) = ∫ l(g) dν_T с l(r) = r log r − r + 1, множество
S^N = {Q(g) ≤ N}, проекция на S^N и экспоненциальное неравенство Юнга.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import xlogy

from errors import InvalidControlError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ControlGrid:
    """Неотрицательное управление g_{i,j} на равномерной сетке по времени."""

    values: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidControlError(f"Control grid must be (n_t, m), got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidControlError("Control grid has non-finite values")
        if np.any(values < 0.0):
            raise InvalidControlError(f"Control grid has negative values, min={values.min()}")
        if self.T <= 0.0:
            raise InvalidControlError(f"Horizon must be positive, got T={self.T}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_t(self) -> int:
        """Число ячеек по времени."""
        return int(self.values.shape[0])

    @property
    def m(self) -> int:
        """Число меток."""
        return int(self.values.shape[1])

    @property
    def dt(self) -> float:
        """Шаг сетки по времени."""
        return self.T / self.n_t

    def cell_index(self, t: float) -> int:
        """Номер ячейки, содержащей момент t (правый конец относится к последней)."""
        return min(max(int(t / self.dt), 0), self.n_t - 1)

    def row(self, t: float) -> np.ndarray:
        """Значения g(t, ·) по всем меткам."""
        return self.values[self.cell_index(t)]

    def refine(self, n_t: int) -> "ControlGrid":
        """Та же кусочно-постоянная функция на более мелкой сетке."""
        if n_t == self.n_t:
            return self
        if n_t % self.n_t != 0:
            raise InvalidControlError(
                f"Cannot refine {self.n_t} time cells to {n_t}: not a multiple"
            )
        return ControlGrid(np.repeat(self.values, n_t // self.n_t, axis=0), self.T)

    @classmethod
    def constant(cls, n_t: int, m: int, T: float = 1.0, value: float = 1.0) -> "ControlGrid":
        """Постоянное управление; value = 1 даёт нулевое управление."""
        return cls(np.full((n_t, m), float(value)), T)

    @classmethod
    def null(cls, n_t: int, m: int, T: float = 1.0) -> "ControlGrid":
        """Нулевое управление g ≡ 1."""
        return cls.constant(n_t, m, T, 1.0)


def entropy_l(r):
    """l(r) = r log r − r + 1, l(0) = 1."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0.0):
        raise InvalidControlError("Entropy l(r) is defined only for r >= 0")
    values = xlogy(r, r) - r + 1.0
    return float(values) if values.ndim == 0 else values


def entropy_conjugate(s):
    """Сопряжённая по Лежандру функция l*(s) = e^s − 1."""
    return np.expm1(s)


def _check_alignment(g: ControlGrid, mark_space):
    if g.m != mark_space.m:
        raise InvalidControlError(
            f"Control has {g.m} marks, mark space has {mark_space.m}"
        )


def q_cost(g: ControlGrid, mark_space) -> float:
    """Q(g) = Σ_{i,j} l(g_{i,j})·dt·ν_j."""
    _check_alignment(g, mark_space)
    return float(np.sum(entropy_l(g.values) * mark_space.weights[np.newaxis, :]) * g.dt)


def interpolate_to_null(g: ControlGrid, theta: float) -> ControlGrid:
    """g_θ = θ·g + (1 − θ)·1."""
    return ControlGrid(theta * g.values + (1.0 - theta), g.T)


def project_SN(g: ControlGrid, mark_space, N: float, tol: float = 1e-9,
               max_iterations: int = 200) -> ControlGrid:
    """
    Проекция на S^N интерполяцией к g ≡ 1.

    Если Q(g) ≤ N, g возвращается без изменений. Иначе θ ищется бисекцией
    так, чтобы Q(g_θ) ∈ [N − tol, N]; Q(g_θ) непрерывна и не убывает по θ
    в силу выпуклости l и l(1) = 0.
    """
    if N <= 0.0:
        raise ValueError(f"Budget N must be positive, got {N}")
    if q_cost(g, mark_space) <= N:
        return g

    lo, hi = 0.0, 1.0
    q_lo = 0.0
    for _ in range(max_iterations):
        mid = 0.5 * (lo + hi)
        q_mid = q_cost(interpolate_to_null(g, mid), mark_space)
        if q_mid <= N:
            lo, q_lo = mid, q_mid
        else:
            hi = mid
        if N - q_lo <= tol:
            break

    logger.debug("Projected control onto S^N: theta=%.12f, Q=%.12f, N=%s", lo, q_lo, N)
    return interpolate_to_null(g, lo)


def in_SN(g: ControlGrid, mark_space, N: float, tol: float = 1e-9) -> bool:
    """Принадлежность g множеству S^N."""
    return q_cost(g, mark_space) <= N + tol


def in_bounded_class(phi: ControlGrid, n: float, compact_size: Optional[int] = None,
                     tol: float = 1e-12) -> bool:
    """n ≥ φ ≥ 1/n на K_n (первые compact_size меток) и φ = 1 вне K_n."""
    size = phi.m if compact_size is None else compact_size
    inside = phi.values[:, :size]
    outside = phi.values[:, size:]
    return bool(
        np.all(inside <= n + tol)
        and np.all(inside >= 1.0 / n - tol)
        and np.all(np.abs(outside - 1.0) <= tol)
    )


def young_bound(a: float, b: float, sigma: float) -> Tuple[float, float]:
    """Обе части неравенства ab ≤ e^{σa} + l(b)/σ, σ ≥ 1."""
    if sigma < 1.0:
        raise ValueError(f"Young bound needs sigma >= 1, got {sigma}")
    return a * b, float(np.exp(sigma * a) + entropy_l(b) / sigma)


def oscillating(n_t: int, m: int, T: float, frequency: float,
                amplitude: float = 1.0) -> ControlGrid:
    """g(t) = 1 + a·sin(2π·frequency·t/T) в серединах ячеек, одинаково для всех меток."""
    if not 0.0 <= amplitude <= 1.0:
        raise InvalidControlError(f"Amplitude must lie in [0, 1], got {amplitude}")
    midpoints = (np.arange(n_t) + 0.5) * T / n_t
    profile = 1.0 + amplitude * np.sin(2.0 * np.pi * frequency * midpoints / T)
    return ControlGrid(np.repeat(profile[:, np.newaxis], m, axis=1), T)


def perturbed(g: ControlGrid, perturbation: np.ndarray, scale: float) -> ControlGrid:
    """g + scale·perturbation с отсечением снизу нулём."""
    return ControlGrid(np.clip(g.values + scale * np.asarray(perturbation), 0.0, None), g.T)


def random_in_SN(n_t: int, mark_space, T: float, N: float, rng: np.random.Generator,
                 spread: float = 1.0) -> ControlGrid:
    """Случайное логнормальное управление, спроецированное на S^N."""
    values = np.exp(spread * rng.standard_normal((n_t, mark_space.m)))
    return project_SN(ControlGrid(values, T), mark_space, N)
