"""
Нелинейность Ψ уравнения пористой среды.

Семейства монотонно неубывающих липшицевых функций с Ψ(0) = 0:
линейная, двухфазная функция задачи Стефана и насыщающийся tanh.
Константа Липшица k задаётся аналитически для каждого семейства,
выборочная проверка только подтверждает её.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from errors import InvalidPsiError, UnsupportedCombinationError
from spectral_space import (
    BASIS_ABSTRACT,
    OperatorSpec,
    SpectralField,
    analyze,
    check_dimensions,
    from_grid,
    synthesize,
    to_grid,
)

logger = logging.getLogger(__name__)

PSI_KINDS = ("linear", "stefan", "tanh_saturating")


@dataclass(frozen=True, eq=False)
class PsiSpec:
    """Скалярная функция Ψ с сертифицированной константой Липшица lip."""

    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    lip: float = 0.0
    delta: float = 0.0

    @property
    def alpha_tilde(self) -> float:
        """α̃ = (k + 1)^{−1}, k = Lip Ψ."""
        return 1.0 / (self.lip + 1.0)

    @property
    def is_linear(self) -> bool:
        """Линейна ли Ψ (включая сдвиг δ·id)."""
        return self.kind == "linear"

    @property
    def linear_slope(self) -> float:
        """Наклон линейной Ψ с учётом δ."""
        return self.params["k0"] + self.delta

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "linear":
            values = self.params["k0"] * r
        elif self.kind == "stefan":
            a, b, rho = self.params["a"], self.params["b"], self.params["rho"]
            values = np.where(r < 0.0, a * r, np.where(r > rho, b * (r - rho), 0.0))
        elif self.kind == "tanh_saturating":
            k0, s = self.params["k0"], self.params["s"]
            values = k0 * s * np.tanh(r / s)
        else:
            raise InvalidPsiError(f"Unknown psi kind: {self.kind}")
        if self.delta:
            values = values + self.delta * r
        return values

    def with_identity(self, delta: float) -> "PsiSpec":
        """Ψ + δ·id, константа Липшица увеличивается на δ."""
        if delta < 0.0:
            raise InvalidPsiError(f"Identity shift must be nonnegative, got {delta}")
        if delta == 0.0:
            return self
        return replace(self, lip=self.lip + delta, delta=self.delta + delta)


def make_psi(kind: str, **params: float) -> PsiSpec:
    """
    Строит Ψ заданного семейства.

    Args:
        kind: linear (k0 ≥ 0), stefan (a, b, rho > 0) или tanh_saturating
            (k0 ≥ 0, s > 0)

    Returns:
        PsiSpec: для stefan lip = max{a, b}, для остальных lip = k0
    """
    if kind == "linear":
        k0 = float(params.get("k0", 1.0))
        if k0 < 0.0:
            raise InvalidPsiError(f"Linear slope must be nonnegative, got {k0}")
        return PsiSpec("linear", {"k0": k0}, lip=k0)

    if kind == "stefan":
        try:
            a, b, rho = (float(params[name]) for name in ("a", "b", "rho"))
        except KeyError as e:
            raise InvalidPsiError(f"Stefan psi is missing parameter {e}") from e
        if min(a, b, rho) <= 0.0:
            raise InvalidPsiError(
                f"Stefan parameters must be positive, got a={a}, b={b}, rho={rho}"
            )
        return PsiSpec("stefan", {"a": a, "b": b, "rho": rho}, lip=max(a, b))

    if kind == "tanh_saturating":
        k0 = float(params.get("k0", 1.0))
        s = float(params.get("s", 1.0))
        if k0 < 0.0 or s <= 0.0:
            raise InvalidPsiError(f"tanh_saturating needs k0 >= 0 and s > 0, got k0={k0}, s={s}")
        return PsiSpec("tanh_saturating", {"k0": k0, "s": s}, lip=k0)

    raise InvalidPsiError(f"Unknown psi kind: {kind}")


def psi_coefficients(psi: PsiSpec, coeffs: np.ndarray, M: int) -> np.ndarray:
    """Коэффициенты Ψ(u) по коэффициентам u без проверок (горячий цикл решателя)."""
    if psi.is_linear:
        return psi.linear_slope * coeffs
    return analyze(psi(synthesize(coeffs, M)), coeffs.shape[-1])


def apply_psi(psi: PsiSpec, op: OperatorSpec, u: SpectralField, M: int) -> SpectralField:
    """
    Действие оператора Немыцкого Ψ на поле.

    Линейная Ψ применяется точно в спектре; нелинейная вычисляется
    псевдоспектрально: from_grid(Ψ(to_grid(u))).
    """
    check_dimensions(op, u)
    if psi.is_linear:
        return SpectralField(psi.linear_slope * u.coeffs)
    if op.basis == BASIS_ABSTRACT:
        raise UnsupportedCombinationError(
            f"Nonlinear psi '{psi.kind}' needs a grid; operator basis is abstract"
        )
    return from_grid(op, psi(to_grid(op, u, M)))


def temperature(psi: PsiSpec, op: OperatorSpec, u: SpectralField, M: int) -> np.ndarray:
    """Температура ϑ = Ψ(X) в узлах коллокации."""
    return psi(to_grid(op, u, M))


@dataclass
class H1Report:
    """Результат выборочной проверки (H1)."""

    monotone: bool
    lip_observed: float
    psi0: float
    worst_monotonicity: float
    strong_monotonicity_slack: float
    lip_ok: bool
    n_samples: int


def check_H1(psi: PsiSpec, n_samples: int = 1000,
             value_range: Tuple[float, float] = (-5.0, 5.0),
             rng: Optional[np.random.Generator] = None) -> H1Report:
    """
    Выборочная проверка (H1) на парах (r, r').

    Считает минимум (Ψ(r) − Ψ(r'))(r − r') (монотонность), наблюдаемую
    константу Липшица и запас сильной монотонности
    (Ψ(r) − Ψ(r'))(r − r') − α̃|Ψ(r) − Ψ(r')|².
    """
    if n_samples < 2:
        raise ValueError(f"check_H1 needs at least 2 samples, got {n_samples}")
    rng = rng if rng is not None else np.random.default_rng(0)

    low, high = value_range
    r = rng.uniform(low, high, n_samples)
    r_prime = rng.uniform(low, high, n_samples)
    d_psi = psi(r) - psi(r_prime)
    d_r = r - r_prime

    products = d_psi * d_r
    scale = 1.0 + np.abs(d_r) ** 2 * max(psi.lip, 1.0)
    worst = float(np.min(products / scale))

    nonzero = np.abs(d_r) > 0.0
    lip_observed = float(np.max(np.abs(d_psi[nonzero]) / np.abs(d_r[nonzero]))) if nonzero.any() else 0.0
    slack = float(np.min(products - psi.alpha_tilde * d_psi ** 2))

    report = H1Report(
        monotone=worst >= -1e-12,
        lip_observed=lip_observed,
        psi0=float(psi(0.0)),
        worst_monotonicity=worst,
        strong_monotonicity_slack=slack,
        lip_ok=lip_observed <= psi.lip + 1e-9,
        n_samples=n_samples,
    )
    logger.debug("H1 check for %s: %s", psi.kind, report)
    return report
