"""
Пространство меток Z с мерой ν и коэффициент скачка f(t, x, z).

Z задаётся конечным взвешенным множеством, компакты K_n являются префиксами индексов.
Коэффициент скачка аффинен по x: f(t, x, z) = σ(z)β(t)(c·x + η), поэтому
функции l₁, l₂, l₃ из (H2) известны точно. Здесь же выборочная проверка
(H2), сертификат хвоста и агрегаты h_i(t) = ∫ l_i |g − 1| dν.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

from control import ControlGrid, entropy_conjugate, project_SN
from errors import (
    DimensionMismatchError,
    InfeasibleTruncationError,
    InvalidMarkSpaceError,
    MarkIndexError,
)
from spectral_space import OperatorSpec, SpectralField, check_dimensions, norm

logger = logging.getLogger(__name__)

BETA_KINDS = ("constant", "cosine")
H2_EPS_LADDER = (0.1, 0.5, 1.0)


@dataclass(frozen=True, eq=False)
class MarkSpace:
    """Метки z_j с весами ν({z_j}) > 0."""

    marks: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        marks = np.array(self.marks, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if marks.size < 1:
            raise InvalidMarkSpaceError("Mark space needs at least one mark")
        if marks.size != weights.size:
            raise InvalidMarkSpaceError(
                f"Got {marks.size} marks and {weights.size} weights"
            )
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0.0):
            raise InvalidMarkSpaceError(f"Weights must be positive and finite: {weights}")
        marks.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "marks", marks)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        """Число меток."""
        return int(self.marks.size)

    @property
    def total_mass(self) -> float:
        """ν(Z)."""
        return float(np.sum(self.weights))

    def compact(self, n: int) -> np.ndarray:
        """Индексы компакта K_n = {z_1..z_n}."""
        return np.arange(min(max(n, 0), self.m))

    def tail_mass(self, n: int) -> float:
        """ν(K_nᶜ)."""
        return float(np.sum(self.weights[min(max(n, 0), self.m):]))


def make_mark_space(marks: Sequence[float], weights: Optional[Sequence[float]] = None) -> MarkSpace:
    """Строит пространство меток; по умолчанию все веса равны единице."""
    if weights is None:
        weights = np.ones(len(marks))
    return MarkSpace(np.asarray(marks, dtype=float), np.asarray(weights, dtype=float))


@dataclass(frozen=True)
class BetaProfile:
    """Ограниченный временной профиль β(t)."""

    kind: str = "constant"
    amplitude: float = 1.0
    frequency: float = 1.0

    def __post_init__(self):
        if self.kind not in BETA_KINDS:
            raise InvalidMarkSpaceError(f"Unknown beta profile: {self.kind}")

    def __call__(self, t):
        if self.kind == "constant":
            return self.amplitude * np.ones_like(np.asarray(t, dtype=float))
        return self.amplitude * np.cos(2.0 * np.pi * self.frequency * np.asarray(t, dtype=float))

    @property
    def bound(self) -> float:
        """sup |β|."""
        return abs(self.amplitude)


@dataclass(frozen=True, eq=False)
class JumpCoefficient:
    """f(t, x, z_j) = σ_j β(t)(c·x + η)."""

    sigma: np.ndarray
    eta: SpectralField
    c: float = 0.0
    beta: BetaProfile = field(default_factory=BetaProfile)

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if not np.all(np.isfinite(sigma)) or np.any(sigma < 0.0):
            raise InvalidMarkSpaceError(f"Amplitudes sigma must be finite and >= 0: {sigma}")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def m(self) -> int:
        """Число меток."""
        return int(self.sigma.size)

    @property
    def K(self) -> int:
        """Число мод профиля η."""
        return self.eta.K

    @property
    def gain(self) -> float:
        """max(|c|, ‖η‖_{F*}, |η|₂, 1); ‖η‖_{F*} ≤ |η|₂, поэтому достаточно L²."""
        return max(abs(self.c), float(np.linalg.norm(self.eta.coeffs)), 1.0)

    @property
    def is_zero(self) -> bool:
        """f ≡ 0."""
        return bool(np.all(self.sigma == 0.0) or (self.c == 0.0 and not np.any(self.eta.coeffs)))

    def l1(self, t: float) -> np.ndarray:
        """l₁(t, z_j) = |c|σ_j|β(t)|."""
        return abs(self.c) * self.sigma * abs(float(self.beta(t)))

    def l2(self, t: float) -> np.ndarray:
        """l₂(t, z_j) = σ_j|β(t)|·gain."""
        return self.sigma * abs(float(self.beta(t))) * self.gain

    def l3(self, t: float) -> np.ndarray:
        """l₃ совпадает с l₂."""
        return self.l2(t)

    def bound_function(self, i: int, t: float) -> np.ndarray:
        """l_i(t, ·), i ∈ {1, 2, 3}."""
        if i == 1:
            return self.l1(t)
        if i == 2:
            return self.l2(t)
        if i == 3:
            return self.l3(t)
        raise ValueError(f"Bound function index must be 1, 2 or 3, got {i}")

    def affine(self, coeffs: np.ndarray) -> np.ndarray:
        """c·x + η в коэффициентах."""
        return self.c * coeffs + self.eta.coeffs

    def drift_weight(self, t: float, g_row: np.ndarray, weights: np.ndarray) -> float:
        """β(t)·Σ_j σ_j(g_j − 1)ν_j: ∫ f(t, x, z)(g − 1)ν(dz) = weight·(c·x + η)."""
        return float(self.beta(t)) * float(np.sum(self.sigma * (g_row - 1.0) * weights))

    def compensator_weight(self, t: float, weights: np.ndarray) -> float:
        """β(t)·Σ_j σ_j ν_j: ∫ f(t, x, z)ν(dz) = weight·(c·x + η)."""
        return float(self.beta(t)) * float(np.sum(self.sigma * weights))


def eval_f(fc: JumpCoefficient, t: float, x: SpectralField, z_index: int) -> SpectralField:
    """f(t, x, z_j) = σ_j β(t)(c·x + η)."""
    if not 0 <= z_index < fc.m:
        raise MarkIndexError(f"Mark index {z_index} out of range for {fc.m} marks")
    if x.K != fc.K:
        raise DimensionMismatchError(f"Field has {x.K} modes, eta has {fc.K}")
    return SpectralField(fc.sigma[z_index] * float(fc.beta(t)) * fc.affine(x.coeffs))


@dataclass
class H2Report:
    """Минимальные запасы в неравенствах (H2) и их ε-варианте по выборке."""

    slack_i: float
    slack_ii: float
    slack_iii: float
    slack_eps: Dict[float, float]
    n_samples: int
    holds: bool


def check_H2(fc: JumpCoefficient, mark_space: MarkSpace, op: OperatorSpec,
             n_samples: int = 200, T: float = 1.0,
             rng: Optional[np.random.Generator] = None,
             eps_ladder: Iterable[float] = H2_EPS_LADDER) -> H2Report:
    """
    Выборочная проверка (H2)(i)–(iii) и её ε-варианта с оператором (ε − L).

    Запас равен разности правой и левой частей; неравенство считается выполненным
    при запасе не меньше −1e−12 относительно правой части.
    """
    if fc.m != mark_space.m:
        raise DimensionMismatchError(f"Jump coefficient has {fc.m} marks, space has {mark_space.m}")
    check_dimensions(op, fc.eta)
    rng = rng if rng is not None else np.random.default_rng(0)
    eps_ladder = tuple(eps_ladder)

    worst = {"i": np.inf, "ii": np.inf, "iii": np.inf}
    worst_eps = {eps: np.inf for eps in eps_ladder}
    holds = True

    def record(key_store, key, rhs, lhs):
        nonlocal holds
        slack = rhs - lhs
        key_store[key] = min(key_store[key], slack)
        if slack < -1e-12 * max(1.0, abs(rhs)):
            holds = False

    for _ in range(n_samples):
        t = rng.uniform(0.0, T)
        j = int(rng.integers(mark_space.m))
        x = SpectralField(rng.standard_normal(op.K))
        y = SpectralField(rng.standard_normal(op.K))
        fx, fy = eval_f(fc, t, x, j), eval_f(fc, t, y, j)
        l1, l2, l3 = fc.l1(t)[j], fc.l2(t)[j], fc.l3(t)[j]

        record(worst, "i", l1 * norm(x - y, op, "F12_star"), norm(fx - fy, op, "F12_star"))
        record(worst, "ii", l2 * (norm(x, op, "F12_star") + 1.0), norm(fx, op, "F12_star"))
        record(worst, "iii", l3 * (norm(x, op, "L2") + 1.0), norm(fx, op, "L2"))
        for eps in eps_ladder:
            record(worst_eps, eps,
                   l1 / np.sqrt(eps) * norm(x - y, op, "F12_star_eps", eps),
                   norm(fx - fy, op, "F12_star_eps", eps))

    report = H2Report(
        slack_i=float(worst["i"]),
        slack_ii=float(worst["ii"]),
        slack_iii=float(worst["iii"]),
        slack_eps={eps: float(value) for eps, value in worst_eps.items()},
        n_samples=n_samples,
        holds=holds,
    )
    logger.debug("H2 check: %s", report)
    return report


@dataclass
class TailCertificate:
    """Результат подбора компакта K_n."""

    n: int
    certificate: float
    certificates: Dict[int, float]


def _tail_integrals(fc: JumpCoefficient, mark_space: MarkSpace, i: int, n: int,
                    times: np.ndarray, dt: float):
    """Значения l_i на хвосте K_nᶜ во всех узлах по времени и веса ν_j·dt."""
    tail = slice(n, mark_space.m)
    values = np.array([fc.bound_function(i, t)[tail] for t in times])
    return values, mark_space.weights[tail][np.newaxis, :] * dt


def tail_certificate(fc: JumpCoefficient, mark_space: MarkSpace, n: int, N: float,
                     T: float = 1.0, n_time: int = 64,
                     sigma_ladder: Optional[np.ndarray] = None) -> float:
    """
    Оценка sup_{g∈S^N} max_i ∫₀ᵀ∫_{K_nᶜ} l_i|g − 1| dν ds.

    |g − 1| ≤ g + 1 и ab ≤ (e^{σa} − 1 + l(b))/σ дают
    ∫∫ l_i + min_σ (∫∫ (e^{σl_i} − 1) dν_T + N)/σ.
    """
    sigma_ladder = np.geomspace(1.0, 1e8, 81) if sigma_ladder is None else sigma_ladder
    dt = T / n_time
    times = (np.arange(n_time) + 0.5) * dt

    certificate = 0.0
    for i in (1, 2, 3):
        values, measure = _tail_integrals(fc, mark_space, i, n, times, dt)
        if values.size == 0 or not np.any(values):
            continue
        plain = float(np.sum(values * measure))
        with np.errstate(over="ignore", invalid="ignore"):
            exp_terms = np.array([
                float(np.sum(entropy_conjugate(sigma * values) * measure)) for sigma in sigma_ladder
            ])
            young = np.min((exp_terms + N) / sigma_ladder)
        certificate = max(certificate, plain + float(young))
    return certificate


def tail_compact(mark_space: MarkSpace, fc: JumpCoefficient, N: float, eps_tail: float,
                 T: float = 1.0, max_n: Optional[int] = None, n_time: int = 64) -> TailCertificate:
    """Наименьшее n ≥ 1, при котором сертификат хвоста K_nᶜ не превосходит eps_tail."""
    if eps_tail <= 0.0:
        raise ValueError(f"eps_tail must be positive, got {eps_tail}")
    if fc.m != mark_space.m:
        raise DimensionMismatchError(f"Jump coefficient has {fc.m} marks, space has {mark_space.m}")
    max_n = mark_space.m if max_n is None else min(max_n, mark_space.m)

    certificates = {}
    for n in range(1, max_n + 1):
        certificates[n] = tail_certificate(fc, mark_space, n, N, T, n_time)
        if certificates[n] <= eps_tail:
            logger.debug("Tail compact K_%d certified: %.3e <= %.3e", n, certificates[n], eps_tail)
            return TailCertificate(n, certificates[n], certificates)

    raise InfeasibleTruncationError(
        f"No compact K_n with n <= {max_n} brings the tail below {eps_tail}; "
        f"best certificate {min(certificates.values()) if certificates else float('inf'):.3e}"
    )


def aggregate_h(i: int, fc: JumpCoefficient, mark_space: MarkSpace, g: ControlGrid,
                t_cell: int) -> float:
    """h_i(t) = Σ_j l_i(t, z_j)|g(t, j) − 1|ν_j в левом конце ячейки t_cell."""
    if g.m != mark_space.m or fc.m != mark_space.m:
        raise DimensionMismatchError("Control, jump coefficient and mark space disagree on m")
    t = t_cell * g.dt
    return float(np.sum(fc.bound_function(i, t) * np.abs(g.values[t_cell] - 1.0) * mark_space.weights))


def h_integral(i: int, fc: JumpCoefficient, mark_space: MarkSpace, g: ControlGrid) -> float:
    """∫₀ᵀ h_i(s) ds на сетке управления."""
    return sum(aggregate_h(i, fc, mark_space, g, cell) for cell in range(g.n_t)) * g.dt


def sup_h_integral(i: int, fc: JumpCoefficient, mark_space: MarkSpace,
                   budgets: Sequence[float], T: float = 1.0, n_t: int = 16,
                   n_samples: int = 50, rng: Optional[np.random.Generator] = None,
                   spread: float = 1.5) -> Dict[float, float]:
    """
    Оценка снизу C_{l_i,N} = sup_{g∈S^N} ∫₀ᵀ h_i ds по случайным управлениям.

    Для всех бюджетов используются одни и те же исходные выборки, поэтому
    оценка не убывает по N.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    raw = [ControlGrid(np.exp(spread * rng.standard_normal((n_t, mark_space.m))), T)
           for _ in range(n_samples)]
    estimates = {}
    for N in sorted(budgets):
        estimates[N] = max(h_integral(i, fc, mark_space, project_SN(g, mark_space, N)) for g in raw)
    return estimates
