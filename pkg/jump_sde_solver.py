"""
Моделирование уравнения с компенсированным пуассоновским шумом.

Пуассоновская случайная мера с интенсивностью ε⁻¹ν_T, управляемая мера
(прореживание доминирующей меры), решатель с сеткой, адаптированной к
скачкам, и эксперимент, проверяющий близость управляемого решения
к скелету при ε → 0.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from control import ControlGrid, in_bounded_class, in_SN
from errors import InvalidControlError, MarkIndexError, PreconditionViolationError
from mark_space import JumpCoefficient, MarkSpace
from nonlinearity import PsiSpec
from schemas import SolverConfig
from skeleton_solver import (
    PsiIntegral,
    StepIntegrator,
    Trajectory,
    align_control,
    check_problem,
    solve_skeleton,
    uniform_times,
)
from spectral_space import OperatorSpec, SpectralField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RngSpec:
    """Зерно и номер потока; одинаковые (seed, stream, path) дают одинаковые выборки."""

    seed: int
    stream: int = 0
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")

    def generator(self) -> np.random.Generator:
        """Независимый генератор для этого потока."""
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(self.stream,) + self.path)
        )

    def spawn(self, index: int) -> "RngSpec":
        """Дочерний поток, например для отдельной траектории Монте-Карло."""
        return replace(self, path=self.path + (int(index),))


@dataclass(frozen=True, eq=False)
class JumpStream:
    """Упорядоченные по времени события (t_i, j_i), t_i ∈ (0, T]; при заданном m все j_i < m."""

    times: np.ndarray
    marks: np.ndarray
    T: float
    eps: Optional[float] = None
    n_bound: Optional[float] = None
    m: Optional[int] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        marks = np.array(self.marks, dtype=np.int64).reshape(-1)
        if times.size != marks.size:
            raise ValueError(f"Got {times.size} event times and {marks.size} marks")
        if times.size:
            if times[0] <= 0.0 or times[-1] > self.T:
                raise ValueError(f"Event times must lie in (0, {self.T}]")
            if np.any(np.diff(times) <= 0.0):
                raise ValueError("Event times must be strictly increasing")
            if np.any(marks < 0):
                raise ValueError("Mark indices must be nonnegative")
            if self.m is not None and int(marks.max()) >= self.m:
                raise MarkIndexError(f"Mark index {int(marks.max())} out of range for {self.m} marks")
        times.setflags(write=False)
        marks.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "marks", marks)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def events(self) -> List[Tuple[float, int]]:
        """События списком пар (t, j)."""
        return [(float(t), int(j)) for t, j in zip(self.times, self.marks)]

    def counts(self, m: int) -> np.ndarray:
        """Число событий по каждой метке."""
        if len(self) and int(self.marks.max()) >= m:
            raise MarkIndexError(f"Stream has mark {int(self.marks.max())}, expected < {m}")
        return np.bincount(self.marks, minlength=m)

    def restricted(self, keep: np.ndarray) -> "JumpStream":
        """Только события на метках j с keep[j] = True."""
        mask = np.asarray(keep, dtype=bool)[self.marks] if len(self) else np.zeros(0, dtype=bool)
        return JumpStream(self.times[mask], self.marks[mask], self.T, self.eps, self.n_bound, self.m)


def _poisson_events(rates: np.ndarray, T: float, rng: np.random.Generator):
    """Независимые однородные пуассоновские процессы с интенсивностями rates на (0, T]."""
    counts = rng.poisson(rates * T)
    total = int(np.sum(counts))
    times = T * (1.0 - rng.random(total))
    marks = np.repeat(np.arange(rates.size), counts)
    order = np.argsort(times, kind="stable")
    return times[order], marks[order]


def sample_prm(mark_space: MarkSpace, T: float, rate_scale: float,
               rng: np.random.Generator) -> JumpStream:
    """
    Пуассоновская случайная мера с интенсивностью rate_scale·ν_T.

    rate_scale = ε⁻¹; нулевой rate_scale даёт пустой поток.
    """
    if rate_scale < 0.0:
        raise ValueError(f"Rate scale must be nonnegative, got {rate_scale}")
    if T <= 0.0:
        raise ValueError(f"Horizon must be positive, got T={T}")
    times, marks = _poisson_events(rate_scale * mark_space.weights, T, rng)
    eps = 1.0 / rate_scale if rate_scale > 0.0 else None
    return JumpStream(times, marks, T, eps, m=mark_space.m)


def class_bound(phi: ControlGrid, compact_size: Optional[int] = None) -> float:
    """Наименьшее n ≥ 1 с n ≥ φ ≥ 1/n на K_n; inf, если φ обращается в 0 на K_n."""
    inside = phi.values[:, :phi.m if compact_size is None else compact_size]
    if not inside.size:
        return 1.0
    low = float(inside.min())
    return max(1.0, float(inside.max()), 1.0 / low) if low > 0.0 else float("inf")


def sample_controlled_prm(mark_space: MarkSpace, T: float, eps: float, phi: ControlGrid,
                          n_bound: float, rng: np.random.Generator,
                          compact_size: Optional[int] = None) -> JumpStream:
    """
    Управляемая мера N^{ε⁻¹φ} прореживанием.

    Доминирующая мера имеет интенсивность ε⁻¹·n_bound·ν на K_n и ε⁻¹ν вне K_n;
    событие (t, z) на K_n принимается с вероятностью φ(t, z)/n_bound.

    Raises:
        PreconditionViolationError: φ вне [1/n_bound, n_bound] на K_n или φ ≠ 1 вне K_n
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0.0 < n_bound < np.inf:
        raise ValueError(f"n_bound must be positive and finite, got {n_bound}")
    if phi.m != mark_space.m:
        raise InvalidControlError(f"Control has {phi.m} marks, mark space has {mark_space.m}")
    size = mark_space.m if compact_size is None else min(max(int(compact_size), 0), mark_space.m)

    if not in_bounded_class(phi, n_bound, size):
        raise PreconditionViolationError(
            f"Control must lie in [1/n, n] on K_{size} and equal 1 off it, n={n_bound}, "
            f"got range [{float(phi.values.min())}, {float(phi.values.max())}]"
        )

    bounds = np.where(np.arange(mark_space.m) < size, n_bound, 1.0)
    times, marks = _poisson_events(bounds * mark_space.weights / eps, T, rng)

    cells = np.minimum((times / phi.dt).astype(np.int64), phi.n_t - 1)
    acceptance = phi.values[cells, marks] / bounds[marks]
    accepted = rng.random(times.size) < acceptance
    logger.debug("Thinning kept %d of %d dominating events", int(accepted.sum()), times.size)
    return JumpStream(times[accepted], marks[accepted], T, eps, n_bound, mark_space.m)


@dataclass
class JumpRecord:
    """Применённый скачок: момент, метка, X(t⁻) и приращение ε·f(t, X(t⁻), z)."""

    time: float
    mark: int
    pre_state: np.ndarray
    increment: np.ndarray


def solve_spde(op: OperatorSpec, psi: PsiSpec, fc: JumpCoefficient, mark_space: MarkSpace,
               eps: float, x0: SpectralField, cfg: SolverConfig,
               rng: Optional[np.random.Generator] = None, phi: Optional[ControlGrid] = None,
               stream: Optional[JumpStream] = None, n_bound: Optional[float] = None,
               compact_size: Optional[int] = None) -> Trajectory:
    """
    Траектория X^ε (или управляемой X^{φ}) на сетке, дополненной моментами скачков.

    Между событиями делается детерминированный шаг dX = LΨ(X)dt − ∫f ν(dz)dt;
    в момент события X ← X(t⁻) + ε·f(t, X(t⁻), z). Управление φ влияет
    только на интенсивность скачков.

    Args:
        rng: генератор для выборки потока, если stream не задан
        phi: управление (по умолчанию φ ≡ 1)
        stream: готовый поток событий

    Returns:
        Trajectory: состояния в узлах равномерной сетки; в meta["jumps"]
        список JumpRecord, в meta["stream"] использованный поток
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    check_problem(op, fc, mark_space, x0)

    if stream is None:
        rng = rng if rng is not None else np.random.default_rng()
        if phi is None:
            stream = sample_prm(mark_space, cfg.T, 1.0 / eps, rng)
        else:
            phi = align_control(phi, mark_space, cfg)
            bound = n_bound if n_bound is not None else class_bound(phi, compact_size)
            if not np.isfinite(bound):
                raise PreconditionViolationError(
                    "Control vanishes on the compact, no bounded class contains it"
                )
            stream = sample_controlled_prm(mark_space, cfg.T, eps, phi, bound, rng, compact_size)
    elif len(stream) and int(stream.marks.max()) >= mark_space.m:
        raise MarkIndexError(
            f"Stream has mark {int(stream.marks.max())}, mark space has {mark_space.m} marks"
        )
    active = stream.restricted(fc.sigma > 0.0)

    integrator = StepIntegrator(op, psi, cfg)
    n_t, dt = cfg.n_t, cfg.dt
    times = uniform_times(cfg.T, n_t)
    states = np.empty((n_t + 1, op.K))
    states[0] = x0.coeffs
    running = PsiIntegral(integrator, x0.coeffs, n_t, cfg.track_psi_integral)

    drift_fn = None
    if not fc.is_zero:
        compensator = float(np.sum(fc.sigma * mark_space.weights))
        drift_fn = lambda t, x: -float(fc.beta(t)) * compensator * fc.affine(x)

    jumps: List[JumpRecord] = []
    event_times, event_marks = active.times, active.marks
    pointer = 0
    for n in range(n_t):
        x = states[n]
        right = times[n + 1]
        if pointer >= len(event_times) or event_times[pointer] > right:
            states[n + 1] = integrator.step(x, times[n], dt, drift_fn)
            running.add(n, dt, states[n + 1])
            continue

        t = times[n]
        while pointer < len(event_times) and event_times[pointer] <= right:
            t_event, j = float(event_times[pointer]), int(event_marks[pointer])
            if t_event > t:
                x = integrator.step(x, t, t_event - t, drift_fn)
            increment = eps * (fc.sigma[j] * float(fc.beta(t_event)) * fc.affine(x))
            jumps.append(JumpRecord(t_event, j, x.copy(), increment))
            x = x + increment
            t = t_event
            pointer += 1
        if right > t:
            x = integrator.step(x, t, right - t, drift_fn)
        states[n + 1] = x
        running.add(n, dt, states[n + 1])

    meta = {
        "scheme": cfg.scheme,
        "halvings": integrator.halvings,
        "max_fp_iterations": integrator.max_iterations,
        "eps": eps,
        "jumps": jumps,
        "stream": stream,
    }
    if running.enabled:
        meta["psi_integral"] = running.values
    return Trajectory(times, states, meta)


def run_paths(task: Callable[[int], float], n_paths: int, workers: int = 1) -> np.ndarray:
    """Выполняет task(i) для i = 0..n_paths−1; результаты в порядке индексов."""
    if workers <= 1 or n_paths <= 1:
        return np.array([task(i) for i in range(n_paths)], dtype=float)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return np.array(list(executor.map(task, range(n_paths))), dtype=float)


@dataclass
class ConditionBReport:
    """Таблица ε → оценка E sup_t ‖X^{φ_ε} − Y^{φ_ε}‖²_{F*}."""

    rows: List[Dict[str, float]] = field(default_factory=list)
    slope: Optional[float] = None
    intercept: Optional[float] = None
    metric: str = "sup_t F12_star squared (dominates the Skorohod distance)"


def condition_b_experiment(op: OperatorSpec, psi: PsiSpec, fc: JumpCoefficient,
                           mark_space: MarkSpace,
                           phi_family: Union[ControlGrid, Callable[[float], ControlGrid]],
                           eps_list: Sequence[float], trials: int, cfg: SolverConfig,
                           rng: "RngSpec", x0: Optional[SpectralField] = None,
                           workers: int = 1, n_bound: Optional[float] = None,
                           compact_size: Optional[int] = None,
                           budget: Optional[float] = None) -> ConditionBReport:
    """
    Монте-Карло оценка E sup_t ‖X^{φ_ε}(t) − Y^{φ_ε}(t)‖²_{F*} по лестнице ε.

    Y: скелет с g = φ_ε, X: управляемое решение с тем же φ_ε. Траектория i
    при ε с номером e использует поток rng.spawn(e).spawn(i).

    Args:
        n_bound: n ограниченного класса; по умолчанию наименьшее подходящее для φ_ε
        budget: N; если задан, каждое φ_ε обязано лежать в S^N

    Raises:
        PreconditionViolationError: φ_ε вне ограниченного класса или вне S^N
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    x0 = x0 if x0 is not None else SpectralField.zeros(op.K)
    family = phi_family if callable(phi_family) else (lambda _eps: phi_family)

    report = ConditionBReport()
    for index, eps in enumerate(eps_list):
        phi = align_control(family(eps), mark_space, cfg)
        bound = n_bound if n_bound is not None else class_bound(phi, compact_size)
        if not np.isfinite(bound) or not in_bounded_class(phi, bound, compact_size):
            raise PreconditionViolationError(
                f"Control for eps={eps} is outside the bounded class n={bound}"
            )
        if budget is not None and not in_SN(phi, mark_space, budget):
            raise PreconditionViolationError(
                f"Control for eps={eps} is outside S^N with N={budget}"
            )
        skeleton = solve_skeleton(op, psi, fc, mark_space, phi, x0, cfg)
        eps_stream = rng.spawn(index)

        def one_path(i, eps=eps, phi=phi, bound=bound, skeleton=skeleton, eps_stream=eps_stream):
            path = solve_spde(op, psi, fc, mark_space, eps, x0, cfg,
                              rng=eps_stream.spawn(i).generator(), phi=phi,
                              n_bound=bound, compact_size=compact_size)
            return path.sup_distance(skeleton, op) ** 2

        samples = run_paths(one_path, trials, workers)
        stderr = float(np.std(samples, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
        report.rows.append({
            "eps": float(eps),
            "estimate": float(np.mean(samples)),
            "stderr": stderr,
            "trials": trials,
        })
        logger.info("Condition (b) eps=%.4g: estimate=%.6g, stderr=%.3g",
                    eps, report.rows[-1]["estimate"], stderr)

    valid = [row for row in report.rows if row["estimate"] > 0.0]
    if len(valid) >= 2:
        fit = stats.linregress(np.log([row["eps"] for row in valid]),
                               np.log([row["estimate"] for row in valid]))
        report.slope, report.intercept = float(fit.slope), float(fit.intercept)
    return report
