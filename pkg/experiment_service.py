"""
Модуль запуска расчётов по конфигурации.

Содержит класс ExperimentService, который строит задачу из RunConfig,
выполняет расчёты skeleton, sample, rate, ldp и verify и записывает
результаты в выходную директорию.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

import settings
from control import ControlGrid, q_cost
from errors import InsufficientDataError
from jump_sde_solver import RngSpec, condition_b_experiment, solve_spde
from logging_config import clean_old_logs
from rate_estimator import EventSpec, ldp_slope_compare, mc_rare_event, minimize_rate
from results_io import (
    plot_svg,
    to_jsonable,
    write_control_csv,
    write_json,
    write_stream_csv,
    write_table_csv,
    write_trajectory_csv,
)
from schemas import RunConfig
from skeleton_solver import Problem, apriori_report, solve_skeleton
from verification import CHECK_FIELDS, run_verification

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("skeleton", "sample", "rate", "ldp", "verify")
MC_FIELDS = ["eps", "p_hat", "eps_log_p", "stderr", "hits", "trials", "valid"]
CONDITION_B_FIELDS = ["eps", "estimate", "stderr", "trials"]
RATE_FIELDS = ["q_star", "gap", "feasible", "qualifier", "starts", "evaluations"]


def _result(outputs: Dict[str, Path], summary: Dict[str, object]) -> Dict[str, object]:
    return {"outputs": {k: str(v) for k, v in outputs.items()}, "summary": to_jsonable(summary)}


class ExperimentService:
    """
    Сервис запуска расчётов.

    Каждый метод run_* принимает проверенную конфигурацию, выполняет
    расчёт и возвращает словарь {"outputs": {имя: путь}, "summary": {...}}.
    Одинаковые зерно и конфигурация дают побайтно одинаковые CSV.
    """

    def __init__(self, output_dir: str = settings.OUTPUT_DIR, workers: int = settings.MC_WORKERS):
        self.output_dir = Path(output_dir)
        self.workers = workers

    def build_problem(self, config: RunConfig) -> Problem:
        """Строит численную задачу из конфигурации."""
        op = config.operator.build()
        problem = Problem(
            op=op,
            psi=config.psi.build(),
            fc=config.marks.build_jump_coefficient(op.K),
            mark_space=config.marks.build_mark_space(),
            x0=config.build_x0(op.K),
            cfg=config.solver,
        )
        logger.info("Problem: operator=%s, psi=%s, marks=%d, n_t=%d", op.describe(),
                    problem.psi.kind, problem.mark_space.m, problem.cfg.n_t)
        return problem

    def build_control(self, config: RunConfig, problem: Problem) -> ControlGrid:
        """Управление из конфигурации на сетке решателя."""
        return config.control.build(problem.cfg.n_t, problem.mark_space.m, problem.cfg.T)

    def resolve_seed(self, config: RunConfig, seed: Optional[int] = None) -> int:
        """Зерно: аргумент, затем конфигурация, затем DEFAULT_SEED."""
        if seed is not None:
            return seed
        if config.seed is not None:
            return config.seed
        return settings.DEFAULT_SEED

    def _out_dir(self, subcommand: str, out: Optional[str]) -> Path:
        path = Path(out) if out else self.output_dir / subcommand
        path.mkdir(parents=True, exist_ok=True)
        return path

    def run_skeleton(self, config: RunConfig, out: Optional[str] = None) -> Dict[str, object]:
        """Скелет X^g, нормы по времени и априорная оценка."""
        problem = self.build_problem(config)
        g = self.build_control(config, problem)
        p = problem
        traj = solve_skeleton(p.op, p.psi, p.fc, p.mark_space, g, p.x0, p.cfg)
        report = apriori_report(traj, p.x0, config.experiment.N, p.fc, p.mark_space, g)

        out_dir = self._out_dir("skeleton", out)
        l2, fstar = traj.norms(p.op, "L2"), traj.norms(p.op, "F12_star")
        rows = [{"time": t, "L2_norm": a, "Fstar_norm": b} for t, a, b in zip(traj.times, l2, fstar)]
        outputs = {
            "results": write_table_csv(out_dir / "results.csv", rows, ["time", "L2_norm", "Fstar_norm"]),
            "trajectory": write_trajectory_csv(out_dir / "trajectory.csv", traj),
            "control": write_control_csv(out_dir / "control.csv", g),
            "plot": plot_svg(out_dir / "plot.svg", {"L2": (traj.times, l2), "F*": (traj.times, fstar)},
                             "Skeleton trajectory norms", "t", "norm"),
        }
        summary = {
            "operator": p.op.describe(),
            "q_cost": q_cost(g, p.mark_space),
            "terminal": traj.terminal.to_list(),
            "halvings": traj.meta["halvings"],
            "apriori": vars(report),
        }
        outputs["summary"] = write_json(out_dir / "summary.json", summary)
        logger.info("Skeleton run written to %s", out_dir)
        return _result(outputs, summary)

    def run_sample(self, config: RunConfig, seed: Optional[int] = None, out: Optional[str] = None,
                   trials: Optional[int] = None,
                   eps_list: Optional[List[float]] = None) -> Dict[str, object]:
        """
        Одна траектория X^ε с потоком скачков; при trials > 1 ещё и таблица
        E sup‖X^{φ_ε} − Y^{φ_ε}‖² по лестнице ε.
        """
        problem = self.build_problem(config)
        p = problem
        rng = RngSpec(self.resolve_seed(config, seed))
        eps_list = eps_list or config.experiment.eps_list
        phi = self.build_control(config, problem)
        controlled = not np.all(phi.values == 1.0)

        traj = solve_spde(p.op, p.psi, p.fc, p.mark_space, eps_list[0], p.x0, p.cfg,
                          rng=rng.spawn(0).generator(), phi=phi if controlled else None)
        out_dir = self._out_dir("sample", out)
        jump_rows = [{"t": j.time, "mark": j.mark, "increment_l2": float(np.linalg.norm(j.increment))}
                     for j in traj.meta["jumps"]]
        outputs = {
            "stream": write_stream_csv(out_dir / "stream.csv", traj.meta["stream"]),
            "trajectory": write_trajectory_csv(out_dir / "trajectory.csv", traj),
            "jumps": write_table_csv(out_dir / "jumps.csv", jump_rows, ["t", "mark", "increment_l2"]),
        }
        summary: Dict[str, object] = {
            "eps": eps_list[0],
            "events": len(traj.meta["stream"]),
            "applied_jumps": len(jump_rows),
            "terminal": traj.terminal.to_list(),
        }

        if trials is not None and trials > 1:
            report = condition_b_experiment(p.op, p.psi, p.fc, p.mark_space, phi, eps_list, trials,
                                            p.cfg, rng.spawn(1), x0=p.x0, workers=self.workers)
            outputs["results"] = write_table_csv(out_dir / "results.csv", report.rows,
                                                 CONDITION_B_FIELDS)
            outputs["plot"] = plot_svg(
                out_dir / "plot.svg",
                {"E sup |X-Y|^2": ([r["eps"] for r in report.rows], [r["estimate"] for r in report.rows])},
                "Controlled SPDE vs skeleton", "eps", "estimate",
            )
            summary["condition_b"] = {"slope": report.slope, "metric": report.metric}

        outputs["summary"] = write_json(out_dir / "summary.json", summary)
        logger.info("Sample run written to %s", out_dir)
        return _result(outputs, summary)

    def _rate(self, config: RunConfig, problem: Problem, rng: RngSpec):
        event = EventSpec.from_config(config.event)
        return event, minimize_rate(event, problem, config.optimizer, rng=rng.generator())

    def _write_rate(self, out_dir: Path, rate, table_name: str = "rate.csv") -> Dict[str, Path]:
        row = {
            "q_star": rate.q_star,
            "gap": rate.gap,
            "feasible": rate.feasible,
            "qualifier": rate.qualifier,
            "starts": rate.trace.get("starts", 0),
            "evaluations": rate.trace.get("evaluations", 0),
        }
        return {
            "rate": write_table_csv(out_dir / table_name, [row], RATE_FIELDS),
            "g_star": write_control_csv(out_dir / "g_star.csv", rate.g_star),
        }

    def run_rate(self, config: RunConfig, seed: Optional[int] = None,
                 out: Optional[str] = None) -> Dict[str, object]:
        """Верхняя оценка I на событии из конфигурации."""
        problem = self.build_problem(config)
        _, rate = self._rate(config, problem, RngSpec(self.resolve_seed(config, seed)))
        out_dir = self._out_dir("rate", out)
        outputs = self._write_rate(out_dir, rate, "results.csv")
        outputs["results"] = outputs.pop("rate")
        summary = {"q_star": rate.q_star, "gap": rate.gap, "feasible": rate.feasible,
                   "qualifier": rate.qualifier, "trace": rate.trace}
        outputs["summary"] = write_json(out_dir / "summary.json", summary)
        logger.info("Rate run written to %s: q*=%s", out_dir, rate.q_star)
        return _result(outputs, summary)

    def run_ldp(self, config: RunConfig, seed: Optional[int] = None, out: Optional[str] = None,
                trials: Optional[int] = None,
                eps_list: Optional[List[float]] = None) -> Dict[str, object]:
        """Оценка I, вероятности события по ε и сравнение ε log P̂ с −I."""
        problem = self.build_problem(config)
        rng = RngSpec(self.resolve_seed(config, seed))
        event, rate = self._rate(config, problem, rng.spawn(0))
        eps_list = eps_list or config.experiment.eps_list
        trials = trials or config.experiment.trials
        table = mc_rare_event(event, problem, eps_list, trials, rng.spawn(1), self.workers)

        out_dir = self._out_dir("ldp", out)
        outputs = self._write_rate(out_dir, rate)
        outputs["results"] = write_table_csv(out_dir / "results.csv", table.rows, MC_FIELDS)

        summary: Dict[str, object] = {"q_star": rate.q_star, "feasible": rate.feasible}
        try:
            report = ldp_slope_compare(rate, table)
            summary["ldp"] = vars(report)
        except InsufficientDataError as e:
            logger.warning("LDP comparison skipped: %s", e)
            summary["ldp"] = {"error": str(e)}

        valid = table.valid_rows()
        series = {"eps log P": ([r["eps"] for r in valid], [r["eps_log_p"] for r in valid])}
        if rate.feasible and valid:
            series["-q*"] = ([0.0, max(r["eps"] for r in valid)], [-rate.q_star, -rate.q_star])
        outputs["plot"] = plot_svg(out_dir / "plot.svg", series, "Rare event slope", "eps", "eps log P")
        outputs["summary"] = write_json(out_dir / "summary.json", summary)
        logger.info("LDP run written to %s", out_dir)
        return _result(outputs, summary)

    def run_verify(self, seed: Optional[int] = None, out: Optional[str] = None,
                   trials: Optional[int] = None, scale: str = "quick",
                   only: Optional[List[str]] = None) -> Dict[str, object]:
        """Приёмочные проверки с таблицей результатов."""
        seed = seed if seed is not None else settings.DEFAULT_SEED
        results = run_verification(seed, scale=scale, trials=trials, only=only, workers=self.workers)
        out_dir = self._out_dir("verify", out)
        outputs = {
            "results": write_table_csv(out_dir / "results.csv", [r.as_row() for r in results],
                                       CHECK_FIELDS),
        }
        summary = {
            "passed": sum(r.passed for r in results),
            "failed": [r.name for r in results if not r.passed],
            "total": len(results),
        }
        outputs["summary"] = write_json(out_dir / "summary.json", summary)
        return _result(outputs, summary)

    def run(self, subcommand: str, config: Optional[RunConfig] = None, seed: Optional[int] = None,
            out: Optional[str] = None, trials: Optional[int] = None,
            eps_list: Optional[List[float]] = None) -> Dict[str, object]:
        """Запускает подкоманду по имени."""
        config = config or RunConfig()
        if subcommand == "skeleton":
            return self.run_skeleton(config, out)
        if subcommand == "sample":
            return self.run_sample(config, seed, out, trials, eps_list)
        if subcommand == "rate":
            return self.run_rate(config, seed, out)
        if subcommand == "ldp":
            return self.run_ldp(config, seed, out, trials, eps_list)
        if subcommand == "verify":
            return self.run_verify(seed, out, trials)
        raise ValueError(f"Unknown subcommand: {subcommand}")

    def cleanup_old_logs(self):
        """Очищает старые файлы логов"""
        logger.info("Starting log cleanup")
        try:
            clean_old_logs(log_dir=settings.LOG_DIR, days_to_keep=30)
            logger.info("Log cleanup completed successfully")
        except OSError as e:
            logger.error("Error during log cleanup: %s", e)


experiment_service = ExperimentService()
