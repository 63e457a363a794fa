"""
Запись и чтение результатов: CSV траекторий, управлений, потоков скачков
и таблиц экспериментов, JSON-сводки и SVG-графики.

Числа пишутся в формате %.17g, поэтому одинаковые результаты дают
побайтно одинаковые файлы.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  pylint: disable=wrong-import-position
import numpy as np  # noqa: E402  pylint: disable=wrong-import-position

from control import ControlGrid  # noqa: E402  pylint: disable=wrong-import-position

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "pme"


def format_value(value) -> str:
    """Представление значения в CSV."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return "" if value is None else str(value)


def write_table_csv(path, rows: Iterable[Mapping[str, object]], fieldnames: Sequence[str]) -> Path:
    """Пишет строки таблицы с заданным порядком столбцов."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: format_value(row.get(name)) for name in fieldnames})
    logger.debug("Wrote %s", path)
    return path


def write_trajectory_csv(path, trajectory) -> Path:
    """Строка на узел: время и K коэффициентов."""
    names = ["time"] + [f"c{k}" for k in range(1, trajectory.K + 1)]
    rows = [dict(zip(names, [t, *state])) for t, state in zip(trajectory.times, trajectory.states)]
    return write_table_csv(path, rows, names)


def write_control_csv(path, g: ControlGrid) -> Path:
    """Строка на ячейку по времени: левый конец и значения g по меткам."""
    names = ["t_start"] + [f"g{j}" for j in range(1, g.m + 1)]
    rows = [dict(zip(names, [i * g.dt, *g.values[i]])) for i in range(g.n_t)]
    return write_table_csv(path, rows, names)


def read_control_csv(path, T: float) -> ControlGrid:
    """Читает управление, записанное write_control_csv."""
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        columns = [name for name in reader.fieldnames or [] if name.startswith("g")]
        values = [[float(row[name]) for name in columns] for row in reader]
    return ControlGrid(np.array(values, dtype=float), T)


def write_stream_csv(path, stream) -> Path:
    """События потока: (t, mark)."""
    rows = [{"t": t, "mark": j} for t, j in stream.events]
    return write_table_csv(path, rows, ["t", "mark"])


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def write_json(path, obj) -> Path:
    """JSON с упорядоченными ключами."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def plot_svg(path, series: Mapping[str, Tuple[Sequence[float], Sequence[float]]],
             title: str, xlabel: str, ylabel: str) -> Path:
    """Ломаные по сериям {подпись: (x, y)} в SVG без даты в метаданных."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(np.asarray(x, dtype=float), np.asarray(y, dtype=float), marker="o", label=label)
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    if series:
        ax.legend()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
