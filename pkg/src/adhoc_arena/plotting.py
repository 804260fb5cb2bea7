"""Figure panels from an aggregate CSV.

Every panel is written three ways: a whitespace ``.dat`` table, a gnuplot
script that reads it, and a PNG rendered with matplotlib. Cells missing
from the aggregate become gaps (``?`` in the table, NaN in the PNG).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import AGGREGATE_KEYS

log = logging.getLogger(__name__)

POLICY_ORDER = ["forp", "lbr", "mmbcr"]
POLICY_LABELS = {"forp": "FORP", "lbr": "LBR", "mmbcr": "MMBCR"}
POLICY_STYLE = {"forp": ("tab:blue", "o"), "lbr": ("tab:orange", "s"), "mmbcr": ("tab:green", "^")}

METRIC_PANELS = [
    ("route_transitions", "# Route Transitions", "route transitions per session"),
    ("hop_count", "Hop Count per Path", "hops"),
    ("delay_s", "Delay per Packet", "delay (s)"),
    ("energy_per_node_j", "Energy Consumed per Node", "energy (J)"),
    ("energy_stddev_j", "Node Fairness", "std. dev. of energy (J)"),
    ("first_failure_s", "Time of 1st Node Failure", "time (s)"),
]
FAILURE_COLUMNS = ["rel2_s", "rel3_s", "rel4_s", "rel5_s"]
MISSING = "?"

plt.rcParams.update({
    "figure.figsize": (4.8, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "axes.titlesize": 10,
})


class EmptyDataError(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    n_nodes: int
    n_sessions: int
    power_control: bool

    @property
    def stem(self) -> str:
        return f"n{self.n_nodes}_s{self.n_sessions}_pc-{'on' if self.power_control else 'off'}"

    @property
    def title(self) -> str:
        pc = "with" if self.power_control else "without"
        return f"{self.n_nodes} nodes, {self.n_sessions} sessions, {pc} power control"


@dataclass
class PlotResult:
    panels: list[Path]
    warnings: list[str]


def _num(text):
    if text is None or text == "":
        return None
    return float(text)


def load_aggregate(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    if not rows:
        raise EmptyDataError(f"{path} has no data rows")
    missing = [k for k in AGGREGATE_KEYS if k not in fields]
    if missing:
        raise EmptyDataError(f"{path} lacks columns {', '.join(missing)}")
    return rows


def _fmt(v) -> str:
    return MISSING if v is None else repr(v)


def _write_dat(path: Path, header: list[str], table: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in table:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _write_gp(path: Path, dat: Path, title: str, xlabel: str, ylabel: str, policies: list[str], xtics=None) -> None:
    series = ", \\\n     ".join(
        f"'{dat.name}' using 1:{k + 2} with linespoints title '{POLICY_LABELS[p]}'"
        for k, p in enumerate(policies)
    )
    lines = [
        "set terminal svg size 640,480",
        f"set output '{path.with_suffix('.svg').name}'",
        'set datafile missing "?"',
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key top left",
        "set grid",
    ]
    if xtics:
        lines.append("set xtics (" + ", ".join(f"'{label}' {x}" for x, label in xtics) + ")")
    lines.append(f"plot {series}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _render_png(path: Path, xs, columns: dict, title: str, xlabel: str, ylabel: str, xticks=None) -> None:
    fig, ax = plt.subplots()
    for p, ys in columns.items():
        color, marker = POLICY_STYLE.get(p, (None, "o"))
        ax.plot(xs, [math.nan if y is None else y for y in ys], marker=marker, color=color, label=POLICY_LABELS.get(p, p))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if xticks:
        ax.set_xticks([x for x, _ in xticks], [label for _, label in xticks])
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _panel(out: Path, stem: str, xs, columns: dict, title, xlabel, ylabel, xticks=None) -> Path:
    dat = out / f"{stem}.dat"
    gp = out / f"{stem}.gp"
    policies = list(columns)
    _write_dat(dat, ["x"] + policies, [[x] + [columns[p][k] for p in policies] for k, x in enumerate(xs)])
    _write_gp(gp, dat, title, xlabel, ylabel, policies, xticks)
    _render_png(out / f"{stem}.png", xs, columns, title, xlabel, ylabel, xticks)
    return gp


def plot_aggregate(csv_path, out_dir) -> PlotResult:
    """Six metric-vs-v_max panels and one failure-timeline panel per v_max, per condition."""
    rows = load_aggregate(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = {}
    for r in rows:
        cond = Condition(int(float(r["n_nodes"])), int(float(r["n_sessions"])), r["power_control"] == "true")
        cells[(cond, r["policy"], float(r["v_max"]))] = r
    conditions = sorted({c for c, _, _ in cells}, key=lambda c: (c.n_nodes, c.n_sessions, c.power_control))
    present = {p for _, p, _ in cells}
    policies = [p for p in POLICY_ORDER if p in present] + sorted(present - set(POLICY_ORDER))
    speeds = sorted({v for _, _, v in cells})
    panels, warnings = [], []

    def warn(msg):
        log.warning(msg)
        warnings.append(msg)

    for cond in conditions:
        gaps = [(p, v) for p in policies for v in speeds if (cond, p, v) not in cells]
        if gaps:
            listed = ", ".join(f"{p}@{v:g}" for p, v in gaps)
            warn(f"{cond.stem}: missing cells {listed}; panels drawn with gaps")
        for metric, label, ylabel in METRIC_PANELS:
            columns = {}
            for p in policies:
                ys = []
                for v in speeds:
                    r = cells.get((cond, p, v))
                    ys.append(None if r is None else _num(r.get(metric)))
                columns[p] = ys
            title = f"{label} ({cond.title})"
            panels.append(_panel(out, f"{cond.stem}_{metric}", speeds, columns, title, "v_max (m/s)", ylabel))
        ticks = [(k, f"{k + 2}") for k in range(len(FAILURE_COLUMNS))]
        for v in speeds:
            columns = {}
            for p in policies:
                r = cells.get((cond, p, v))
                columns[p] = [None if r is None else _num(r.get(c)) for c in FAILURE_COLUMNS]
            title = f"Failures since the first, v_max = {v:g} m/s ({cond.title})"
            panels.append(_panel(out, f"{cond.stem}_failures_v{v:g}", list(range(len(FAILURE_COLUMNS))), columns,
                                 title, "node failure", "time since 1st failure (s)", ticks))
    return PlotResult(panels, warnings)
