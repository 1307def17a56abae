"""File outputs: metric and field CSVs, the run manifest, native SVG plots.

CSV files always have a header row, comma delimiter and ``\\n`` line endings.
Floats are written with ``repr`` so they round-trip exactly; missing values
(obstacle cells, absent arbitration) are empty fields.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_to_dict
from .env_grid import Action, CellKind, GridMap
from .experiment import (
    AggregateMetrics,
    Condition,
    RunConfig,
    TrainingResult,
    episodes_to_criterion,
)

MANIFEST_NAME = "run_manifest.json"

_COLORS = {
    Condition.INSTRUMENTAL_ONLY: "#7f7f7f",
    Condition.PAVLOVIAN_INSTRUMENTAL: "#1f77b4",
    Condition.INSTRUMENTAL_MODEL_BASED: "#ff7f0e",
    Condition.FULL_HYBRID: "#2ca02c",
}
_AGENT_COLORS = ("#d62728", "#1f77b4", "#9467bd", "#2ca02c", "#8c564b", "#e377c2", "#17becf", "#bcbd22")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=",", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# individual writers


def write_learning_curves(results: dict[Condition, AggregateMetrics], out: Path, window: int = 1) -> list[Path]:
    """``learning_curve.csv`` holds the across-run mean per condition (one
    column each); the standard deviation goes to ``learning_curve_std.csv``.
    """
    conds = list(results)
    n_ep = next(iter(results.values())).steps.shape[1]
    episodes = np.arange(1, n_ep + 1)
    header = ["episode"] + [c.value for c in conds]

    def table(cols):
        return [[e, *(col[k] for col in cols)] for k, e in enumerate(episodes)]

    files = [
        write_csv(out / "learning_curve.csv", header, table([results[c].mean_steps for c in conds])),
        write_csv(out / "learning_curve_std.csv", header, table([results[c].std_steps for c in conds])),
    ]
    if window > 1:
        files.append(write_csv(out / "learning_curve_smoothed.csv", header,
                               table([results[c].smoothed_mean(window) for c in conds])))
    return files


def write_summary(results: dict[Condition, AggregateMetrics], out: Path) -> Path:
    rows = []
    for c, agg in results.items():
        s = agg.steps
        tenth = max(1, s.shape[1] // 10)
        etc = episodes_to_criterion(s)
        rows.append([c.value, s.shape[0], float(etc.mean()), float(s[:, :tenth].mean()),
                     float(s[:, -tenth:].mean())])
    return write_csv(out / "summary.csv",
                     ["condition", "runs", "episodes_to_criterion_mean", "first_tenth_mean_steps",
                      "last_tenth_mean_steps"], rows)


def write_episode_metrics(result: TrainingResult, out: Path) -> Path:
    """Per-episode records of one run; ``p_mb_mean`` only when arbitration ran."""
    n = len(result.metrics[0].instrumental) if result.metrics else 0
    with_p = result.condition.model_based
    header = ["episode", "steps", "cause", "collisions"]
    header += [f"instrumental_agent{k}" for k in range(1, n + 1)]
    header += [f"pavlovian_agent{k}" for k in range(1, n + 1)]
    if with_p:
        header.append("p_mb_mean")
    rows = []
    for m in result.metrics:
        row = [m.episode, m.steps, m.cause.name.lower(), m.collisions, *m.instrumental, *m.pavlovian]
        if with_p:
            row.append(m.p_mb_mean)
        rows.append(row)
    return write_csv(out / f"episodes_{result.condition.value}.csv", header, rows)


def field_rows(field_: np.ndarray):
    h, w = field_.shape
    for y in range(h):
        for x in range(w):
            yield x, y, field_[y, x]


def write_fields(result: TrainingResult, out: Path) -> list[Path]:
    files = []
    for ep in sorted(result.snapshots):
        for k, fld in enumerate(result.snapshots[ep], start=1):
            files.append(write_csv(out / f"pav_field_ep{ep}_agent{k}.csv", ["x", "y", "v_pav"], field_rows(fld)))
    return files


def write_q_table(path, q: np.ndarray, grid: GridMap) -> Path:
    """One row per state: index, x, y and the five action values."""
    names = [a.name.lower() for a in Action]
    rows = ((s, *grid.cell_of(s), *q[s]) for s in range(q.shape[0]))
    return write_csv(path, ["state", "x", "y", *names], rows)


def write_tables(result: TrainingResult, grid: GridMap, out: Path) -> list[Path]:
    tb = result.tables
    if tb is None:
        return []
    which = [("q_mf", tb.q_mf)]
    if result.condition.model_based:
        which.append(("q_mb", tb.q_mb))
    if result.condition.pavlovian:
        which.append(("q_pav", tb.q_pav))
    files = []
    for name, arr in which:
        for k in range(arr.shape[0]):
            files.append(write_q_table(out / f"{name}_{result.condition.value}_agent{k + 1}.csv", arr[k], grid))
    return files


def write_trajectories(result: TrainingResult, out: Path) -> list[Path]:
    files = []
    for k, path in enumerate(result.trajectories, start=1):
        rows = ((t, x, y) for t, (x, y) in enumerate(path))
        files.append(write_csv(out / f"trajectory_{result.condition.value}_agent{k}.csv", ["step", "x", "y"], rows))
    return files


# ---------------------------------------------------------------------------
# SVG


def _svg(width, height, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n' + "\n".join(body) + "\n</svg>\n")


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def line_chart_svg(series: dict[str, np.ndarray], colors: dict[str, str], title="", xlabel="episode",
                   ylabel="steps", width=780, height=420) -> str:
    ml, mr, mt, mb = 60, 240, 30, 45
    pw, ph = width - ml - mr, height - mt - mb
    n = max(len(v) for v in series.values())
    ymax = max(float(np.nanmax(v)) for v in series.values())
    yticks = _nice_ticks(0.0, ymax)
    ytop = max(yticks[-1], ymax) or 1.0
    xticks = _nice_ticks(1, max(n, 2))

    def px(i):  # i is a 1-based episode
        return ml + pw * (i - 1) / max(n - 1, 1)

    def py(v):
        return mt + ph * (1 - v / ytop)

    body = [f'<text x="{ml + pw / 2}" y="18" text-anchor="middle" font-size="13">{title}</text>',
            f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in yticks:
        body.append(f'<line x1="{ml - 4}" y1="{py(t):.2f}" x2="{ml}" y2="{py(t):.2f}" stroke="black"/>')
        body.append(f'<text x="{ml - 7}" y="{py(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    for t in xticks:
        body.append(f'<line x1="{px(t):.2f}" y1="{mt + ph}" x2="{px(t):.2f}" y2="{mt + ph + 4}" stroke="black"/>')
        body.append(f'<text x="{px(t):.2f}" y="{mt + ph + 16}" text-anchor="middle">{t:g}</text>')
    body.append(f'<text x="{ml + pw / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>')
    body.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
                f'transform="rotate(-90 14 {mt + ph / 2})">{ylabel}</text>')
    for j, (name, ys) in enumerate(series.items()):
        pts = " ".join(f"{px(i + 1):.2f},{py(float(v)):.2f}" for i, v in enumerate(ys) if not math.isnan(v))
        c = colors.get(name, "black")
        body.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.2"/>')
        ly = mt + 12 + 18 * j
        body.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 32}" y2="{ly}" stroke="{c}" stroke-width="2"/>')
        body.append(f'<text x="{ml + pw + 37}" y="{ly + 4}">{name}</text>')
    return _svg(width, height, body)


def _diverging(v, vmax):
    """White at 0, red for positive, blue for negative."""
    t = 0.0 if vmax <= 0 else max(-1.0, min(1.0, v / vmax))
    if t >= 0:
        r, g, b = 255, round(255 * (1 - 0.85 * t)), round(255 * (1 - 0.85 * t))
    else:
        r, g, b = round(255 * (1 + 0.85 * t)), round(255 * (1 + 0.85 * t)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def field_heatmap_svg(field_: np.ndarray, grid: GridMap | None = None, title="", cell=16) -> str:
    h, w = field_.shape
    top = 26
    finite = field_[np.isfinite(field_)]
    vmax = float(np.abs(finite).max()) if finite.size else 0.0
    body = [f'<text x="4" y="16">{title} (|v| max {vmax:.3g})</text>']
    for y in range(h):
        for x in range(w):
            v = field_[y, x]
            fill = "#404040" if math.isnan(v) else _diverging(float(v), vmax)
            # row 0 of the picture is the highest y
            body.append(f'<rect x="{x * cell}" y="{top + (h - 1 - y) * cell}" width="{cell}" height="{cell}" '
                        f'fill="{fill}"/>')
    if grid is not None:
        for y in range(h):
            for x in range(w):
                k = grid.cells[y, x]
                if k in (CellKind.GATE, CellKind.GPS_DENIED):
                    stroke = "#2ca02c" if k == CellKind.GATE else "#000000"
                    body.append(f'<rect x="{x * cell + 1}" y="{top + (h - 1 - y) * cell + 1}" width="{cell - 2}" '
                                f'height="{cell - 2}" fill="none" stroke="{stroke}" stroke-width="1.5"/>')
    return _svg(w * cell, top + h * cell, body)


def trajectories_svg(grid: GridMap, paths, title="", cell=16) -> str:
    h, w = grid.height, grid.width
    top = 26
    fills = {CellKind.FREE: "#ffffff", CellKind.OBSTACLE: "#404040", CellKind.GATE: "#b8e6b8",
             CellKind.GPS_DENIED: "#f4c7c3"}
    body = [f'<text x="4" y="16">{title}</text>']
    for y in range(h):
        for x in range(w):
            body.append(f'<rect x="{x * cell}" y="{top + (h - 1 - y) * cell}" width="{cell}" height="{cell}" '
                        f'fill="{fills[CellKind(int(grid.cells[y, x]))]}" stroke="#e0e0e0" stroke-width="0.5"/>')

    def centre(c):
        return c[0] * cell + cell / 2, top + (h - 1 - c[1]) * cell + cell / 2

    tx, ty = centre(grid.target)
    body.append(f'<circle cx="{tx}" cy="{ty}" r="{cell / 3}" fill="black"/>')
    for k, path in enumerate(paths):
        col = _AGENT_COLORS[k % len(_AGENT_COLORS)]
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in map(centre, path))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="2" stroke-opacity="0.8"/>')
        sx, sy = centre(path[0])
        body.append(f'<rect x="{sx - 4}" y="{sy - 4}" width="8" height="8" fill="{col}"/>')
    return _svg(w * cell, top + h * cell, body)


def _write_text(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


# ---------------------------------------------------------------------------
# manifest and the top-level emitter


def versions() -> dict[str, str]:
    out = {"pavlovian_rl": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def representative(agg: AggregateMetrics, seed: int) -> TrainingResult:
    """The run with ``seed`` (the base seed) supplies per-run files."""
    for r in agg.runs:
        if r.seed == seed:
            return r
    raise ValueError(f"no run with seed {seed} among {agg.seeds}")


def field_condition(config: RunConfig, conditions) -> Condition:
    """Field snapshots come from the configured condition when it was run."""
    conditions = list(conditions)
    return config.condition if config.condition in conditions else conditions[-1]


def emit_run_files(runs: dict[Condition, TrainingResult], config: RunConfig, grid: GridMap, out: Path,
                   svg: bool = True) -> list[Path]:
    """Per-run outputs (fields, trajectories, episode records) from one seed."""
    files = []
    fc = field_condition(config, runs)
    files += write_fields(runs[fc], out)
    for r in runs.values():
        files += write_trajectories(r, out)
        files += write_tables(r, grid, out)
        files.append(write_episode_metrics(r, out))
    if svg:
        for ep in sorted(runs[fc].snapshots):
            for k, fld in enumerate(runs[fc].snapshots[ep], start=1):
                files.append(_write_text(out / f"pav_field_ep{ep}_agent{k}.svg",
                                         field_heatmap_svg(fld, grid, f"v_pav, {fc.value}, episode {ep}, agent {k}")))
        for c, r in runs.items():
            files.append(_write_text(out / f"trajectories_{c.value}.svg",
                                     trajectories_svg(grid, r.trajectories, f"greedy trajectories, {c.value}")))
    return files


def write_manifest(out: Path, command: str, config: RunConfig, conditions, seeds, files, grid_text: str) -> Path:
    doc = {
        "command": command,
        "config": config_to_dict(config),
        "conditions": [Condition(c).value for c in conditions],
        "seeds": [int(s) for s in seeds],
        "representative_seed": config.base_seed,
        "map_sha256": hashlib.sha256(grid_text.encode("utf-8")).hexdigest(),
        "versions": versions(),
        "files": {p.name: _sha256(p) for p in sorted(files, key=lambda p: p.name)},
    }
    path = out / MANIFEST_NAME
    _write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def emit_outputs(results: dict[Condition, AggregateMetrics], config: RunConfig, output_dir, grid: GridMap,
                 grid_text: str = "", command: str = "run", svg: bool = True) -> list[Path]:
    """Write every output for a finished experiment; returns the paths written.

    ``results`` maps each condition to its Monte Carlo aggregate, whose runs
    must include the ``config.base_seed`` run.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = write_learning_curves(results, out, config.smoothing_window)
    files.append(write_summary(results, out))
    runs = {c: representative(agg, config.base_seed) for c, agg in results.items()}
    files += emit_run_files(runs, config, grid, out, svg)
    if svg:
        series = {c.value: results[c].smoothed_mean(config.smoothing_window) for c in results}
        files.append(_write_text(out / "learning_curve.svg", line_chart_svg(
            series, {c.value: _COLORS[c] for c in results},
            title=f"mean steps per episode over {config.monte_carlo_runs} runs")))
    seeds = next(iter(results.values())).seeds
    files.append(write_manifest(out, command, config, list(results), seeds, files, grid_text))
    return files
