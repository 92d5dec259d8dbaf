"""Result persistence: per-run CSVs, summary.json, and static SVG plots.

The CSV layout is one row per slicing window:
window,kappa_0..,action_0..,reward,lat_0..,distilled,distance,epsilon
Floats are written with repr() so parsing an emitted file reproduces the
in-memory values exactly. SVGs are self-contained documents with no
external references.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict
from typing import Sequence

import numpy as np

from .errors import SliceSimError
from .harness import RecordTable, RunSummary, aggregate

SUMMARY_SCHEMA_VERSION = 1

_MODE_COLORS = {
    "forecast_aided": "#d62728",
    "forecast_state": "#1f77b4",
    "plain_drl": "#7f7f7f",
    "pure_forecast": "#2ca02c",
}
_SIGMA_PALETTE = ["#08306b", "#2171b5", "#6baed6", "#74c476", "#fd8d3c", "#e6550d", "#a63603"]


def records_csv_name(scenario: str, seed: int) -> str:
    return f"records_{scenario}_{seed}.csv"


def write_records_csv(path: str, table: RecordTable) -> None:
    s = table.n_slices
    header = (
        ["window"]
        + [f"kappa_{i}" for i in range(s)]
        + [f"action_{i}" for i in range(s)]
        + ["reward"]
        + [f"lat_{i}" for i in range(s)]
        + ["distilled", "distance", "epsilon"]
    )
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for i in range(table.count):
                cells = [str(int(table.window[i]))]
                cells += [repr(float(v)) for v in table.kappa[i]]
                cells += [str(int(v)) for v in table.action[i]]
                cells.append(repr(float(table.reward[i])))
                cells += [repr(float(v)) for v in table.latencies[i]]
                cells.append(str(int(table.distilled[i])))
                cells.append(repr(float(table.distance[i])))
                cells.append(repr(float(table.epsilon[i])))
                fh.write(",".join(cells) + "\n")
    except OSError as exc:
        raise SliceSimError(f"cannot write records CSV {path}: {exc}") from exc


def read_records_csv(path: str) -> RecordTable:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as exc:
        raise SliceSimError(f"cannot read records CSV {path}: {exc}") from exc
    if not lines:
        raise SliceSimError(f"{path}: empty records CSV")
    header = lines[0].split(",")
    n_slices = sum(1 for h in header if h.startswith("kappa_"))
    table = RecordTable(n_slices, capacity=max(0, len(lines) - 1))
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split(",")
        pos = 0
        window = int(parts[pos]); pos += 1
        kappa = [float(x) for x in parts[pos : pos + n_slices]]; pos += n_slices
        action = [int(x) for x in parts[pos : pos + n_slices]]; pos += n_slices
        reward = float(parts[pos]); pos += 1
        lat = [float(x) for x in parts[pos : pos + n_slices]]; pos += n_slices
        distilled = bool(int(parts[pos])); pos += 1
        distance = float(parts[pos]); pos += 1
        epsilon = float(parts[pos])
        table.append(window, kappa, action, reward, lat, distilled, distance, epsilon)
    return table


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_summary_json(path: str, summaries: Sequence[RunSummary],
                       csv_names: dict[tuple[str, int], str]) -> None:
    runs = []
    for s in summaries:
        d = asdict(s)
        d["records_csv"] = csv_names.get((s.scenario, s.seed))
        runs.append(_jsonable(d))
    cells = {}
    for s in summaries:
        key = f"{s.mode}|noise={s.noise_std:g}"
        cells[key] = cells.get(key, 0) + 1
    payload = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "runs": runs,
        "aggregate": _jsonable(aggregate(list(summaries))),
        "denominators": {"total_runs": len(summaries), "runs_per_cell": cells},
    }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise SliceSimError(f"cannot write summary {path}: {exc}") from exc


# ---- SVG plotting ---------------------------------------------------------

_W, _H = 860, 430
_ML, _MR, _MT, _MB = 62, 180, 34, 46


def _axes(title: str, xlabel: str, ylabel: str, x_max: float,
          y_min: float, y_max: float) -> tuple[list[str], callable, callable]:
    px_w = _W - _ML - _MR
    px_h = _H - _MT - _MB

    def sx(x: float) -> float:
        return _ML + px_w * (x / x_max if x_max else 0.0)

    def sy(y: float) -> float:
        span = (y_max - y_min) or 1.0
        return _MT + px_h * (1.0 - (y - y_min) / span)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_ML}" y="18" font-size="14" font-weight="bold">{title}</text>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{_ML + px_w / 2:.0f}" y="{_H - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{_MT + px_h / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {_MT + px_h / 2:.0f})">{ylabel}</text>',
    ]
    for i in range(6):
        yv = y_min + (y_max - y_min) * i / 5
        parts.append(
            f'<line x1="{_ML - 4}" y1="{sy(yv):.1f}" x2="{_ML}" y2="{sy(yv):.1f}" stroke="black"/>'
            f'<text x="{_ML - 8}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:g}</text>'
        )
        xv = x_max * i / 5
        parts.append(
            f'<line x1="{sx(xv):.1f}" y1="{_H - _MB}" x2="{sx(xv):.1f}" y2="{_H - _MB + 4}" stroke="black"/>'
            f'<text x="{sx(xv):.1f}" y="{_H - _MB + 18}" text-anchor="middle">{xv:g}</text>'
        )
    return parts, sx, sy


def line_plot_svg(series: Sequence[tuple[str, np.ndarray, np.ndarray, str]],
                  title: str, xlabel: str, ylabel: str) -> str:
    x_max = max((float(x[-1]) for _, x, _, _ in series if len(x)), default=1.0)
    parts, sx, sy = _axes(title, xlabel, ylabel, x_max, 0.0, 1.0)
    for j, (label, xs, ys, color) in enumerate(series):
        pts = " ".join(f"{sx(float(x)):.1f},{sy(min(max(float(y), 0.0), 1.0)):.1f}"
                       for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = _MT + 16 + 18 * j
        parts.append(
            f'<line x1="{_W - _MR + 8}" y1="{ly - 4}" x2="{_W - _MR + 30}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="3"/>'
            f'<text x="{_W - _MR + 36}" y="{ly}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def bar_chart_svg(group_labels: Sequence[str],
                  metrics: Sequence[tuple[str, Sequence[float], str]],
                  title: str) -> str:
    y_max = max((max(vals) for _, vals, _ in metrics if len(vals)), default=1.0)
    y_max = max(y_max, 1e-9)
    parts, sx, sy = _axes(title, "", "value", float(len(group_labels)), 0.0, y_max * 1.05)
    n_groups = len(group_labels)
    n_metrics = len(metrics)
    for gi, label in enumerate(group_labels):
        for mi, (_, vals, color) in enumerate(metrics):
            v = float(vals[gi])
            x0 = sx(gi + 0.15 + 0.7 * mi / n_metrics)
            x1 = sx(gi + 0.15 + 0.7 * (mi + 0.85) / n_metrics)
            y0 = sy(max(v, 0.0))
            parts.append(
                f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{x1 - x0:.1f}" '
                f'height="{sy(0) - y0:.1f}" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{sx(gi + 0.5):.1f}" y="{_H - _MB + 32}" text-anchor="middle">{label}</text>'
        )
    for mi, (mlabel, _, color) in enumerate(metrics):
        ly = _MT + 16 + 18 * mi
        parts.append(
            f'<rect x="{_W - _MR + 8}" y="{ly - 11}" width="14" height="11" fill="{color}"/>'
            f'<text x="{_W - _MR + 28}" y="{ly}">{mlabel}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def _smoothed(rewards: np.ndarray, smooth: int = 100, max_points: int = 400):
    n = rewards.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros(0)
    w = min(smooth, n)
    csum = np.concatenate([[0.0], np.cumsum(rewards)])
    means = (csum[w:] - csum[:-w]) / w
    xs = np.arange(w - 1, n)
    stride = max(1, means.shape[0] // max_points)
    return xs[::stride], means[::stride]


def _mean_curve(tables: Sequence[RecordTable]) -> np.ndarray:
    n = min(t.count for t in tables)
    if n == 0:
        return np.zeros(0)
    return np.mean([t.column("reward")[:n] for t in tables], axis=0)


def emit_plots(results, out_dir: str) -> list[str]:
    """Reward-vs-window SVGs per pattern (by mode and by noise) plus aggregate bars."""
    groups: dict[tuple[str, str, float], list[RecordTable]] = {}
    patterns: dict[str, set] = {}
    for summary, table in results:
        if summary.error is not None or table.count == 0:
            continue
        key = (summary.pattern, summary.mode, summary.noise_std)
        groups.setdefault(key, []).append(table)
        patterns.setdefault(summary.pattern, set()).add((summary.mode, summary.noise_std))

    written = []
    for pattern, combos in sorted(patterns.items()):
        by_std: dict[float, list[str]] = {}
        for mode, std in combos:
            by_std.setdefault(std, []).append(mode)
        # mode comparison at the noise level covering the most modes
        std_ref = sorted(by_std, key=lambda s: (-len(by_std[s]), s))[0]
        series = []
        for mode in sorted(by_std[std_ref]):
            xs, ys = _smoothed(_mean_curve(groups[(pattern, mode, std_ref)]))
            series.append((mode, xs, ys, _MODE_COLORS.get(mode, "#000")))
        path = os.path.join(out_dir, f"convergence_{pattern}.svg")
        _write_text(path, line_plot_svg(
            series, f"{pattern}: reward by mode (noise std {std_ref:g})",
            "slicing window", "reward (sliding mean)"))
        written.append(path)

        fa_stds = sorted(std for (p, m, std) in groups if p == pattern and m == "forecast_aided")
        if len(fa_stds) > 1:
            series = []
            for i, std in enumerate(fa_stds):
                xs, ys = _smoothed(_mean_curve(groups[(pattern, "forecast_aided", std)]))
                color = _SIGMA_PALETTE[i % len(_SIGMA_PALETTE)]
                series.append((f"std={std:g}", xs, ys, color))
            path = os.path.join(out_dir, f"error_robustness_{pattern}.svg")
            _write_text(path, line_plot_svg(
                series, f"{pattern}: forecast-aided reward by forecast error",
                "slicing window", "reward (sliding mean)"))
            written.append(path)

    summaries = [s for s, _ in results]
    agg = aggregate(summaries)
    if agg["cells"]:
        modes = sorted({row["mode"] for row in agg["cells"]})
        def per_mode(metric):
            vals = []
            for m in modes:
                rows = [r for r in agg["cells"] if r["mode"] == m]
                if metric == "converged_fraction":
                    vals.append(sum(r["converged_count"] for r in rows)
                                / max(1, sum(r["run_count"] for r in rows)))
                else:
                    vals.append(float(np.mean([r[metric] for r in rows])))
            return vals
        rate = per_mode("mean_convergence_rate")
        rate_scale = max(max(rate), 1e-12)
        path = os.path.join(out_dir, "aggregate_metrics.svg")
        _write_text(path, bar_chart_svg(
            modes,
            [("mean initial reward", per_mode("mean_initial_reward"), "#1f77b4"),
             (f"convergence rate / {rate_scale:.2g}", [v / rate_scale for v in rate], "#d62728"),
             ("converged fraction", per_mode("converged_fraction"), "#2ca02c")],
            "Aggregate convergence metrics by mode"))
        written.append(path)
    return written


def _write_text(path: str, content: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
    except OSError as exc:
        raise SliceSimError(f"cannot write {path}: {exc}") from exc


def emit_outputs(results, out_dir: str) -> list[str]:
    """Write per-run CSVs, summary.json and the SVG plots; returns the paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise SliceSimError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []
    csv_names: dict[tuple[str, int], str] = {}
    for summary, table in results:
        if summary.error is not None or table.count == 0:
            continue
        name = records_csv_name(summary.scenario, summary.seed)
        path = os.path.join(out_dir, name)
        write_records_csv(path, table)
        csv_names[(summary.scenario, summary.seed)] = name
        written.append(path)
    summary_path = os.path.join(out_dir, "summary.json")
    write_summary_json(summary_path, [s for s, _ in results], csv_names)
    written.append(summary_path)
    written.extend(emit_plots(results, out_dir))
    return written


def plots_from_dir(out_dir: str) -> list[str]:
    """Re-emit the SVGs from a directory's summary.json and CSVs."""
    summary_path = os.path.join(out_dir, "summary.json")
    try:
        with open(summary_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise SliceSimError(f"cannot read {summary_path}: {exc}") from exc
    results = []
    for run in payload.get("runs", []):
        if run.get("error") is not None or not run.get("records_csv"):
            continue
        table = read_records_csv(os.path.join(out_dir, run["records_csv"]))
        summary = RunSummary(**{k: v for k, v in run.items() if k != "records_csv"})
        results.append((summary, table))
    return emit_plots(results, out_dir)
