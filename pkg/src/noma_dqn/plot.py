"""Deterministic, dependency-free SVG line charts for run and summary CSVs."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

KINDS = ("reward_curve", "throughput_vs_lambda", "latency_vs_lambda")

REQUIRED = {
    "reward_curve": ("episode", "step", "cumulative_reward"),
    "throughput_vs_lambda": ("param", "value", "device_type", "throughput_mbps_median"),
    "latency_vs_lambda": ("param", "value", "device_type", "latency_ms_median"),
}

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

W, H = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 80, 170, 40, 60


class SchemaError(ValueError):
    pass


Series = Tuple[str, List[Tuple[float, float]]]


def _read(path, kind) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise SchemaError(f"{path}: empty CSV, missing column {REQUIRED[kind][0]!r}")
        for col in REQUIRED[kind]:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: CSV has a header but no rows")
    return rows


def _num(path, row, col) -> float:
    try:
        return float(row[col])
    except (TypeError, ValueError):
        raise SchemaError(f"{path}: column {col!r} has non-numeric value {row[col]!r}") from None


def reward_series(path) -> Series:
    """Episode total reward placed at the global step where each episode ends."""
    rows = _read(path, "reward_curve")
    points = []
    for k, row in enumerate(rows):
        last = k + 1 == len(rows) or rows[k + 1]["episode"] != row["episode"]
        if last:
            points.append((float(k + 1), _num(path, row, "cumulative_reward")))
    label = Path(path).stem
    if label.startswith("run_"):
        label = label[4:]
    return label, points


def lambda_series(paths: Sequence, kind: str) -> List[Series]:
    metric = REQUIRED[kind][-1]
    by_type: Dict[str, List[Tuple[float, float]]] = {}
    for path in paths:
        for row in _read(path, kind):
            if row["param"] != "lam":
                continue
            by_type.setdefault(row["device_type"], []).append(
                (_num(path, row, "value"), _num(path, row, metric)))
    if not by_type:
        raise SchemaError("no rows with param == 'lam' in the given summaries")
    return [(t, sorted(pts)) for t, pts in by_type.items()]


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 10))
        v += step
    if out[-1] < hi:
        out.append(round(v, 10))
    return out


def _f(x: float) -> str:
    return f"{x:.2f}"


def _label(v: float) -> str:
    return f"{v:.6g}"


def render(series: Sequence[Series], title: str, xlabel: str, ylabel: str,
           log_y: bool = False) -> str:
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    if not xs:
        raise SchemaError("nothing to plot")
    if log_y:
        positive = [y for y in ys if y > 0]
        if not positive:
            raise SchemaError("logarithmic axis needs positive values")
        lo_e = math.floor(math.log10(min(positive)))
        hi_e = math.ceil(math.log10(max(positive)))
        if hi_e == lo_e:
            hi_e += 1
        yticks = [10.0**e for e in range(lo_e, hi_e + 1)]
        ty = lambda y: (math.log10(max(y, 10.0**lo_e)) - lo_e) / (hi_e - lo_e)
    else:
        yticks = _ticks(min(ys), max(ys))
        y0, y1 = yticks[0], yticks[-1]
        ty = lambda y: (y - y0) / (y1 - y0)
    xticks = _ticks(min(xs), max(xs))
    x0, x1 = xticks[0], xticks[-1]
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - ty(y) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="22" text-anchor="middle" font-size="15">{_esc(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in xticks:
        x = px(t)
        out.append(f'<line x1="{_f(x)}" y1="{TOP + ph}" x2="{_f(x)}" y2="{TOP + ph + 5}" '
                   'stroke="black"/>')
        out.append(f'<text x="{_f(x)}" y="{TOP + ph + 18}" text-anchor="middle">'
                   f'{_label(t)}</text>')
    for t in yticks:
        y = py(t)
        out.append(f'<line x1="{LEFT}" y1="{_f(y)}" x2="{LEFT + pw}" y2="{_f(y)}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{_f(y + 4)}" text-anchor="end">{_label(t)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{H - 18}" text-anchor="middle">'
               f'{_esc(xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.0f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.0f})">{_esc(ylabel)}</text>')
    for k, (name, pts) in enumerate(series):
        color = COLORS[k % len(COLORS)]
        coords = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
        out.append(f'<polyline class="series" data-label="{_esc(name)}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        if len(pts) <= 20:
            for x, y in pts:
                out.append(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3" fill="{color}"/>')
        ly = TOP + 10 + 20 * k
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 36}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 42}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def make_plot(paths: Sequence, kind: str) -> str:
    """Build the SVG text for ``kind``; all reading and validation happens here."""
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {KINDS}")
    if not paths:
        raise SchemaError("no input CSV given")
    if kind == "reward_curve":
        series = [reward_series(p) for p in paths]
        return render(series, "Episode reward vs. training steps", "step", "episode reward")
    series = lambda_series(paths, kind)
    if kind == "throughput_vs_lambda":
        return render(series, "Throughput vs. lambda", "lambda", "throughput (Mbps)")
    return render(series, "Latency vs. lambda", "lambda", "latency (ms)", log_y=True)


def write_plot(paths: Sequence, kind: str, out_path) -> None:
    svg = make_plot(paths, kind)
    Path(out_path).write_text(svg)
