"""Run artifacts: trajectory CSV, summary text and a native SVG path plot."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .analysis import EnvelopeReport
from .controller import ClosedLoopLog
from .ocp import Ellipse

CSV_COLUMNS = ("t", "x", "y", "theta", "v", "omega", "F", "T", "V", "iteration", "ell")


def _num(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_csv(log: ClosedLoopLog) -> str:
    """CSV text of a closed-loop log, one row per implemented state.

    Input and iteration columns are empty on the final row, which has no
    applied input.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    it = log.iteration_of_time()
    for t, x in enumerate(log.states):
        row = [str(t), *(_num(c) for c in x)]
        if t < log.n_steps:
            k = int(it[t])
            row += [_num(log.inputs[t, 0]), _num(log.inputs[t, 1]), _num(log.v_values[t]), str(k), str(log.flexible_steps[k])]
        else:
            row += ["", "", _num(log.v_values[t]), "", ""]
        w.writerow(row)
    return buf.getvalue()


def write_csv(log: ClosedLoopLog, path) -> Path:
    path = Path(path)
    path.write_text(trajectory_csv(log), encoding="utf-8", newline="")
    return path


def summary_text(log: ClosedLoopLog, env_report: EnvelopeReport, *, name: str = "run", extra: dict = None) -> str:
    norms = np.linalg.norm(log.states, axis=1)
    lines = [
        f"name: {name}",
        f"plant: {log.plant}",
        f"implemented_steps: {log.n_steps}",
        f"iterations: {len(log.iteration_marks)}",
        f"truncated: {str(log.truncated).lower()}",
        f"initial_norm: {_num(norms[0])}",
        f"final_norm: {_num(norms[-1])}",
        f"min_norm: {_num(norms.min())}",
        f"flexible_steps: {' '.join(str(s) for s in log.flexible_steps)}",
        f"solver_sources: {' '.join(log.solver_sources)}",
        f"envelope_max_ratio: {_num(env_report.max_ratio)}",
        f"envelope_worst_time: {env_report.worst_time}",
        f"envelope_passed: {str(env_report.passed).lower()}",
    ]
    for key, val in (extra or {}).items():
        lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG


def ellipse_outline(e: Ellipse, n: int = 96) -> np.ndarray:
    """Points on ``{p : (p - c)^T Q (p - c) = 1}``."""
    w, V = np.linalg.eigh(e.Q)
    s = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    circle = np.stack([np.cos(s) / np.sqrt(w[0]), np.sin(s) / np.sqrt(w[1])])
    return (V @ circle).T + e.p


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def trajectory_svg(
    states,
    obstacles=(),
    *,
    arrow_every: int = 5,
    size: int = 600,
    margin: float = 1.0,
    title: str = "",
) -> str:
    """Plot of the planar path with obstacle outlines and heading arrows."""
    X = np.asarray(states, dtype=float)
    outlines = [ellipse_outline(e) for e in obstacles]
    pts = np.vstack([X[:, :2], np.zeros((1, 2)), *outlines]) if outlines else np.vstack([X[:, :2], np.zeros((1, 2))])
    lo = pts.min(axis=0) - margin
    hi = pts.max(axis=0) + margin
    span = float(max(hi - lo))
    scale = (size - 40) / span

    def to_px(p):
        p = np.atleast_2d(p)
        return np.stack([20 + (p[:, 0] - lo[0]) * scale, size - 20 - (p[:, 1] - lo[1]) * scale], axis=1)

    def poly(P):
        return " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in P)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        out.append(f'<title>{title}</title>')
    ox, oy = to_px([0.0, 0.0])[0]
    out.append(f'<line x1="{_fmt(ox - 6)}" y1="{_fmt(oy)}" x2="{_fmt(ox + 6)}" y2="{_fmt(oy)}" stroke="gray"/>')
    out.append(f'<line x1="{_fmt(ox)}" y1="{_fmt(oy - 6)}" x2="{_fmt(ox)}" y2="{_fmt(oy + 6)}" stroke="gray"/>')
    for P in outlines:
        out.append(f'<polygon class="obstacle" points="{poly(to_px(P))}" fill="none" stroke="firebrick" stroke-width="1.5"/>')
    out.append(f'<polyline class="path" points="{poly(to_px(X[:, :2]))}" fill="none" stroke="navy" stroke-width="1.5"/>')
    arrow_len = 0.04 * (size - 40)
    for i in range(0, len(X), max(1, int(arrow_every))):
        (x0, y0), th = to_px(X[i, :2])[0], X[i, 2]
        dx, dy = arrow_len * math.cos(th), -arrow_len * math.sin(th)
        x1, y1 = x0 + dx, y0 + dy
        # two barbs at +-150 degrees from the shaft
        barbs = []
        for a in (2.618, -2.618):
            c, s = math.cos(a), math.sin(a)
            barbs.append((x1 + 0.35 * (c * dx - s * dy), y1 + 0.35 * (s * dx + c * dy)))
        out.append(
            f'<path class="heading" d="M{_fmt(x0)},{_fmt(y0)} L{_fmt(x1)},{_fmt(y1)} '
            f'M{_fmt(barbs[0][0])},{_fmt(barbs[0][1])} L{_fmt(x1)},{_fmt(y1)} L{_fmt(barbs[1][0])},{_fmt(barbs[1][1])}" '
            'fill="none" stroke="darkorange" stroke-width="1"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(states, obstacles, path, **kw) -> Path:
    path = Path(path)
    path.write_text(trajectory_svg(states, obstacles, **kw), encoding="utf-8")
    return path
