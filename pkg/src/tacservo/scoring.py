"""Trace scoring and results tables.

Scores a servo trajectory against contour ground truth: position MAE is the
mean deviation of the tip's standoff distance from the intended standoff,
angle MAE the mean absolute misalignment between sensor yaw and the local
contour tangent.  Also renders the dependency-free SVG overlay of a trace
and the plain-text / CSV results tables (pose accuracy and trace accuracy).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .contours import Contour
from .geometry import wrap_deg
from .posenet import EvalReport
from .servo import Trajectory

TRAJECTORY_COLUMNS = (
    "step",
    "cmd_x",
    "cmd_y",
    "cmd_z",
    "cmd_theta",
    "pred_offset",
    "pred_angle",
    "err_offset",
    "err_angle",
    "true_dist",
    "true_angle_dev",
    "status",
)


@dataclass(frozen=True)
class TraceReport:
    shape: str
    task: str
    family: str
    position_mae: float
    angle_mae: float
    completed: bool
    steps: int

    def row(self) -> str:
        flag = "yes" if self.completed else "NO"
        return (
            f"{self.family:<8} {self.task:<8} {self.shape:<14} "
            f"{self.position_mae:8.3f} {self.angle_mae:9.2f} {flag:>9} {self.steps:6d}"
        )


def score_trace(
    traj: Trajectory, contour: Contour, shape: str = "", family: str = ""
) -> TraceReport:
    """Score a trace; steps flagged lost are excluded from the MAE."""
    if not traj.entries:
        raise ValueError("empty trajectory")
    pos_devs: list[float] = []
    ang_devs: list[float] = []
    for e in traj.entries:
        if e.status == "lost":
            continue
        pos_devs.append(abs(abs(e.true_query.signed_distance) - traj.standoff))
        ang_devs.append(abs(wrap_deg(e.command.theta - e.true_query.tangent_angle)))
    if not pos_devs:  # lost on the very first step
        pos_devs = [abs(abs(traj.entries[0].true_query.signed_distance) - traj.standoff)]
        ang_devs = [0.0]
    return TraceReport(
        shape=shape or contour.kind,
        task=traj.task,
        family=family,
        position_mae=sum(pos_devs) / len(pos_devs),
        angle_mae=sum(ang_devs) / len(ang_devs),
        completed=traj.completed,
        steps=len(traj.entries),
    )


# --------------------------------------------------------------------------
# trajectory CSV

def _f(v: float) -> str:
    return repr(float(v))


def trajectory_csv(traj: Trajectory) -> str:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for e in traj.entries:
        c = e.command
        lines.append(
            ",".join(
                [
                    str(e.step),
                    _f(c.x),
                    _f(c.y),
                    _f(c.z),
                    _f(c.theta),
                    _f(e.predicted.offset),
                    _f(e.predicted.angle),
                    _f(e.error.d_offset),
                    _f(e.error.d_angle),
                    _f(e.true_query.signed_distance),
                    _f(wrap_deg(c.theta - e.true_query.tangent_angle)),
                    e.status,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def rescore_trajectory_csv(
    text: str, contour: Contour, standoff: float, task: str = "edge",
    shape: str = "", family: str = "",
) -> TraceReport:
    """Re-score a saved trajectory from its commanded poses (zero-TCP runs)."""
    lines = text.strip().splitlines()
    if lines[0] != ",".join(TRAJECTORY_COLUMNS):
        raise ValueError("unexpected trajectory CSV columns")
    pos_devs: list[float] = []
    ang_devs: list[float] = []
    completed = False
    for line in lines[1:]:
        parts = line.split(",")
        status = parts[11]
        if status == "closed":
            completed = True
        if status == "lost":
            continue
        x, y, theta = float(parts[1]), float(parts[2]), float(parts[4])
        q = contour.query((x, y))
        pos_devs.append(abs(abs(q.signed_distance) - standoff))
        ang_devs.append(abs(wrap_deg(theta - q.tangent_angle)))
    n = max(len(pos_devs), 1)
    return TraceReport(
        shape=shape or contour.kind,
        task=task,
        family=family,
        position_mae=sum(pos_devs) / n,
        angle_mae=sum(ang_devs) / n,
        completed=completed,
        steps=len(lines) - 1,
    )


# --------------------------------------------------------------------------
# SVG overlay (no rendering dependency)

def trace_svg(traj: Trajectory, contour: Contour, margin: float = 8.0) -> str:
    """Contour polyline + commanded path polyline + start marker."""
    n = 720
    contour_pts = [contour.point_at(contour.perimeter * i / n) for i in range(n + 1)]
    path_pts = [(e.command.x, e.command.y) for e in traj.entries]
    xs = [p[0] for p in contour_pts + path_pts]
    ys = [p[1] for p in contour_pts + path_pts]
    x0, x1 = min(xs) - margin, max(xs) + margin
    y0, y1 = min(ys) - margin, max(ys) + margin
    scale = 4.0  # px per mm

    def sx(x: float) -> float:
        return (x - x0) * scale

    def sy(y: float) -> float:
        return (y1 - y) * scale  # flip: SVG y grows downward

    def polyline(pts, color: str, width: float) -> str:
        coords = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in pts)
        return (
            f'<polyline fill="none" stroke="{color}" stroke-width="{width}" '
            f'points="{coords}"/>'
        )

    w = (x1 - x0) * scale
    h = (y1 - y0) * scale
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
        f'viewBox="0 0 {w:.2f} {h:.2f}">',
        '<rect width="100%" height="100%" fill="white"/>',
        polyline(contour_pts, "#888888", 1.0),
    ]
    if path_pts:
        parts.append(polyline(path_pts, "#c0392b", 1.5))
        parts.append(
            f'<circle cx="{sx(path_pts[0][0]):.2f}" cy="{sy(path_pts[0][1]):.2f}" '
            'r="5" fill="none" stroke="#27ae60" stroke-width="2"/>'
        )
    parts.append(
        f'<text x="6" y="{h - 6:.0f}" font-family="monospace" font-size="12">'
        f"{traj.task} / {contour.kind} / {traj.status}</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts)


def write_trace_svg(traj: Trajectory, contour: Contour, path: str | Path) -> None:
    Path(path).write_text(trace_svg(traj, contour), encoding="utf-8")


# --------------------------------------------------------------------------
# results tables

_SHAPE_ORDER = {"circle": 0, "square": 1, "circular_wave": 2}
_TASK_ORDER = {"edge": 0, "surface": 1}


def _sort_traces(reports: list[TraceReport]) -> list[TraceReport]:
    return sorted(
        reports,
        key=lambda r: (r.family, _TASK_ORDER.get(r.task, 9), _SHAPE_ORDER.get(r.shape, 9)),
    )


def summarize(
    trace_reports: list[TraceReport],
    eval_reports: list[tuple[str, str, EvalReport]] | None = None,
) -> tuple[str, str, str]:
    """(plain text, pose accuracy CSV, trace accuracy CSV).

    eval_reports entries are (family, task, report); rows are ordered
    sensor-major, stimulus-minor.
    """
    text_lines: list[str] = []
    pose_csv_lines = ["family,stimulus,output,mae,range_lo,range_hi,mae_fraction"]
    if eval_reports:
        text_lines.append("Pose prediction accuracy (MAE / range)")
        text_lines.append(f"{'sensor':<8} {'stimulus':<8} {'output':<20} {'MAE / range'}")
        for family, task, rep in sorted(eval_reports, key=lambda r: (r[0], _TASK_ORDER.get(r[1], 9))):
            for name, mae, (lo, hi) in zip(rep.names, rep.mae, rep.ranges):
                frac = mae / (hi - lo)
                text_lines.append(
                    f"{family:<8} {task:<8} {name:<20} {mae:.3f} / {hi - lo:g}  ({100 * frac:.2f}%)"
                )
                pose_csv_lines.append(
                    f"{family},{task},{name},{_f(mae)},{_f(lo)},{_f(hi)},{_f(frac)}"
                )
        text_lines.append("")

    trace_csv_lines = ["family,stimulus,shape,position_mae_mm,angle_mae_deg,completed,steps"]
    text_lines.append("Trace accuracy")
    text_lines.append(
        f"{'sensor':<8} {'stimulus':<8} {'shape':<14} {'pos MAE':>8} {'ang MAE':>9} "
        f"{'completed':>9} {'steps':>6}"
    )
    for r in _sort_traces(trace_reports):
        text_lines.append(r.row())
        trace_csv_lines.append(
            f"{r.family},{r.task},{r.shape},{_f(r.position_mae)},{_f(r.angle_mae)},"
            f"{str(r.completed).lower()},{r.steps}"
        )
    return (
        "\n".join(text_lines) + "\n",
        "\n".join(pose_csv_lines) + "\n",
        "\n".join(trace_csv_lines) + "\n",
    )


def angle_deviation(yaw: float, tangent_angle: float) -> float:
    """Absolute yaw-to-tangent misalignment, wrapped into [0, 180)."""
    return abs(wrap_deg(yaw - tangent_angle))
