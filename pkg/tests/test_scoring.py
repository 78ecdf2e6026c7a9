import pytest

from tacservo.contours import Circle, Square
from tacservo.geometry import FeaturePose, Pose2p5, PoseError
from tacservo.posenet import EvalReport
from tacservo.scoring import (
    TRAJECTORY_COLUMNS,
    TraceReport,
    rescore_trajectory_csv,
    score_trace,
    summarize,
    trace_svg,
    trajectory_csv,
)
from tacservo.servo import Trajectory, TrajectoryEntry


def synthetic_trajectory(contour, n=60, radial_offset=0.0, yaw_error=0.0, task="edge"):
    """Trajectory whose poses ride the contour at a fixed standoff.

    Arc-table points are projected onto the exact boundary so a zero-offset
    trajectory scores exactly zero.
    """
    entries = []
    for i in range(n):
        s = contour.perimeter * i / n
        q = contour.query(contour.point_at(s))
        p = q.nearest_point
        x = p[0] + radial_offset * q.normal[0]
        y = p[1] + radial_offset * q.normal[1]
        pose = Pose2p5(x, y, 0.0, q.tangent_angle + yaw_error)
        q2 = contour.query((x, y))
        entries.append(
            TrajectoryEntry(
                step=i,
                command=pose,
                predicted=FeaturePose(),
                error=PoseError(),
                true_query=q2,
                true_feature=FeaturePose(offset=q2.signed_distance),
                status="ok",
            )
        )
    traj = Trajectory(task=task, reference=FeaturePose(), standoff=0.0, entries=entries)
    traj.status = "closed"
    traj.entries[-1].status = "closed"
    return traj


class TestScoreTrace:
    def test_on_contour_zero_mae(self):
        c = Circle(50.0)
        r = score_trace(synthetic_trajectory(c), c, shape="circle", family="test")
        assert r.position_mae == pytest.approx(0.0, abs=1e-9)
        assert r.completed

    def test_uniform_offset_one_mm(self):
        c = Circle(50.0)
        r = score_trace(synthetic_trajectory(c, radial_offset=1.0), c)
        assert r.position_mae == pytest.approx(1.0, abs=1e-9)

    def test_angle_mae_zero_for_tangent_yaw(self):
        c = Circle(50.0)
        r = score_trace(synthetic_trajectory(c), c)
        assert r.angle_mae < 0.1

    def test_angle_mae_constant_yaw_error(self):
        c = Circle(50.0)
        r = score_trace(synthetic_trajectory(c, yaw_error=7.0), c)
        assert r.angle_mae == pytest.approx(7.0, abs=1e-6)

    def test_translation_invariance(self):
        c0 = Circle(50.0)
        c1 = Circle(50.0, center=(200.0, -40.0))
        r0 = score_trace(synthetic_trajectory(c0, radial_offset=0.7), c0)
        r1 = score_trace(synthetic_trajectory(c1, radial_offset=0.7), c1)
        assert r0.position_mae == pytest.approx(r1.position_mae, abs=1e-9)
        assert r0.angle_mae == pytest.approx(r1.angle_mae, abs=1e-6)

    def test_lost_steps_excluded(self):
        c = Circle(50.0)
        traj = synthetic_trajectory(c, n=20)
        traj.entries[-1].status = "lost"
        traj.entries[-1].command = Pose2p5(90.0, 0.0, 0.0, 0.0)
        traj.entries[-1].true_query = c.query((90.0, 0.0))
        traj.status = "lost"
        r = score_trace(traj, c)
        assert r.position_mae < 1e-9
        assert not r.completed

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            score_trace(Trajectory(task="edge", reference=FeaturePose(), standoff=0.0), Circle(50.0))


class TestTrajectoryCsv:
    def test_columns_and_rescore(self, tmp_path):
        c = Square(100.0, 2.0)
        traj = synthetic_trajectory(c, n=40, radial_offset=0.5)
        text = trajectory_csv(traj)
        header = text.splitlines()[0]
        assert header == ",".join(TRAJECTORY_COLUMNS)
        direct = score_trace(traj, c)
        rescored = rescore_trajectory_csv(text, c, standoff=0.0)
        assert rescored.position_mae == pytest.approx(direct.position_mae, abs=1e-9)
        assert rescored.angle_mae == pytest.approx(direct.angle_mae, abs=1e-9)
        assert rescored.completed == direct.completed

    def test_rescore_is_pure(self):
        c = Circle(50.0)
        traj = synthetic_trajectory(c, n=30, radial_offset=0.3)
        text = trajectory_csv(traj)
        a = rescore_trajectory_csv(text, c, standoff=0.0)
        b = rescore_trajectory_csv(text, c, standoff=0.0)
        assert a == b


class TestSvg:
    def test_structure(self):
        c = Circle(50.0)
        svg = trace_svg(synthetic_trajectory(c), c)
        assert svg.startswith("<svg")
        assert svg.count("<polyline") == 2  # contour + path
        assert "<circle" in svg  # start marker
        assert "</svg>" in svg


class TestSummarize:
    def reports(self):
        return [
            TraceReport("square", "edge", "marker", 0.8, 9.0, True, 400),
            TraceReport("circle", "edge", "marker", 0.5, 7.0, True, 314),
            TraceReport("circle", "surface", "marker", 0.7, 11.0, True, 301),
            TraceReport("circular_wave", "edge", "marker", 1.1, 20.0, True, 350),
            TraceReport("circle", "edge", "shading", 0.6, 10.0, True, 314),
        ]

    def test_row_order_sensor_major(self):
        text, _, trace_csv = summarize(self.reports())
        lines = [l for l in trace_csv.strip().splitlines()[1:]]
        keys = [tuple(l.split(",")[:3]) for l in lines]
        assert keys == [
            ("marker", "edge", "circle"),
            ("marker", "edge", "square"),
            ("marker", "edge", "circular_wave"),
            ("marker", "surface", "circle"),
            ("shading", "edge", "circle"),
        ]

    def test_single_report(self):
        text, pose_csv, trace_csv = summarize([self.reports()[0]])
        assert len(trace_csv.strip().splitlines()) == 2  # header + one row

    def test_empty_inputs(self):
        text, pose_csv, trace_csv = summarize([])
        assert trace_csv.strip().splitlines() == [
            "family,stimulus,shape,position_mae_mm,angle_mae_deg,completed,steps"
        ]

    def test_pose_table_format(self):
        rep = EvalReport(
            names=("edge position (mm)", "angle (deg)"),
            mae=(0.16, 1.64),
            ranges=((-5.0, 5.0), (-45.0, 45.0)),
        )
        text, pose_csv, _ = summarize([], eval_reports=[("marker", "edge", rep)])
        assert "0.160 / 10" in text
        assert "1.640 / 90" in text
        rows = pose_csv.strip().splitlines()
        assert rows[0].startswith("family,stimulus,output,mae")
        assert len(rows) == 3
