"""Pose-based tactile servo loop: sense -> predict -> correct -> advance.

Each iteration renders (or oracles) the sensor's view of the contour,
predicts the feature pose, forms the error against a reference pose and
commands a proportional correction plus a fixed tangential advance.  The
loop terminates on loop closure, contact loss or a step budget.  Ground
truth for every visited pose is recorded from the contour module so traces
can be scored independently of the predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .contours import Contour, ContourQuery
from .geometry import (
    FeaturePose,
    Pose2p5,
    PoseError,
    TcpOffset,
    apply_tcp,
    feature_to_work,
    unapply_tcp,
    wrap_deg,
)
from .posenet import PoseNetModel
from .rng import derive_seed
from .tactsim import ContactParams, SensorSpec, TactileImage, render


class LostContact(RuntimeError):
    """Sensor tip moved beyond the detachment distance."""


@dataclass(frozen=True)
class ServoConfig:
    reference: FeaturePose | None = None  # None -> task default
    gain_offset: float = 0.5
    gain_angle: float = 0.5
    advance_step: float = 1.0
    angle_setpoint_advance: float = 0.0  # degrees; corner-turning aid
    max_steps: int = 4000
    loop_closure_radius: float = 2.0
    min_steps_before_closure: int = 0  # 0 -> auto from the perimeter
    step_clamp_mm: float = 2.0
    step_clamp_deg: float = 15.0
    detach_distance: float = 10.0
    surface_detach: float = 3.0
    shear_cap_mm: float = 5.0
    shear_cap_deg: float = 5.0
    shear_reset_angle: float = 0.5  # commanded yaw (deg) that re-seats the skin
    tcp: TcpOffset = TcpOffset()
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.gain_offset < 2.0 and 0.0 <= self.gain_angle < 2.0):
            raise ValueError("gains must lie in [0, 2)")
        if self.advance_step <= 0.0:
            raise ValueError("advance_step must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")

    def resolved_reference(self, task: str) -> FeaturePose:
        if self.reference is not None:
            return self.reference
        if task == "surface":
            return FeaturePose(offset=-3.0, depth=0.0, angle=0.0)
        return FeaturePose(offset=0.0, depth=0.0, angle=0.0)


@dataclass
class TrajectoryEntry:
    step: int
    command: Pose2p5  # end-effector pose (equals the tip pose for zero TCP)
    predicted: FeaturePose
    error: PoseError
    true_query: ContourQuery
    true_feature: FeaturePose
    status: str  # ok | closed | lost


@dataclass
class Trajectory:
    task: str
    reference: FeaturePose
    standoff: float  # |signed distance| the reference pose maintains
    entries: list[TrajectoryEntry] = field(default_factory=list)
    status: str = "max_steps"  # closed | lost | max_steps

    @property
    def completed(self) -> bool:
        return self.status == "closed"

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class _ShearState:
    slide_x: float = 0.0
    slide_y: float = 0.0
    slide_angle: float = 0.0

    def update(self, cfg: ServoConfig, d_tan: float, d_norm: float, d_yaw: float, task: str) -> None:
        if abs(d_yaw) > cfg.shear_reset_angle:
            self.slide_x = self.slide_y = self.slide_angle = 0.0
            return
        cap, capa = cfg.shear_cap_mm, cfg.shear_cap_deg
        self.slide_x = max(-cap, min(cap, self.slide_x + d_tan))
        if task == "edge":
            self.slide_y = max(-cap, min(cap, self.slide_y + d_norm))
        self.slide_angle = max(-capa, min(capa, self.slide_angle + d_yaw))


class OraclePredictor:
    """Ground-truth pose source; bypasses rendering."""

    needs_image = False

    def predict(self, image: TactileImage | None, true_pose: FeaturePose) -> FeaturePose:
        return true_pose


class ModelPredictor:
    """PoseNet-backed pose source."""

    needs_image = True

    def __init__(self, model: PoseNetModel):
        self.model = model

    def predict(self, image: TactileImage, true_pose: FeaturePose) -> FeaturePose:
        offset, angle = self.model.predict_one(image)
        return FeaturePose(offset=offset, depth=0.0, angle=angle)


def true_feature_pose(
    contour: Contour, tip: Pose2p5, spec: SensorSpec, task: str
) -> tuple[FeaturePose, ContourQuery]:
    """Sensor pose in the local feature frame, from contour ground truth."""
    q = contour.query(tip.xy)
    angle = wrap_deg(tip.theta - q.tangent_angle)
    if task == "surface":
        offset = q.signed_distance - spec.surface_clearance
        depth = 0.0
    else:
        offset = q.signed_distance
        depth = spec.edge_depth + tip.z
    return FeaturePose(offset=offset, depth=depth, angle=angle), q


def _contact_lost(cfg: ServoConfig, task: str, spec: SensorSpec, sd: float) -> bool:
    if task == "surface":
        return sd > cfg.surface_detach or sd < -(spec.surface_clearance + spec.max_depth + 2.0)
    return abs(sd) > cfg.detach_distance


def sense(
    contour: Contour,
    tip: Pose2p5,
    spec: SensorSpec,
    task: str,
    seed: int,
    shear: _ShearState | None = None,
) -> TactileImage:
    """Render what the sensor sees at `tip`; raises LostContact out of range."""
    true_pose, q = true_feature_pose(contour, tip, spec, task)
    if _contact_lost(ServoConfig(), task, spec, q.signed_distance):
        raise LostContact(f"signed distance {q.signed_distance:.2f} mm")
    sh = shear or _ShearState()
    contact = ContactParams(
        task=task,
        offset=true_pose.offset,
        depth=max(0.0, true_pose.depth) if task == "edge" else 0.0,
        angle=max(-85.0, min(85.0, true_pose.angle)),
        slide_x=sh.slide_x,
        slide_y=sh.slide_y,
        slide_angle=sh.slide_angle,
    )
    return render(spec, contact, rng_seed=seed)


def servo_step(
    cfg: ServoConfig, tip: Pose2p5, predicted: FeaturePose, reference: FeaturePose
) -> tuple[Pose2p5, PoseError, PoseError]:
    """One control update; returns (next tip pose, raw error, clamped move).

    The feature frame is estimated from the controller's own state: the yaw
    it maintains minus the angle it regulates toward.  A zero-gain loop
    therefore advances blind (the open-loop negative control departs on
    corners), while a regulated loop converges to the true tangent.
    """
    eff_ref_angle = reference.angle + cfg.angle_setpoint_advance
    err = PoseError(
        d_offset=reference.offset - predicted.offset,
        d_angle=eff_ref_angle - predicted.angle,
    )
    move = PoseError(
        d_offset=max(-cfg.step_clamp_mm, min(cfg.step_clamp_mm, cfg.gain_offset * err.d_offset)),
        d_angle=max(-cfg.step_clamp_deg, min(cfg.step_clamp_deg, cfg.gain_angle * err.d_angle)),
    )
    est_tangent = Pose2p5(theta=tip.theta - eff_ref_angle)
    nxt = feature_to_work(tip, est_tangent, move, cfg.advance_step)
    return nxt, err, move


def start_pose(
    cfg: ServoConfig, contour: Contour, spec: SensorSpec, task: str, arc: float = 0.0
) -> Pose2p5:
    """End-effector start pose on the contour at `arc`, at the reference pose."""
    ref = cfg.resolved_reference(task)
    p0 = contour.point_at(arc)
    q = contour.query(p0)
    sd_ref = ref.offset if task == "edge" else ref.offset + spec.surface_clearance
    x = p0[0] + sd_ref * q.normal[0]
    y = p0[1] + sd_ref * q.normal[1]
    tip = Pose2p5(x=x, y=y, z=0.0, theta=q.tangent_angle + ref.angle)
    return unapply_tcp(tip, cfg.tcp)


def run(
    cfg: ServoConfig,
    contour: Contour,
    spec: SensorSpec,
    predictor: OraclePredictor | ModelPredictor,
    task: str,
    start: Pose2p5 | None = None,
) -> Trajectory:
    """Trace the contour; the trajectory records ground truth every step."""
    ref = cfg.resolved_reference(task)
    standoff = abs(ref.offset) if task == "edge" else abs(ref.offset + spec.surface_clearance)
    ee = start if start is not None else start_pose(cfg, contour, spec, task)
    tip = apply_tcp(ee, cfg.tcp)
    start_xy = tip.xy
    min_steps = cfg.min_steps_before_closure
    if min_steps <= 0:
        min_steps = max(2, int(0.6 * contour.perimeter / cfg.advance_step))

    traj = Trajectory(task=task, reference=ref, standoff=standoff)
    shear = _ShearState()
    for step_i in range(cfg.max_steps):
        true_pose, q = true_feature_pose(contour, tip, spec, task)
        if _contact_lost(cfg, task, spec, q.signed_distance):
            traj.entries.append(
                TrajectoryEntry(
                    step=step_i,
                    command=unapply_tcp(tip, cfg.tcp),
                    predicted=true_pose,
                    error=PoseError(),
                    true_query=q,
                    true_feature=true_pose,
                    status="lost",
                )
            )
            traj.status = "lost"
            return traj

        if predictor.needs_image:
            image = sense(contour, tip, spec, task, derive_seed(cfg.seed, step_i), shear)
            predicted = predictor.predict(image, true_pose)
        else:
            predicted = predictor.predict(None, true_pose)

        nxt, err, move = servo_step(cfg, tip, predicted, ref)
        closed = step_i >= min_steps and math.hypot(
            tip.x - start_xy[0], tip.y - start_xy[1]
        ) <= cfg.loop_closure_radius
        traj.entries.append(
            TrajectoryEntry(
                step=step_i,
                command=unapply_tcp(tip, cfg.tcp),
                predicted=predicted,
                error=err,
                true_query=q,
                true_feature=true_pose,
                status="closed" if closed else "ok",
            )
        )
        if closed:
            traj.status = "closed"
            return traj
        shear.update(cfg, cfg.advance_step, move.d_offset, move.d_angle, task)
        tip = nxt
    return traj
