"""Planar-plus-depth rigid poses and the frame arithmetic used by the servo loop.

All positions are millimetres, all angles degrees.  The pose model matches a
4-axis desktop arm: x, y, z translation plus yaw about the vertical axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_deg(theta: float) -> float:
    """Wrap an angle in degrees to (-180, 180]."""
    r = math.fmod(theta, 360.0)
    if r <= -180.0:
        r += 360.0
    elif r > 180.0:
        r -= 360.0
    return r


@dataclass(frozen=True)
class Pose2p5:
    """Work-frame pose: planar position + height + yaw."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    theta: float = 0.0  # degrees, wrapped to (-180, 180]

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_deg(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


IDENTITY = Pose2p5()


@dataclass(frozen=True)
class FeaturePose:
    """Sensor pose relative to a local contact feature (edge line or wall).

    offset: across-feature displacement in mm.  For the edge task it is the
        signed distance from the feature line; for the surface task it is the
        labelled contact-depth coordinate (negative into the wall).
    depth: contact indentation in mm (edge-task nuisance; unused for surface).
    angle: sensor yaw relative to the feature tangent, degrees.
    """

    offset: float = 0.0
    depth: float = 0.0
    angle: float = 0.0


@dataclass(frozen=True)
class PoseError:
    """Reference minus predicted feature pose; positive d_offset commands
    motion along the outward feature normal."""

    d_offset: float = 0.0
    d_angle: float = 0.0


@dataclass(frozen=True)
class TcpOffset:
    """Displacement from the end-effector origin to the sensing-surface tip,
    expressed in the end-effector frame (dx along local x, dz vertical)."""

    dx: float = 0.0
    dz: float = 0.0


def compose(a: Pose2p5, b: Pose2p5) -> Pose2p5:
    """Rigid composition in the horizontal plane with additive z."""
    t = math.radians(a.theta)
    c, s = math.cos(t), math.sin(t)
    return Pose2p5(
        x=a.x + c * b.x - s * b.y,
        y=a.y + s * b.x + c * b.y,
        z=a.z + b.z,
        theta=a.theta + b.theta,
    )


def inverse(p: Pose2p5) -> Pose2p5:
    t = math.radians(p.theta)
    c, s = math.cos(t), math.sin(t)
    return Pose2p5(
        x=-(c * p.x + s * p.y),
        y=-(-s * p.x + c * p.y),
        z=-p.z,
        theta=-p.theta,
    )


def feature_to_work(
    sensor: Pose2p5, feature_frame: Pose2p5, move: PoseError, step: float
) -> Pose2p5:
    """Next commanded pose: corrective move in the feature frame plus a
    tangential advance of `step` mm.

    feature_frame.theta is the feature tangent direction in the work frame.
    d_offset translates along the outward feature normal (tangent rotated
    -90 degrees, i.e. away from the interior of a counter-clockwise contour);
    d_angle is added to the sensor yaw.  z is left untouched.
    """
    t = math.radians(feature_frame.theta)
    tx, ty = math.cos(t), math.sin(t)
    # outward normal of a ccw-traversed contour
    nx, ny = ty, -tx
    return Pose2p5(
        x=sensor.x + step * tx + move.d_offset * nx,
        y=sensor.y + step * ty + move.d_offset * ny,
        z=sensor.z,
        theta=sensor.theta + move.d_angle,
    )


def apply_tcp(pose: Pose2p5, tcp: TcpOffset) -> Pose2p5:
    """Pose of the sensor tip given an end-effector pose."""
    return compose(pose, Pose2p5(tcp.dx, 0.0, tcp.dz, 0.0))


def unapply_tcp(tip: Pose2p5, tcp: TcpOffset) -> Pose2p5:
    """End-effector pose that places the sensor tip at `tip`; inverse of
    apply_tcp."""
    return compose(tip, Pose2p5(-tcp.dx, 0.0, -tcp.dz, 0.0))
