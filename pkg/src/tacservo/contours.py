"""Parametric closed 2D test shapes with ground-truth geometric queries.

Three shapes are provided: a circle, a square with filleted corners and a
circular wave (polar sinusoid).  Every shape is traversed counter-clockwise
and carries a cumulative-chord arc-length table (4096 samples) so that
`point_at` treats all shapes uniformly.  `query` returns the exact nearest
boundary point, signed distance (positive outside), unit tangent/outward
normal and the arc position of the nearest point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ARC_TABLE_SAMPLES = 4096


@dataclass(frozen=True)
class ContourQuery:
    nearest_point: tuple[float, float]
    signed_distance: float
    tangent: tuple[float, float]
    normal: tuple[float, float]
    arc_position: float

    @property
    def tangent_angle(self) -> float:
        """Tangent direction in degrees."""
        return math.degrees(math.atan2(self.tangent[1], self.tangent[0]))


class Contour:
    """Closed ccw curve; subclasses supply the analytic path and queries."""

    kind = "base"

    def __init__(self, center: tuple[float, float] = (0.0, 0.0)) -> None:
        self.center = (float(center[0]), float(center[1]))
        self._build_arc_table()

    # subclass interface -------------------------------------------------
    def _point_param(self, u: np.ndarray) -> np.ndarray:
        """Analytic path point(s) for parameter u in [0, 1); shape (n, 2)."""
        raise NotImplementedError

    def query(self, p: tuple[float, float]) -> ContourQuery:
        raise NotImplementedError

    # shared machinery ---------------------------------------------------
    def _build_arc_table(self) -> None:
        u = np.arange(ARC_TABLE_SAMPLES, dtype=float) / ARC_TABLE_SAMPLES
        pts = self._point_param(u)
        closed = np.vstack([pts, pts[:1]])
        chords = np.linalg.norm(np.diff(closed, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(chords)])
        self._table_points = closed
        self._table_s = s
        self.perimeter = float(s[-1])

    def point_at(self, s: float) -> tuple[float, float]:
        """Point on the contour at arc position s (wraps modulo perimeter)."""
        s = math.fmod(s, self.perimeter)
        if s < 0.0:
            s += self.perimeter
        i = int(np.searchsorted(self._table_s, s, side="right")) - 1
        i = min(max(i, 0), len(self._table_s) - 2)
        seg = self._table_s[i + 1] - self._table_s[i]
        f = (s - self._table_s[i]) / seg if seg > 0.0 else 0.0
        p0 = self._table_points[i]
        p1 = self._table_points[i + 1]
        return (float(p0[0] + f * (p1[0] - p0[0])), float(p0[1] + f * (p1[1] - p0[1])))

    def _arc_from_param(self, u: float) -> float:
        """Arc position of parameter u via the table (linear interpolation)."""
        u = math.fmod(u, 1.0)
        if u < 0.0:
            u += 1.0
        x = u * ARC_TABLE_SAMPLES
        i = int(x)
        f = x - i
        s0 = self._table_s[i]
        s1 = self._table_s[i + 1]
        return float(s0 + f * (s1 - s0))


class Circle(Contour):
    kind = "circle"

    def __init__(self, radius: float = 50.0, center: tuple[float, float] = (0.0, 0.0)):
        if radius <= 0.0:
            raise ValueError("circle radius must be positive")
        self.radius = float(radius)
        super().__init__(center)

    def _point_param(self, u: np.ndarray) -> np.ndarray:
        phi = 2.0 * math.pi * u
        return np.stack(
            [
                self.center[0] + self.radius * np.cos(phi),
                self.center[1] + self.radius * np.sin(phi),
            ],
            axis=1,
        )

    def query(self, p: tuple[float, float]) -> ContourQuery:
        dx = p[0] - self.center[0]
        dy = p[1] - self.center[1]
        d = math.hypot(dx, dy)
        if d < 1e-12:
            nx, ny = 1.0, 0.0
            phi = 0.0
        else:
            nx, ny = dx / d, dy / d
            phi = math.atan2(dy, dx) % (2.0 * math.pi)
        near = (self.center[0] + self.radius * nx, self.center[1] + self.radius * ny)
        # arc positions are reported on the chord-table scale so that
        # query(point_at(s)) round-trips
        return ContourQuery(
            nearest_point=near,
            signed_distance=d - self.radius,
            tangent=(-ny, nx),
            normal=(nx, ny),
            arc_position=phi / (2.0 * math.pi) * self.perimeter,
        )


class Square(Contour):
    """Axis-aligned square with filleted corners, traversed ccw starting at
    the midpoint of the right side."""

    kind = "square"

    def __init__(
        self,
        side: float = 100.0,
        fillet: float = 2.0,
        center: tuple[float, float] = (0.0, 0.0),
    ):
        if side <= 0.0 or fillet < 0.0 or 2.0 * fillet > side:
            raise ValueError("square requires side > 0 and 0 <= fillet <= side/2")
        self.side = float(side)
        self.fillet = float(fillet)
        super().__init__(center)

    # path pieces (ccw from (h, 0)): half right side, then alternating
    # corner arcs and full sides, closing with the lower half right side.
    def _analytic_point(self, s: float) -> tuple[float, float]:
        h = self.side / 2.0
        f = self.fillet
        m = h - f
        arc = math.pi * f / 2.0
        per = 8.0 * m + 4.0 * arc
        s = math.fmod(s, per)
        if s < 0.0:
            s += per
        cx, cy = self.center

        def corner(ccx: float, ccy: float, a0: float, t: float) -> tuple[float, float]:
            a = a0 + (t / f if f > 0.0 else 0.0)
            return (cx + ccx + f * math.cos(a), cy + ccy + f * math.sin(a))

        if s < m:  # right side, upper half
            return (cx + h, cy + s)
        s -= m
        if s < arc:  # top-right corner
            return corner(m, m, 0.0, s)
        s -= arc
        if s < 2.0 * m:  # top side
            return (cx + m - s, cy + h)
        s -= 2.0 * m
        if s < arc:  # top-left corner
            return corner(-m, m, math.pi / 2.0, s)
        s -= arc
        if s < 2.0 * m:  # left side
            return (cx - h, cy + m - s)
        s -= 2.0 * m
        if s < arc:  # bottom-left corner
            return corner(-m, -m, math.pi, s)
        s -= arc
        if s < 2.0 * m:  # bottom side
            return (cx - m + s, cy - h)
        s -= 2.0 * m
        if s < arc:  # bottom-right corner
            return corner(m, -m, 1.5 * math.pi, s)
        s -= arc
        return (cx + h, cy - m + s)  # right side, lower half

    def _point_param(self, u: np.ndarray) -> np.ndarray:
        h = self.side / 2.0
        per = 8.0 * (h - self.fillet) + 2.0 * math.pi * self.fillet
        return np.array([self._analytic_point(float(ui) * per) for ui in u])

    def query(self, p: tuple[float, float]) -> ContourQuery:
        h = self.side / 2.0
        f = self.fillet
        m = h - f
        arc = math.pi * f / 2.0
        dx = p[0] - self.center[0]
        dy = p[1] - self.center[1]
        ax, ay = abs(dx), abs(dy)
        sx = 1.0 if dx >= 0.0 else -1.0
        sy = 1.0 if dy >= 0.0 else -1.0

        if ax > m and ay > m:
            # corner sector: nearest lies on the fillet arc
            ccx, ccy = sx * m, sy * m
            vx, vy = dx - ccx, dy - ccy
            vn = math.hypot(vx, vy)
            if vn < 1e-12:
                vx, vy, vn = sx, sy, math.sqrt(2.0)
            nx, ny = vx / vn, vy / vn
            near = (self.center[0] + ccx + f * nx, self.center[1] + ccy + f * ny)
        elif ax >= ay:
            # right or left side
            nx, ny = sx, 0.0
            near = (self.center[0] + sx * h, p[1])
        else:
            # top or bottom side
            nx, ny = 0.0, sy
            near = (p[0], self.center[1] + sy * h)

        qx, qy = ax - m, ay - m
        sd = min(max(qx, qy), 0.0) + math.hypot(max(qx, 0.0), max(qy, 0.0)) - f
        arc_pos = self._arc_position_of(near, m, f, arc)
        return ContourQuery(
            nearest_point=near,
            signed_distance=sd,
            tangent=(-ny, nx),
            normal=(nx, ny),
            arc_position=arc_pos * (self.perimeter / self.perimeter_analytic()),
        )

    def _arc_position_of(self, near: tuple[float, float], m: float, f: float, arc: float) -> float:
        h = self.side / 2.0
        x = near[0] - self.center[0]
        y = near[1] - self.center[1]
        eps = 1e-9
        if x >= h - eps:  # right side
            return y % self.perimeter_analytic() if y >= 0.0 else self.perimeter_analytic() + y
        if y >= h - eps:  # top side
            return m + arc + (m - x)
        if x <= -h + eps:  # left side
            return 3.0 * m + 2.0 * arc + (m - y)
        if y <= -h + eps:  # bottom side
            return 5.0 * m + 3.0 * arc + (x + m)
        # on one of the fillet arcs
        sx = 1.0 if x >= 0.0 else -1.0
        sy = 1.0 if y >= 0.0 else -1.0
        a = math.atan2(y - sy * m, x - sx * m)
        if sx > 0.0 and sy > 0.0:
            return m + f * (a % (2.0 * math.pi))
        if sx < 0.0 and sy > 0.0:
            return 3.0 * m + arc + f * (a - math.pi / 2.0)
        if sx < 0.0 and sy < 0.0:
            return 5.0 * m + 2.0 * arc + f * ((a % (2.0 * math.pi)) - math.pi)
        return 7.0 * m + 3.0 * arc + f * ((a % (2.0 * math.pi)) - 1.5 * math.pi)

    def perimeter_analytic(self) -> float:
        return 8.0 * (self.side / 2.0 - self.fillet) + 2.0 * math.pi * self.fillet


class CircularWave(Contour):
    """Polar sinusoid r(phi) = base_radius + amplitude * sin(waves * phi)."""

    kind = "circular_wave"

    def __init__(
        self,
        base_radius: float = 50.0,
        amplitude: float = 10.0,
        waves: int = 6,
        center: tuple[float, float] = (0.0, 0.0),
    ):
        if base_radius <= 0.0 or amplitude < 0.0 or amplitude >= base_radius:
            raise ValueError("wave requires 0 <= amplitude < base_radius")
        self.base_radius = float(base_radius)
        self.amplitude = float(amplitude)
        self.waves = int(waves)
        super().__init__(center)

    def _radius(self, phi: float) -> float:
        return self.base_radius + self.amplitude * math.sin(self.waves * phi)

    def _point(self, phi: float) -> tuple[float, float]:
        r = self._radius(phi)
        return (self.center[0] + r * math.cos(phi), self.center[1] + r * math.sin(phi))

    def _point_param(self, u: np.ndarray) -> np.ndarray:
        phi = 2.0 * math.pi * u
        r = self.base_radius + self.amplitude * np.sin(self.waves * phi)
        return np.stack(
            [self.center[0] + r * np.cos(phi), self.center[1] + r * np.sin(phi)], axis=1
        )

    def _tangent(self, phi: float) -> tuple[float, float]:
        r = self._radius(phi)
        dr = self.amplitude * self.waves * math.cos(self.waves * phi)
        tx = dr * math.cos(phi) - r * math.sin(phi)
        ty = dr * math.sin(phi) + r * math.cos(phi)
        n = math.hypot(tx, ty)
        return (tx / n, ty / n)

    def query(self, p: tuple[float, float]) -> ContourQuery:
        # coarse scan over the arc table, then golden-section refinement of
        # the squared distance over the polar parameter (position tolerance
        # well below 1e-6 mm)
        d2 = np.sum((self._table_points[:-1] - np.asarray(p)) ** 2, axis=1)
        i = int(np.argmin(d2))
        dphi = 2.0 * math.pi / ARC_TABLE_SAMPLES
        lo = (i - 1) * dphi
        hi = (i + 1) * dphi

        def f(phi: float) -> float:
            q = self._point(phi)
            return (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2

        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(80):
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = f(d)
            if b - a < 1e-12:
                break
        phi = 0.5 * (a + b)
        near = self._point(phi)
        t = self._tangent(phi)
        dist = math.hypot(p[0] - near[0], p[1] - near[1])
        # star-shaped about the center, so radial comparison gives the sign
        rx = p[0] - self.center[0]
        ry = p[1] - self.center[1]
        inside = math.hypot(rx, ry) < self._radius(math.atan2(ry, rx))
        return ContourQuery(
            nearest_point=near,
            signed_distance=-dist if inside else dist,
            tangent=t,
            normal=(t[1], -t[0]),
            arc_position=self._arc_from_param(phi / (2.0 * math.pi)),
        )


SHAPE_KINDS = ("circle", "square", "circular_wave")


def make_contour(kind: str, **params: float) -> Contour:
    """Build a contour from config-style parameters."""
    if kind == "circle":
        return Circle(
            radius=params.get("radius", 50.0),
            center=(params.get("center_x", 0.0), params.get("center_y", 0.0)),
        )
    if kind == "square":
        return Square(
            side=params.get("side", 100.0),
            fillet=params.get("fillet", 2.0),
            center=(params.get("center_x", 0.0), params.get("center_y", 0.0)),
        )
    if kind == "circular_wave":
        return CircularWave(
            base_radius=params.get("base_radius", 50.0),
            amplitude=params.get("amplitude", 10.0),
            waves=int(params.get("waves", 6)),
            center=(params.get("center_x", 0.0), params.get("center_y", 0.0)),
        )
    raise ValueError(f"unknown contour kind: {kind!r}")
