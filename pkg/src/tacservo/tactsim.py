"""Synthesize tactile images for two optical sensor families.

The contact model is phenomenological: a penetration field over the sensing
surface drives either marker displacement (marker family: white disks on
black, near-binary) or intensity shading (shading family: directional
gradient of the penetration under a fixed lateral light).

Conventions (sensor frame, mm): origin at the sensing-field centre, x right,
y up.  An edge contact is a straight line with unit normal
(sin angle, cos angle) at signed position `offset` along that normal; the
object occupies the far side of the line, indenting by `depth` with a linear
falloff band across the line.  A surface contact indents the whole field,
with base indentation derived from the labelled offset coordinate and a
linear gradient of slope tan(angle) along the rotated contact normal.

Skin shear from sliding drags the rendered pattern by a translation of
shear_gain * R(slide_angle) @ (slide_x, slide_y).  The skin is clamped at
the rim of the sensing field, so the drag is tapered: full strength over
the central half of the field, falling linearly to zero at the boundary.
Friction pins the contact pattern only partially to the object, so the
indentation signature moves by shear_drag times the skin drag while the
marker grid moves with the full drag.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .pgm import float_to_u8, u8_to_float
from .rng import SplitMix64

FAMILIES = ("marker", "shading")
TASKS = ("edge", "surface")


class ContactRangeError(ValueError):
    """Contact parameters outside the physically meaningful range."""


@dataclass(frozen=True)
class SensorSpec:
    family: str = "marker"
    image_width: int = 128
    image_height: int = 128
    field_w: float = 40.0
    field_h: float = 40.0
    marker_count: int = 331
    marker_radius: float = 2.5  # px
    gel_stiffness: float = 0.5  # mm marker displacement per mm penetration
    max_depth: float = 4.0
    shear_gain: float = 0.2  # skin drag per unit slide, tapered to 0 at the rim
    shear_drag: float = 0.6  # fraction of the drag transmitted to the contact pattern
    noise_sigma: float = 0.005
    jitter_sigma: float = 0.1  # px, per-marker position noise
    falloff: float = 3.5  # mm, edge taper band width
    edge_depth: float = 2.0  # mm, nominal edge-press indentation
    surface_clearance: float = 1.0  # mm, offset coordinate of first touch
    ambient: float = 0.35  # shading family background level
    light_gain: float = 0.9  # shading intensity per unit penetration slope

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown sensor family {self.family!r}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.family == "marker" and self.marker_count <= 0:
            raise ValueError("marker family requires marker_count > 0")
        if self.max_depth <= 0.0:
            raise ValueError("max_depth must be positive")
        if not 0.0 <= self.shear_gain <= 1.0:
            raise ValueError("shear_gain must be in [0, 1]")

    @property
    def mm_per_px(self) -> tuple[float, float]:
        return (self.field_w / self.image_width, self.field_h / self.image_height)


def marker_spec(**overrides) -> SensorSpec:
    """Round 40 mm marker sensor: 331 markers imaged at 128x128."""
    return SensorSpec(**overrides)


def digitac_spec(**overrides) -> SensorSpec:
    """Small flat marker sensor: 140 markers on a 25x19 mm field at 160x120."""
    base = dict(
        family="marker",
        image_width=160,
        image_height=120,
        field_w=25.0,
        field_h=19.0,
        marker_count=140,
        marker_radius=3.0,
    )
    base.update(overrides)
    return SensorSpec(**base)


def shading_spec(**overrides) -> SensorSpec:
    """Stiff flat shading sensor: 25x19 mm field at 160x120, 1 mm depth range."""
    base = dict(
        family="shading",
        image_width=160,
        image_height=120,
        field_w=25.0,
        field_h=19.0,
        max_depth=1.0,
        edge_depth=1.0,
        shear_gain=0.1,
    )
    base.update(overrides)
    return SensorSpec(**base)


@dataclass(frozen=True)
class ContactParams:
    """One contact state.

    task=edge: offset/angle are the labelled pose, depth is the actual
    indentation in mm (nuisance).  task=surface: offset is the labelled
    contact-depth coordinate (negative into the wall, indentation derived
    inside the renderer), depth is unused and slide_y must be zero.
    """

    task: str = "edge"
    offset: float = 0.0
    depth: float = 0.0
    angle: float = 0.0
    slide_x: float = 0.0
    slide_y: float = 0.0
    slide_angle: float = 0.0

    def validate(self, spec: SensorSpec) -> None:
        if self.task not in TASKS:
            raise ContactRangeError(f"unknown task {self.task!r}")
        vals = (self.offset, self.depth, self.angle, self.slide_x, self.slide_y, self.slide_angle)
        if not all(math.isfinite(v) for v in vals):
            raise ContactRangeError("contact parameters must be finite")
        if self.task == "edge" and self.depth < 0.0:
            raise ContactRangeError("edge indentation depth must be >= 0")
        if self.task == "surface" and self.slide_y != 0.0:
            raise ContactRangeError("surface task has no tangent-normal slide (slide_y must be 0)")
        if abs(self.angle) > 89.0:
            raise ContactRangeError("contact angle beyond +-89 deg is unresolvable")
        reach = math.hypot(spec.field_w, spec.field_h)
        if abs(self.offset) > reach:
            raise ContactRangeError("contact offset outside the sensing field")


ZERO_CONTACT = ContactParams()


@dataclass(frozen=True)
class TactileImage:
    width: int
    height: int
    pixels: np.ndarray  # float32 (height, width) in [0, 1], on the 1/255 grid

    @classmethod
    def from_float(cls, arr: np.ndarray) -> "TactileImage":
        q = u8_to_float(float_to_u8(arr))
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=q)

    def to_u8(self) -> np.ndarray:
        return float_to_u8(self.pixels)


# --------------------------------------------------------------------------
# penetration field

def _edge_normal(angle_deg: float) -> tuple[float, float]:
    a = math.radians(angle_deg)
    return (math.sin(a), math.cos(a))


def penetration_field(spec: SensorSpec, contact: ContactParams, pts: np.ndarray) -> np.ndarray:
    """Penetration depth (mm, >= 0) at sensor-frame points (..., 2)."""
    nx, ny = _edge_normal(contact.angle)
    along = pts[..., 0] * nx + pts[..., 1] * ny
    if contact.task == "edge":
        depth = min(max(contact.depth, 0.0), spec.max_depth)
        frac = np.clip((along - contact.offset) / spec.falloff + 0.5, 0.0, 1.0)
        return depth * frac
    # surface: uniform base indentation plus the tilt gradient of a yawed face
    base = -contact.offset - spec.surface_clearance
    slope = math.tan(math.radians(contact.angle))
    return np.clip(base + slope * along, 0.0, spec.max_depth)


def penetration(spec: SensorSpec, contact: ContactParams, p: tuple[float, float]) -> float:
    return float(penetration_field(spec, contact, np.asarray([p], dtype=float))[0])


# --------------------------------------------------------------------------
# marker layout

@lru_cache(maxsize=16)
def _marker_layout_cached(
    field_w: float, field_h: float, count: int, inset: float
) -> np.ndarray:
    return _build_marker_layout(field_w, field_h, count, inset)


def _hex_lattice(pitch: float, half_w: float, half_h: float) -> np.ndarray:
    """Hexagonal lattice inside [-half_w, half_w] x [-half_h, half_h],
    mirror-symmetric about both axes."""
    dy = pitch * math.sqrt(3.0) / 2.0
    rows = int(half_h / dy)
    pts = []
    for j in range(-rows, rows + 1):
        y = j * dy
        if j % 2 == 0:
            cols = int(half_w / pitch)
            xs = [i * pitch for i in range(-cols, cols + 1)]
        else:
            cols = int(half_w / pitch + 0.5)
            xs = [(i + 0.5) * pitch for i in range(-cols, cols)]
        pts.extend((x, y) for x in xs if abs(x) <= half_w)
    return np.asarray(pts, dtype=float)


def _build_marker_layout(field_w: float, field_h: float, count: int, inset: float) -> np.ndarray:
    half_w = field_w / 2.0 - inset
    half_h = field_h / 2.0 - inset
    if half_w <= 0.0 or half_h <= 0.0:
        raise ValueError("sensing field too small for the marker radius")
    area = 4.0 * half_w * half_h
    pitch = math.sqrt(2.0 * area / (math.sqrt(3.0) * count))
    pts = _hex_lattice(pitch, half_w, half_h)
    while len(pts) < count:
        pitch *= 0.97
        pts = _hex_lattice(pitch, half_w, half_h)

    # trim to the exact count, farthest-out first, preserving the mirror
    # symmetry about x = 0: remove mirror pairs, and single centreline
    # markers when one removal is needed
    order = np.argsort(-(pts[:, 0] ** 2 + pts[:, 1] ** 2), kind="stable")
    keep = np.ones(len(pts), dtype=bool)
    excess = len(pts) - count
    key_of = {(round(p[0], 9), round(p[1], 9)): i for i, p in enumerate(pts)}
    for i in order:
        if excess <= 0:
            break
        if not keep[i]:
            continue
        x, y = pts[i]
        if abs(x) < 1e-9:
            if excess >= 1 and excess % 2 == 1:
                keep[i] = False
                excess -= 1
        else:
            j = key_of.get((round(-x, 9), round(y, 9)))
            if j is not None and keep[j] and excess >= 2:
                keep[i] = False
                keep[j] = False
                excess -= 2
    if excess > 0:  # odd leftover with no centreline point reached yet
        for i in order:
            if keep[i] and abs(pts[i][0]) < 1e-9:
                keep[i] = False
                excess -= 1
                if excess == 0:
                    break
    result = pts[keep]
    if len(result) != count:
        raise ValueError(f"could not place exactly {count} markers")
    # stable draw order: bottom-to-top rows, left-to-right
    order = np.lexsort((result[:, 0], result[:, 1]))
    return result[order]


def marker_layout(spec: SensorSpec) -> np.ndarray:
    """Rest positions (count, 2) in sensor-frame mm."""
    mmx, mmy = spec.mm_per_px
    inset = spec.marker_radius * max(mmx, mmy) + 0.2
    return _marker_layout_cached(spec.field_w, spec.field_h, spec.marker_count, inset)


# --------------------------------------------------------------------------
# rasterization

def _mm_to_px(spec: SensorSpec, pts: np.ndarray) -> np.ndarray:
    col = (pts[:, 0] / spec.field_w + 0.5) * spec.image_width - 0.5
    row = (0.5 - pts[:, 1] / spec.field_h) * spec.image_height - 0.5
    return np.stack([row, col], axis=1)


def _pixel_grid_mm(spec: SensorSpec) -> tuple[np.ndarray, np.ndarray]:
    xs = ((np.arange(spec.image_width) + 0.5) / spec.image_width - 0.5) * spec.field_w
    ys = (0.5 - (np.arange(spec.image_height) + 0.5) / spec.image_height) * spec.field_h
    return np.meshgrid(xs, ys)


def _draw_disks(spec: SensorSpec, centers_px: np.ndarray) -> np.ndarray:
    h, w = spec.image_height, spec.image_width
    img = np.zeros((h, w), dtype=np.float64)
    r = spec.marker_radius
    k = int(math.ceil(r + 1.5))
    offs = np.arange(-k, k + 1)
    for row, col in centers_px:
        r0 = int(round(row))
        c0 = int(round(col))
        rows = r0 + offs
        cols = c0 + offs
        rm = (rows >= 0) & (rows < h)
        cm = (cols >= 0) & (cols < w)
        if not rm.any() or not cm.any():
            continue
        rr = rows[rm]
        cc = cols[cm]
        dist = np.hypot(rr[:, None] - row, cc[None, :] - col)
        cov = np.clip(r + 0.5 - dist, 0.0, 1.0)
        patch = img[rr[0] : rr[-1] + 1, cc[0] : cc[-1] + 1]
        np.maximum(patch, cov, out=patch)
    return img


def _shear_translation(contact: ContactParams, spec: SensorSpec) -> tuple[float, float]:
    """Drag translation (mm) of the skin pattern."""
    a = math.radians(contact.slide_angle)
    c, s = math.cos(a), math.sin(a)
    tx = spec.shear_gain * (c * contact.slide_x - s * contact.slide_y)
    ty = spec.shear_gain * (s * contact.slide_x + c * contact.slide_y)
    return tx, ty


def _clamp_weight(spec: SensorSpec, pts: np.ndarray) -> np.ndarray:
    """Shear taper: 1 over the central half of the field, 0 at the clamped rim."""
    rim = 0.5 * min(spec.field_w, spec.field_h)
    r = np.linalg.norm(pts, axis=-1)
    return np.clip((rim - r) / (0.5 * rim), 0.0, 1.0)


def _shear_displacement(
    spec: SensorSpec, contact: ContactParams, pts: np.ndarray
) -> np.ndarray:
    """Skin drag at points (..., 2): tapered translation field."""
    tx, ty = _shear_translation(contact, spec)
    w = _clamp_weight(spec, pts)
    return np.stack([w * tx, w * ty], axis=-1)


def render(spec: SensorSpec, contact: ContactParams, rng_seed: int) -> TactileImage:
    """Deterministic tactile image for (spec, contact, rng_seed)."""
    contact.validate(spec)
    rng = SplitMix64(rng_seed)
    if spec.family == "marker":
        raw = _render_marker(spec, contact, rng)
    else:
        raw = _render_shading(spec, contact, rng)
    return TactileImage.from_float(raw)


def _displacement_direction(contact: ContactParams, pts: np.ndarray) -> np.ndarray:
    if contact.task == "edge":
        nx, ny = _edge_normal(contact.angle)
        side = np.sign(pts[:, 0] * nx + pts[:, 1] * ny - contact.offset)
        return np.stack([side * nx, side * ny], axis=1)
    norm = np.linalg.norm(pts, axis=1)
    safe = np.where(norm > 1e-9, norm, 1.0)
    return pts / safe[:, None]


def _render_marker(spec: SensorSpec, contact: ContactParams, rng: SplitMix64) -> np.ndarray:
    rest = marker_layout(spec)
    drag = _shear_displacement(spec, contact, rest)
    # the contact signature is pinned to the object except for the dragged
    # fraction: markers sample the penetration at partially de-dragged spots
    eval_pts = rest + (1.0 - spec.shear_drag) * drag
    pen = penetration_field(spec, contact, eval_pts)
    disp = spec.gel_stiffness * pen[:, None] * _displacement_direction(contact, eval_pts)
    positions = rest + drag + disp
    if spec.jitter_sigma > 0.0:
        mmx, mmy = spec.mm_per_px
        jit = rng.normal(2 * len(rest), spec.jitter_sigma).reshape(-1, 2)
        positions = positions + jit * np.asarray([mmx, mmy])
    img = _draw_disks(spec, _mm_to_px(spec, positions))
    return _add_pixel_noise(spec, img, rng)


def _render_shading(spec: SensorSpec, contact: ContactParams, rng: SplitMix64) -> np.ndarray:
    gx, gy = _pixel_grid_mm(spec)
    # first-order inverse warp of the dragged indentation pattern
    grid = np.stack([gx, gy], axis=-1)
    pts = grid - spec.shear_drag * _shear_displacement(spec, contact, grid)
    pen = penetration_field(spec, contact, pts)
    _, mmy = spec.mm_per_px
    grad_y = np.gradient(pen, axis=0) / (-mmy)  # row index runs against +y
    img = spec.ambient + spec.light_gain * grad_y
    return _add_pixel_noise(spec, img, rng)


def _add_pixel_noise(spec: SensorSpec, img: np.ndarray, rng: SplitMix64) -> np.ndarray:
    if spec.noise_sigma > 0.0:
        noise = rng.normal(img.size, spec.noise_sigma).reshape(img.shape)
        img = img + noise
    return np.clip(img, 0.0, 1.0)


def rest_frame(spec: SensorSpec) -> TactileImage:
    """Zero contact, zero noise; the difference-imaging baseline."""
    quiet = dataclasses.replace(spec, noise_sigma=0.0, jitter_sigma=0.0)
    contact = ContactParams(task="edge", offset=0.0, depth=0.0, angle=0.0)
    return render(quiet, contact, rng_seed=0)
