"""Labelled tactile datasets: two-stage (pose + slide) sampling, splitting
and an inspectable on-disk format.

A dataset directory holds a plain-text manifest, one binary PGM per image,
a labels CSV and a whole-set sha256 checksum.  Everything is reproducible
from (plan, sensor spec): sample i draws from splitmix64 seeded with
seed XOR i, so generation order does not matter.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tactsim
from .pgm import pgm_bytes, read_pgm, u8_to_float, write_pgm
from .rng import SplitMix64, derive_seed
from .tactsim import ContactParams, SensorSpec, TactileImage

FORMAT_TAG = "tacservo-dataset-v1"

LABEL_COLUMNS = (
    "index",
    "offset_mm",
    "angle_deg",
    "depth_mm",
    "slide_x_mm",
    "slide_y_mm",
    "slide_angle_deg",
)


class DatasetFormatError(ValueError):
    pass


class DatasetChecksumError(ValueError):
    pass


@dataclass(frozen=True)
class CollectionPlan:
    """Sampling ranges for one task; defaults are the standard protocol."""

    task: str = "edge"
    offset_range: tuple[float, float] = (-5.0, 5.0)
    depth_range: tuple[float, float] = (-1.0, 1.0)  # nuisance z about the press depth
    angle_range: tuple[float, float] = (-45.0, 45.0)
    slide_x_range: tuple[float, float] = (-5.0, 5.0)
    slide_y_range: tuple[float, float] = (-5.0, 5.0)
    slide_angle_range: tuple[float, float] = (-5.0, 5.0)
    n_samples: int = 5000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.task not in tactsim.TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        for name in (
            "offset_range",
            "depth_range",
            "angle_range",
            "slide_x_range",
            "slide_y_range",
            "slide_angle_range",
        ):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name}: lower bound exceeds upper bound")

    @property
    def label_ranges(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """(offset, angle) ranges: the regression targets."""
        return (self.offset_range, self.angle_range)


def edge_plan(**overrides) -> CollectionPlan:
    return CollectionPlan(task="edge", **overrides)


def surface_plan(**overrides) -> CollectionPlan:
    base = dict(
        task="surface",
        offset_range=(-5.0, -1.0),
        depth_range=(0.0, 0.0),
        angle_range=(-30.0, 30.0),
        slide_x_range=(-5.0, 5.0),
        slide_y_range=(0.0, 0.0),
        slide_angle_range=(-5.0, 5.0),
    )
    base.update(overrides)
    return CollectionPlan(**base)


@dataclass(frozen=True)
class Sample:
    image: TactileImage
    label: tuple[float, float]  # (offset mm, angle deg) -- never slide fields
    contact: ContactParams


@dataclass
class Dataset:
    plan: CollectionPlan
    spec: SensorSpec
    images_u8: np.ndarray  # (n, H, W) uint8
    labels: np.ndarray  # (n, 2) float64: offset, angle
    contacts: np.ndarray  # (n, 6) float64: offset, depth, angle, sx, sy, sa
    train_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    split_fraction: float = 0.0
    split_seed: int = 0

    def __len__(self) -> int:
        return len(self.labels)

    def sample(self, i: int) -> Sample:
        img = TactileImage(
            width=self.spec.image_width,
            height=self.spec.image_height,
            pixels=u8_to_float(self.images_u8[i]),
        )
        c = self.contacts[i]
        contact = ContactParams(
            task=self.plan.task,
            offset=c[0],
            depth=c[1],
            angle=c[2],
            slide_x=c[3],
            slide_y=c[4],
            slide_angle=c[5],
        )
        return Sample(image=img, label=(self.labels[i, 0], self.labels[i, 1]), contact=contact)

    def images_float(self, idx: np.ndarray | None = None) -> np.ndarray:
        sel = self.images_u8 if idx is None else self.images_u8[idx]
        return u8_to_float(sel)


def _draw_contact(plan: CollectionPlan, spec: SensorSpec, rng: SplitMix64) -> ContactParams:
    offset = rng.uniform(*plan.offset_range)
    z = rng.uniform(*plan.depth_range)
    angle = rng.uniform(*plan.angle_range)
    sx = rng.uniform(*plan.slide_x_range)
    sy = rng.uniform(*plan.slide_y_range)
    sa = rng.uniform(*plan.slide_angle_range)
    if plan.task == "edge":
        depth = max(0.0, spec.edge_depth + z)
    else:
        depth = 0.0
        sy = 0.0
    return ContactParams(
        task=plan.task,
        offset=offset,
        depth=depth,
        angle=angle,
        slide_x=sx,
        slide_y=sy,
        slide_angle=sa,
    )


def collect(plan: CollectionPlan, spec: SensorSpec) -> Dataset:
    """Render plan.n_samples labelled contacts; deterministic per seed."""
    n = plan.n_samples
    images = np.empty((n, spec.image_height, spec.image_width), dtype=np.uint8)
    labels = np.empty((n, 2), dtype=np.float64)
    contacts = np.empty((n, 6), dtype=np.float64)
    for i in range(n):
        rng = SplitMix64(derive_seed(plan.seed, i))
        contact = _draw_contact(plan, spec, rng)
        img = tactsim.render(spec, contact, rng_seed=rng.next_u64())
        images[i] = img.to_u8()
        labels[i] = (contact.offset, contact.angle)
        contacts[i] = (
            contact.offset,
            contact.depth,
            contact.angle,
            contact.slide_x,
            contact.slide_y,
            contact.slide_angle,
        )
    return Dataset(plan=plan, spec=spec, images_u8=images, labels=labels, contacts=contacts)


def split(dataset: Dataset, train_fraction: float = 0.75, seed: int = 1) -> Dataset:
    """Seeded permutation split; indices disjoint and exhaustive."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(dataset)
    perm = SplitMix64(seed).shuffle(n)
    k = int(n * train_fraction)
    dataset.train_idx = np.sort(perm[:k])
    dataset.test_idx = np.sort(perm[k:])
    dataset.split_fraction = train_fraction
    dataset.split_seed = seed
    return dataset


# --------------------------------------------------------------------------
# persistence

def _fmt(v: float) -> str:
    return repr(float(v))


def _manifest_text(d: Dataset) -> str:
    p, s = d.plan, d.spec
    kv = {
        "format": FORMAT_TAG,
        "task": p.task,
        "n_samples": str(p.n_samples),
        "seed": str(p.seed),
        "offset_range": f"{_fmt(p.offset_range[0])},{_fmt(p.offset_range[1])}",
        "depth_range": f"{_fmt(p.depth_range[0])},{_fmt(p.depth_range[1])}",
        "angle_range": f"{_fmt(p.angle_range[0])},{_fmt(p.angle_range[1])}",
        "slide_x_range": f"{_fmt(p.slide_x_range[0])},{_fmt(p.slide_x_range[1])}",
        "slide_y_range": f"{_fmt(p.slide_y_range[0])},{_fmt(p.slide_y_range[1])}",
        "slide_angle_range": f"{_fmt(p.slide_angle_range[0])},{_fmt(p.slide_angle_range[1])}",
        "split_fraction": _fmt(d.split_fraction),
        "split_seed": str(d.split_seed),
        "sensor.family": s.family,
        "sensor.image_width": str(s.image_width),
        "sensor.image_height": str(s.image_height),
        "sensor.field_w": _fmt(s.field_w),
        "sensor.field_h": _fmt(s.field_h),
        "sensor.marker_count": str(s.marker_count),
        "sensor.marker_radius": _fmt(s.marker_radius),
        "sensor.gel_stiffness": _fmt(s.gel_stiffness),
        "sensor.max_depth": _fmt(s.max_depth),
        "sensor.shear_gain": _fmt(s.shear_gain),
        "sensor.shear_drag": _fmt(s.shear_drag),
        "sensor.noise_sigma": _fmt(s.noise_sigma),
        "sensor.jitter_sigma": _fmt(s.jitter_sigma),
        "sensor.falloff": _fmt(s.falloff),
        "sensor.edge_depth": _fmt(s.edge_depth),
        "sensor.surface_clearance": _fmt(s.surface_clearance),
        "sensor.ambient": _fmt(s.ambient),
        "sensor.light_gain": _fmt(s.light_gain),
    }
    return "".join(f"{k}={v}\n" for k, v in sorted(kv.items()))


def _labels_text(d: Dataset) -> str:
    lines = [",".join(LABEL_COLUMNS)]
    for i in range(len(d)):
        c = d.contacts[i]
        lines.append(
            f"{i},{_fmt(c[0])},{_fmt(c[2])},{_fmt(c[1])},{_fmt(c[3])},{_fmt(c[4])},{_fmt(c[5])}"
        )
    return "\n".join(lines) + "\n"


def dataset_hash(d: Dataset) -> str:
    """sha256 of manifest + labels + raster bytes; the dataset identity."""
    h = hashlib.sha256()
    h.update(_manifest_text(d).encode("utf-8"))
    h.update(_labels_text(d).encode("utf-8"))
    for i in range(len(d)):
        h.update(pgm_bytes(d.images_u8[i]))
    return h.hexdigest()


def save(d: Dataset, path: str | Path) -> str:
    """Write the dataset directory; returns the content hash."""
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "manifest.txt").write_text(_manifest_text(d), encoding="utf-8")
    (root / "labels.csv").write_text(_labels_text(d), encoding="utf-8")
    for i in range(len(d)):
        write_pgm(root / "images" / f"{i:05d}.pgm", d.images_u8[i])
    digest = dataset_hash(d)
    (root / "checksum.txt").write_text(digest + "\n", encoding="utf-8")
    return digest


def _parse_range(v: str) -> tuple[float, float]:
    lo, hi = v.split(",")
    return (float(lo), float(hi))


def load(path: str | Path) -> Dataset:
    """Read a dataset directory; verifies the checksum."""
    root = Path(path)
    manifest: dict[str, str] = {}
    for line in (root / "manifest.txt").read_text(encoding="utf-8").splitlines():
        if line:
            k, _, v = line.partition("=")
            manifest[k] = v
    if manifest.get("format") != FORMAT_TAG:
        raise DatasetFormatError(
            f"unsupported dataset format {manifest.get('format')!r} (want {FORMAT_TAG})"
        )
    plan = CollectionPlan(
        task=manifest["task"],
        offset_range=_parse_range(manifest["offset_range"]),
        depth_range=_parse_range(manifest["depth_range"]),
        angle_range=_parse_range(manifest["angle_range"]),
        slide_x_range=_parse_range(manifest["slide_x_range"]),
        slide_y_range=_parse_range(manifest["slide_y_range"]),
        slide_angle_range=_parse_range(manifest["slide_angle_range"]),
        n_samples=int(manifest["n_samples"]),
        seed=int(manifest["seed"]),
    )
    spec = SensorSpec(
        family=manifest["sensor.family"],
        image_width=int(manifest["sensor.image_width"]),
        image_height=int(manifest["sensor.image_height"]),
        field_w=float(manifest["sensor.field_w"]),
        field_h=float(manifest["sensor.field_h"]),
        marker_count=int(manifest["sensor.marker_count"]),
        marker_radius=float(manifest["sensor.marker_radius"]),
        gel_stiffness=float(manifest["sensor.gel_stiffness"]),
        max_depth=float(manifest["sensor.max_depth"]),
        shear_gain=float(manifest["sensor.shear_gain"]),
        shear_drag=float(manifest["sensor.shear_drag"]),
        noise_sigma=float(manifest["sensor.noise_sigma"]),
        jitter_sigma=float(manifest["sensor.jitter_sigma"]),
        falloff=float(manifest["sensor.falloff"]),
        edge_depth=float(manifest["sensor.edge_depth"]),
        surface_clearance=float(manifest["sensor.surface_clearance"]),
        ambient=float(manifest["sensor.ambient"]),
        light_gain=float(manifest["sensor.light_gain"]),
    )
    n = plan.n_samples
    images = np.empty((n, spec.image_height, spec.image_width), dtype=np.uint8)
    for i in range(n):
        images[i] = read_pgm(root / "images" / f"{i:05d}.pgm")

    labels_text = (root / "labels.csv").read_text(encoding="utf-8")
    lines = labels_text.strip().splitlines()
    if lines[0] != ",".join(LABEL_COLUMNS):
        raise DatasetFormatError("unexpected labels.csv column layout")
    labels = np.empty((n, 2), dtype=np.float64)
    contacts = np.empty((n, 6), dtype=np.float64)
    for line in lines[1:]:
        parts = line.split(",")
        i = int(parts[0])
        offset, angle, depth, sx, sy, sa = (float(x) for x in parts[1:])
        labels[i] = (offset, angle)
        contacts[i] = (offset, depth, angle, sx, sy, sa)

    d = Dataset(plan=plan, spec=spec, images_u8=images, labels=labels, contacts=contacts)
    frac = float(manifest["split_fraction"])
    if frac > 0.0:
        split(d, frac, int(manifest["split_seed"]))

    recorded = (root / "checksum.txt").read_text(encoding="utf-8").strip()
    actual = dataset_hash(d)
    if recorded != actual:
        raise DatasetChecksumError(f"checksum mismatch: recorded {recorded}, actual {actual}")
    return d
