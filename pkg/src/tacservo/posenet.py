"""Pose-regression convolutional network with built-in backprop and SGD.

Architecture (configurable): stacked 3x3 stride-2 valid convolutions with
ReLU, flatten, one ReLU dense layer, linear output head.  Outputs are
normalized to [-1, 1] per label range during training and de-normalized to
native units (mm, degrees) on prediction.  Loss is mean squared error on the
normalized outputs; the optimizer is SGD with momentum.

The convolution uses a phase-split im2col: stride-2 taps are gathered from
four contiguous half-resolution copies of the input, which turns the
strided gathers into row-contiguous memcpys (2-3x faster end to end on
CPU).  All large buffers live in a per-batch-size workspace so the training
loop allocates nothing per step.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .rng import SplitMix64
from .tactsim import TactileImage

CHECKPOINT_MAGIC = b"TSCKPT01"


class TrainingDivergedError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    input_h: int = 128
    input_w: int = 128
    conv_channels: tuple[int, ...] = (16, 32, 32)
    kernel: int = 3
    stride: int = 2
    dense_units: int = 64
    outputs: int = 2
    out_low: tuple[float, ...] = (-5.0, -45.0)
    out_high: tuple[float, ...] = (5.0, 45.0)

    def conv_shapes(self) -> list[tuple[int, int, int, int]]:
        """(in_h, in_w, in_c, out_c) per conv layer."""
        h, w, c = self.input_h, self.input_w, 1
        shapes = []
        for oc in self.conv_channels:
            shapes.append((h, w, c, oc))
            h = (h - self.kernel) // self.stride + 1
            w = (w - self.kernel) // self.stride + 1
            if h < 1 or w < 1:
                raise ValueError("input too small for the configured conv stack")
            c = oc
        return shapes

    def flat_features(self) -> int:
        h, w, c = self.input_h, self.input_w, 1
        for oc in self.conv_channels:
            h = (h - self.kernel) // self.stride + 1
            w = (w - self.kernel) // self.stride + 1
            c = oc
        return h * w * c


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 1e-3
    momentum: float = 0.9
    seed: int = 0


@dataclass(frozen=True)
class EvalReport:
    names: tuple[str, ...]
    mae: tuple[float, ...]
    ranges: tuple[tuple[float, float], ...]

    @property
    def fractions(self) -> tuple[float, ...]:
        return tuple(m / (hi - lo) for m, (lo, hi) in zip(self.mae, self.ranges))

    def rows(self) -> list[str]:
        """'MAE / range' formatting, one row per output."""
        out = []
        for name, m, (lo, hi) in zip(self.names, self.mae, self.ranges):
            unit = "mm" if "mm" in name else "deg"
            out.append(f"{name}: {m:.3f} {unit} / {hi - lo:g} {unit} ({100 * m / (hi - lo):.2f}%)")
        return out


class _ConvWorkspace:
    def __init__(self, n: int, shape: tuple[int, int, int, int], k: int, s: int, dtype):
        h, w, c, oc = shape
        self.oh = (h - k) // s + 1
        self.ow = (w - k) // s + 1
        self.k, self.s, self.c = k, s, c
        self.ph = [(h - a + s - 1) // s for a in range(s)]
        self.pw = [(w - b + s - 1) // s for b in range(s)]
        self.phases = [
            [np.empty((n, self.ph[a], self.pw[b], c), dtype) for b in range(s)] for a in range(s)
        ]
        self.cols = np.empty((n, self.oh, self.ow, k * k * c), dtype)
        self.z = np.empty((n, self.oh, self.ow, oc), dtype)
        self.mask = np.empty((n, self.oh, self.ow, oc), dtype=bool)
        self.dz = np.empty((n, self.oh, self.ow, oc), dtype)
        self.dcols = np.empty((n, self.oh, self.ow, k * k * c), dtype)


class _Workspace:
    def __init__(self, n: int, cfg: NetConfig, dtype):
        self.n = n
        self.conv = [
            _ConvWorkspace(n, shp, cfg.kernel, cfg.stride, dtype) for shp in cfg.conv_shapes()
        ]
        f = cfg.flat_features()
        self.h1 = np.empty((n, cfg.dense_units), dtype)
        self.mask1 = np.empty((n, cfg.dense_units), dtype=bool)
        self.out = np.empty((n, cfg.outputs), dtype)
        self.dh1 = np.empty((n, cfg.dense_units), dtype)
        self.dflat = np.empty((n, f), dtype)


def _im2col(x: np.ndarray, ws: _ConvWorkspace, n: int) -> np.ndarray:
    k, s, c = ws.k, ws.s, ws.c
    for a in range(s):
        for b in range(s):
            np.copyto(ws.phases[a][b][:n], x[:, a::s, b::s, :])
    cols = ws.cols[:n]
    for ky in range(k):
        for kx in range(k):
            slot = (ky * k + kx) * c
            src = ws.phases[ky % s][kx % s][:n][
                :, ky // s : ky // s + ws.oh, kx // s : kx // s + ws.ow, :
            ]
            np.copyto(cols[..., slot : slot + c], src)
    return cols


def _col2im(ws: _ConvWorkspace, n: int, dx: np.ndarray) -> None:
    k, s, c = ws.k, ws.s, ws.c
    for a in range(s):
        for b in range(s):
            ws.phases[a][b][:n].fill(0.0)
    dcols = ws.dcols[:n]
    for ky in range(k):
        for kx in range(k):
            slot = (ky * k + kx) * c
            dst = ws.phases[ky % s][kx % s][:n][
                :, ky // s : ky // s + ws.oh, kx // s : kx // s + ws.ow, :
            ]
            dst += dcols[..., slot : slot + c]
    for a in range(s):
        for b in range(s):
            dx[:, a::s, b::s, :] = ws.phases[a][b][:n]


class PoseNetModel:
    """Image -> (offset mm, angle deg) regressor."""

    def __init__(self, cfg: NetConfig, dtype=np.float32, seed: int = 0):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        self._ws: dict[int, _Workspace] = {}
        self.init_params(seed)

    # parameters ----------------------------------------------------------
    def _param_shapes(self) -> list[tuple[tuple[int, int], int]]:
        cfg = self.cfg
        k = cfg.kernel
        shapes = []
        for (_, _, c, oc) in cfg.conv_shapes():
            shapes.append(((k * k * c, oc), oc))
        f = cfg.flat_features()
        shapes.append(((f, cfg.dense_units), cfg.dense_units))
        shapes.append(((cfg.dense_units, cfg.outputs), cfg.outputs))
        return shapes

    def init_params(self, seed: int) -> None:
        """Seeded uniform init with fan-in scaling, zero biases."""
        rng = SplitMix64(seed)
        self.weights = []
        self.biases = []
        for (wshape, blen) in self._param_shapes():
            fan_in = wshape[0]
            a = math.sqrt(6.0 / fan_in)
            w = rng.uniform(-a, a, wshape[0] * wshape[1]).reshape(wshape)
            self.weights.append(w.astype(self.dtype))
            self.biases.append(np.zeros(blen, dtype=self.dtype))

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    # normalization --------------------------------------------------------
    def normalize_labels(self, y: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.cfg.out_low)
        hi = np.asarray(self.cfg.out_high)
        return 2.0 * (y - lo) / (hi - lo) - 1.0

    def denormalize(self, o: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.cfg.out_low)
        hi = np.asarray(self.cfg.out_high)
        return (np.asarray(o, dtype=np.float64) + 1.0) / 2.0 * (hi - lo) + lo

    # forward / backward ---------------------------------------------------
    def _workspace(self, n: int) -> _Workspace:
        ws = self._ws.get(n)
        if ws is None:
            ws = _Workspace(n, self.cfg, self.dtype)
            self._ws[n] = ws
        return ws

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if x.ndim == 3:
            x = x[..., None]
        if x.shape[1] != cfg.input_h or x.shape[2] != cfg.input_w or x.shape[3] != 1:
            raise ValueError(
                f"input shape {x.shape[1:]} does not match model input "
                f"({cfg.input_h}, {cfg.input_w}, 1)"
            )
        return np.ascontiguousarray(x, dtype=self.dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Normalized outputs (n, outputs); x is (n, H, W[, 1]) in [0, 1]."""
        x = self._check_input(x)
        if x.shape[0] > 64:
            # evaluate large sets in chunks to bound workspace memory
            return np.concatenate(
                [self._forward_ws(x[i : i + 64]) for i in range(0, x.shape[0], 64)],
                axis=0,
            )
        return self._forward_ws(x)

    def _forward_ws(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        ws = self._workspace(n)
        act = x
        for li, cw in enumerate(ws.conv):
            cols = _im2col(act, cw, n)
            z2 = cw.z[:n].reshape(-1, cw.z.shape[-1])
            np.matmul(cols.reshape(z2.shape[0], -1), self.weights[li], out=z2)
            z2 += self.biases[li]
            z = cw.z[:n]
            np.greater(z, 0.0, out=cw.mask[:n])
            np.maximum(z, 0.0, out=z)
            act = z
        flat = act.reshape(n, -1)
        h1 = ws.h1[:n]
        np.matmul(flat, self.weights[-2], out=h1)
        h1 += self.biases[-2]
        np.greater(h1, 0.0, out=ws.mask1[:n])
        np.maximum(h1, 0.0, out=h1)
        out = ws.out[:n]
        np.matmul(h1, self.weights[-1], out=out)
        out += self.biases[-1]
        return out.copy()

    def predict(self, images: np.ndarray) -> np.ndarray:
        """De-normalized predictions in native units."""
        return self.denormalize(self.forward(images))

    def predict_one(self, image: TactileImage) -> tuple[float, float]:
        y = self.predict(image.pixels[None, ...])
        return (float(y[0, 0]), float(y[0, 1]))

    def loss_and_gradients(
        self, x: np.ndarray, y_norm: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        """Mean-squared-error on normalized outputs and d(loss)/d(param).

        Gradient list matches parameters(): conv weights, dense weights,
        then all biases in the same layer order.
        """
        x = self._check_input(x)
        n = x.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        ws = self._workspace(n)
        out = self._forward_ws(x)
        if out.shape != y_norm.shape:
            raise ValueError("label batch shape mismatch")
        diff = out - y_norm.astype(self.dtype)
        loss = float(np.mean(diff.astype(np.float64) ** 2))

        dW: list[np.ndarray | None] = [None] * len(self.weights)
        dB: list[np.ndarray | None] = [None] * len(self.biases)
        dout = (2.0 / diff.size) * diff
        h1 = ws.h1[:n]
        dW[-1] = h1.T @ dout
        dB[-1] = dout.sum(axis=0)
        dh1 = ws.dh1[:n]
        np.matmul(dout, self.weights[-1].T, out=dh1)
        dh1 *= ws.mask1[:n]

        last_conv = ws.conv[-1]
        flat = last_conv.z[:n].reshape(n, -1)
        dW[-2] = flat.T @ dh1
        dB[-2] = dh1.sum(axis=0)
        dflat = ws.dflat[:n]
        np.matmul(dh1, self.weights[-2].T, out=dflat)

        for li in range(len(ws.conv) - 1, -1, -1):
            cw = ws.conv[li]
            dz = cw.dz[:n]
            if li == len(ws.conv) - 1:
                np.copyto(dz, dflat.reshape(dz.shape))
            # for earlier layers _col2im already wrote the gradient into dz
            dz *= cw.mask[:n]
            dz2 = dz.reshape(-1, dz.shape[-1])
            cols2 = cw.cols[:n].reshape(dz2.shape[0], -1)
            dW[li] = cols2.T @ dz2
            dB[li] = dz2.sum(axis=0)
            if li > 0:
                prev = ws.conv[li - 1]
                dcols2 = cw.dcols[:n].reshape(dz2.shape[0], -1)
                np.matmul(dz2, self.weights[li].T, out=dcols2)
                _col2im(cw, n, prev.dz[:n])
        return loss, [g for g in dW] + [g for g in dB]  # type: ignore[list-item]

    # persistence -----------------------------------------------------------
    def save(self, path: str | Path) -> str:
        """Versioned binary checkpoint; returns the sha256 content hash."""
        header = {
            "format": 1,
            "input_h": self.cfg.input_h,
            "input_w": self.cfg.input_w,
            "conv_channels": list(self.cfg.conv_channels),
            "kernel": self.cfg.kernel,
            "stride": self.cfg.stride,
            "dense_units": self.cfg.dense_units,
            "outputs": self.cfg.outputs,
            "out_low": list(self.cfg.out_low),
            "out_high": list(self.cfg.out_high),
        }
        hdr = json.dumps(header, sort_keys=True).encode("utf-8")
        blob = bytearray()
        blob += CHECKPOINT_MAGIC
        blob += struct.pack("<I", len(hdr))
        blob += hdr
        for arr in self.parameters():
            blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
        digest = hashlib.sha256(bytes(blob)).digest()
        blob += digest
        Path(path).write_bytes(bytes(blob))
        return digest.hex()

    @classmethod
    def load(cls, path: str | Path) -> "PoseNetModel":
        blob = Path(path).read_bytes()
        if len(blob) < len(CHECKPOINT_MAGIC) + 4 + 32:
            raise CheckpointError("checkpoint truncated")
        if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise CheckpointError("bad checkpoint magic")
        body, digest = blob[:-32], blob[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise CheckpointError("checkpoint checksum mismatch")
        pos = len(CHECKPOINT_MAGIC)
        (hlen,) = struct.unpack_from("<I", body, pos)
        pos += 4
        header = json.loads(body[pos : pos + hlen].decode("utf-8"))
        pos += hlen
        if header.get("format") != 1:
            raise CheckpointError(f"unsupported checkpoint format {header.get('format')!r}")
        cfg = NetConfig(
            input_h=header["input_h"],
            input_w=header["input_w"],
            conv_channels=tuple(header["conv_channels"]),
            kernel=header["kernel"],
            stride=header["stride"],
            dense_units=header["dense_units"],
            outputs=header["outputs"],
            out_low=tuple(header["out_low"]),
            out_high=tuple(header["out_high"]),
        )
        model = cls(cfg, dtype=np.float32, seed=0)
        for arr in model.parameters():
            count = arr.size * 4
            if pos + count > len(body):
                raise CheckpointError("checkpoint parameter block truncated")
            vals = np.frombuffer(body[pos : pos + count], dtype="<f4").reshape(arr.shape)
            np.copyto(arr, vals)
            pos += count
        if pos != len(body):
            raise CheckpointError("trailing bytes in checkpoint")
        return model


def config_for_dataset(dataset: Dataset, **overrides) -> NetConfig:
    """Network config matched to a dataset's image size and label ranges."""
    (olo, ohi), (alo, ahi) = dataset.plan.label_ranges
    base = dict(
        input_h=dataset.spec.image_height,
        input_w=dataset.spec.image_width,
        out_low=(olo, alo),
        out_high=(ohi, ahi),
    )
    base.update(overrides)
    return NetConfig(**base)


@dataclass
class TrainResult:
    model: PoseNetModel
    loss_history: list[float] = field(default_factory=list)


def train(model: PoseNetModel, dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """SGD-with-momentum training on the dataset's train split."""
    idx = dataset.train_idx
    if len(idx) == 0:
        raise ValueError("dataset has no train split; call data.split first")
    x = dataset.images_float(idx)
    y = model.normalize_labels(dataset.labels[idx])
    n = len(idx)
    b = cfg.batch_size
    rng = SplitMix64(cfg.seed)
    params = model.parameters()
    vel = [np.zeros_like(p) for p in params]
    history: list[float] = []
    for epoch in range(cfg.epochs):
        perm = rng.shuffle(n)
        total = 0.0
        for start in range(0, n, b):
            sel = perm[start : start + b]
            loss, grads = model.loss_and_gradients(x[sel], y[sel])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"training diverged at epoch {epoch}: loss={loss}"
                )
            total += loss * len(sel)
            for p, v, g in zip(params, vel, grads):
                v *= cfg.momentum
                v -= cfg.learning_rate * g.astype(p.dtype, copy=False)
                p += v
        history.append(total / n)
    return TrainResult(model=model, loss_history=history)


def evaluate(
    model: PoseNetModel, dataset: Dataset, subset: str = "test"
) -> EvalReport:
    """Per-output MAE in native units over a dataset split."""
    if subset == "test":
        idx = dataset.test_idx
    elif subset == "train":
        idx = dataset.train_idx
    else:
        raise ValueError("subset must be 'train' or 'test'")
    if len(idx) == 0:
        raise ValueError(f"dataset has an empty {subset} split")
    preds = model.predict(dataset.images_float(idx))
    mae = np.mean(np.abs(preds - dataset.labels[idx]), axis=0)
    if dataset.plan.task == "surface":
        names = ("depth position (mm)", "angle (deg)")
    else:
        names = ("edge position (mm)", "angle (deg)")
    ranges = tuple(
        (lo, hi) for lo, hi in zip(model.cfg.out_low, model.cfg.out_high)
    )
    return EvalReport(names=names, mae=tuple(float(m) for m in mae), ranges=ranges)


def adaptive_threshold(
    pixels: np.ndarray, window: int = 11, bias: float = 0.02
) -> np.ndarray:
    """Binarize an externally captured image: pixel > local mean - bias.

    Mean over a window x window box via a summed-area table; edges use the
    clipped window.
    """
    p = pixels.astype(np.float64)
    h, w = p.shape
    ii = np.zeros((h + 1, w + 1))
    ii[1:, 1:] = np.cumsum(np.cumsum(p, axis=0), axis=1)
    r = window // 2
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - r, 0, h)[:, None]
    y1 = np.clip(ys + r + 1, 0, h)[:, None]
    x0 = np.clip(xs - r, 0, w)[None, :]
    x1 = np.clip(xs + r + 1, 0, w)[None, :]
    area = (y1 - y0) * (x1 - x0)
    total = ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]
    local_mean = total / area
    return (p > local_mean - bias).astype(np.float32)
