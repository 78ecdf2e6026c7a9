"""Acceptance suite: one test per release criterion.

Each test prints a single CRITERION line (visible with `pytest -s`, and
repeated in the terminal summary via the hook in conftest).  The two
full-protocol models train once per session; set TACSERVO_TEST_CACHE to a
directory to reuse them across runs while iterating.
"""

import dataclasses
import hashlib
import os
import time
from pathlib import Path

import numpy as np
import pytest

from tacservo import data as dt
from tacservo import posenet as pn
from tacservo import scoring, servo as sv
from tacservo.cli import main as cli_main
from tacservo.config import DEFAULT_CONFIG_TOML, default_config
from tacservo.contours import Circle, CircularWave, Square
from tacservo.servo import ModelPredictor, OraclePredictor, ServoConfig

from conftest import record_criterion
from oracles import brute_force_query

CACHE = os.environ.get("TACSERVO_TEST_CACHE")


def _cached_model(dataset, train_cfg, tag):
    """Train (or reload a cached) full-protocol model."""
    key = None
    if CACHE:
        ident = f"{dt.dataset_hash(dataset)}|{train_cfg}|{tag}"
        key = Path(CACHE) / (hashlib.sha256(ident.encode()).hexdigest()[:24] + ".ckpt")
        if key.exists():
            return pn.PoseNetModel.load(key), None
    model = pn.PoseNetModel(pn.config_for_dataset(dataset), seed=train_cfg.seed)
    result = pn.train(model, dataset, train_cfg)
    if key is not None:
        Path(CACHE).mkdir(parents=True, exist_ok=True)
        model.save(key)
    return model, result


@pytest.fixture(scope="session")
def experiment_config():
    return default_config()


@pytest.fixture(scope="session")
def edge_dataset(experiment_config):
    cfg = experiment_config
    spec = cfg.sensors["marker"]
    plan = dataclasses.replace(cfg.plans["edge"], seed=cfg.seed)
    d = dt.collect(plan, spec)
    dt.split(d, cfg.train_fraction, cfg.seed + 1)
    return d


@pytest.fixture(scope="session")
def edge_model(experiment_config, edge_dataset):
    model, _ = _cached_model(edge_dataset, experiment_config.train, "edge")
    return model


@pytest.fixture(scope="session")
def surface_dataset(experiment_config):
    cfg = experiment_config
    spec = cfg.sensors["marker"]
    plan = dataclasses.replace(cfg.plans["surface"], seed=cfg.seed)
    d = dt.collect(plan, spec)
    dt.split(d, cfg.train_fraction, cfg.seed + 1)
    return d


@pytest.fixture(scope="session")
def surface_model(experiment_config, surface_dataset):
    model, _ = _cached_model(surface_dataset, experiment_config.train, "surface")
    return model


# ---------------------------------------------------------------------------
# criterion 1: gradient correctness


def test_criterion_1_gradient_check():
    t0 = time.perf_counter()
    cfg = pn.NetConfig(
        input_h=8, input_w=8, conv_channels=(2, 2), dense_units=4,
        outputs=2, out_low=(-5.0, -45.0), out_high=(5.0, 45.0),
    )
    model = pn.PoseNetModel(cfg, dtype=np.float64, seed=0)
    for b in model.biases[:-1]:
        b += 0.05  # keep every ReLU away from its kink at eps scale
    rng = np.random.default_rng(1)
    x = rng.random((4, 8, 8, 1))
    y = rng.uniform(-1, 1, (4, 2))
    _, analytic = model.loss_and_gradients(x, y)
    eps = 1e-4
    worst = 0.0
    for arr, g in zip(model.parameters(), analytic):
        flat = arr.ravel()
        gf = np.asarray(g).ravel()
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp, _ = model.loss_and_gradients(x, y)
            flat[i] = old - eps
            lm, _ = model.loss_and_gradients(x, y)
            flat[i] = old
            num = (lp - lm) / (2 * eps)
            rel = abs(num - gf[i]) / max(abs(num) + abs(gf[i]), 1e-8)
            worst = max(worst, rel)
    dt_s = time.perf_counter() - t0
    ok = worst < 1e-4 and dt_s < 10.0
    record_criterion(1, ok, f"max rel err {worst:.2e} over {model.param_count()} params in {dt_s:.1f}s")
    assert worst < 1e-4
    assert dt_s < 10.0


# ---------------------------------------------------------------------------
# criterion 2: contour oracle equivalence


def test_criterion_2_contour_oracle():
    t0 = time.perf_counter()
    shapes = [
        ("circle", {"radius": 50.0}, Circle(50.0)),
        ("square", {"side": 100.0, "fillet": 2.0}, Square(100.0, 2.0)),
        ("circular_wave", {"base_radius": 50.0, "amplitude": 10.0, "waves": 6}, CircularWave()),
    ]
    rng = np.random.default_rng(2)
    worst = 0.0
    for kind, params, shape in shapes:
        for _ in range(200):
            p = (rng.uniform(-75.0, 75.0), rng.uniform(-75.0, 75.0))
            q = shape.query(p)
            near, sd = brute_force_query(kind, params, p, n_samples=100000)
            worst = max(
                worst,
                abs(q.signed_distance - sd),
                float(np.hypot(q.nearest_point[0] - near[0], q.nearest_point[1] - near[1])),
            )
    dt_s = time.perf_counter() - t0
    ok = worst < 1e-3 and dt_s < 30.0
    record_criterion(2, ok, f"3 shapes x 200 points, worst dev {worst:.2e} mm in {dt_s:.1f}s")
    assert worst < 1e-3
    assert dt_s < 30.0


# ---------------------------------------------------------------------------
# criterion 3: controller sanity with oracle sensing


def test_criterion_3_controller_sanity(experiment_config):
    spec = experiment_config.sensors["marker"]
    cfg = ServoConfig(gain_offset=1.0, gain_angle=1.0, advance_step=0.25)
    traj = sv.run(cfg, Circle(50.0), spec, OraclePredictor(), task="edge")
    rep = scoring.score_trace(traj, Circle(50.0), shape="circle", family="oracle")
    open_loop = sv.run(
        ServoConfig(gain_offset=0.0, gain_angle=0.0),
        Square(100.0, 2.0), spec, OraclePredictor(), task="edge",
    )
    ok = (
        traj.status == "closed"
        and rep.position_mae < 0.1
        and rep.angle_mae < 0.5
        and open_loop.status == "lost"
    )
    record_criterion(
        3, ok,
        f"oracle circle: {traj.status}, pos {rep.position_mae:.4f} mm, ang {rep.angle_mae:.3f} deg; "
        f"open-loop square: {open_loop.status}",
    )
    assert traj.status == "closed"
    assert rep.position_mae < 0.1
    assert rep.angle_mae < 0.5
    assert open_loop.status == "lost"


# ---------------------------------------------------------------------------
# criteria 4 + 5: pose regression at the full protocol


def test_criterion_4_edge_pose_accuracy(edge_dataset, edge_model):
    assert len(edge_dataset.train_idx) == 3750 and len(edge_dataset.test_idx) == 1250
    rep = pn.evaluate(edge_model, edge_dataset, "test")
    ok = rep.mae[0] <= 0.3 and rep.mae[1] <= 2.7
    record_criterion(
        4, ok,
        f"edge test MAE {rep.mae[0]:.3f} mm / 10 mm, {rep.mae[1]:.2f} deg / 90 deg "
        f"(3750/1250 split, 100 epochs)",
    )
    assert rep.mae[0] <= 0.3
    assert rep.mae[1] <= 2.7


def test_criterion_4_scatter_slope(edge_dataset, edge_model):
    # prediction-vs-truth best-fit slope near unity for both outputs
    idx = edge_dataset.test_idx
    preds = edge_model.predict(edge_dataset.images_float(idx))
    truths = edge_dataset.labels[idx]
    slopes = []
    for j in range(2):
        t = truths[:, j]
        p = preds[:, j]
        slopes.append(float(np.sum((t - t.mean()) * (p - p.mean())) / np.sum((t - t.mean()) ** 2)))
    assert 0.9 <= slopes[0] <= 1.1
    assert 0.9 <= slopes[1] <= 1.1


def test_criterion_5_surface_pose_accuracy(surface_dataset, surface_model):
    rep = pn.evaluate(surface_model, surface_dataset, "test")
    ok = rep.mae[0] <= 0.12 and rep.mae[1] <= 1.8
    record_criterion(
        5, ok,
        f"surface test MAE {rep.mae[0]:.3f} mm / 4 mm, {rep.mae[1]:.2f} deg / 60 deg",
    )
    assert rep.mae[0] <= 0.12
    assert rep.mae[1] <= 1.8


# ---------------------------------------------------------------------------
# criterion 6: servo tracing with the trained models


def test_criterion_6_servo_tracing(experiment_config, edge_model, surface_model):
    cfg = experiment_config
    spec = cfg.sensors["marker"]
    scfg = cfg.servo
    shapes = {
        "circle": (Circle(50.0), 1.0),
        "square": (Square(100.0, 2.0), 1.5),
        "circular_wave": (CircularWave(), 1.8),
    }
    lines = []
    ok = True
    for name, (contour, limit) in shapes.items():
        traj = sv.run(scfg, contour, spec, ModelPredictor(edge_model), task="edge")
        rep = scoring.score_trace(traj, contour, shape=name, family="marker")
        lines.append(f"edge {name}: {rep.position_mae:.2f} mm ({traj.status})")
        ok = ok and traj.completed and rep.position_mae <= limit
        assert traj.completed, f"edge {name} did not close ({traj.status})"
        assert rep.position_mae <= limit, f"edge {name}: {rep.position_mae:.3f} > {limit}"

    straj = sv.run(scfg, Circle(50.0), spec, ModelPredictor(surface_model), task="surface")
    srep = scoring.score_trace(straj, Circle(50.0), shape="circle", family="marker")
    lines.append(f"surface circle: {srep.position_mae:.2f} mm ({straj.status})")
    ok = ok and straj.completed and srep.position_mae <= 1.2

    record_criterion(6, ok, "; ".join(lines))
    assert straj.completed
    assert srep.position_mae <= 1.2


def test_criterion_6_shading_surface_reports_failure(experiment_config):
    # the stiff shading sensor trains on its narrow depth band and is
    # permitted to fail the surface trace; it must report, not crash
    cfg = experiment_config
    spec = cfg.sensors["shading"]
    plan = dataclasses.replace(
        cfg.plans["surface"],
        offset_range=(-1.0 - spec.max_depth, -1.0),
        n_samples=1500,
        seed=cfg.seed,
    )
    d = dt.collect(plan, spec)
    dt.split(d, cfg.train_fraction, cfg.seed + 1)
    model = pn.PoseNetModel(pn.config_for_dataset(d), seed=cfg.seed)
    pn.train(model, d, dataclasses.replace(cfg.train, epochs=30))
    traj = sv.run(cfg.servo, Circle(50.0), spec, ModelPredictor(model), task="surface")
    rep = scoring.score_trace(traj, Circle(50.0), shape="circle", family="shading")
    record_criterion(
        "6b", True,
        f"shading surface circle ran and reported: {traj.status}, "
        f"pos MAE {rep.position_mae:.2f} mm, completed={rep.completed}",
    )
    assert rep.steps > 0  # it ran and produced a scoreable report


# ---------------------------------------------------------------------------
# criterion 7: reproduce determinism


def _hash_tree(root: Path, patterns) -> dict:
    out = {}
    for pat in patterns:
        for p in sorted(root.rglob(pat)):
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_criterion_7_reproduce_determinism(tmp_path):
    toml = (
        DEFAULT_CONFIG_TOML.replace("samples = 5000", "samples = 120")
        .replace("epochs = 100", "epochs = 3")
    )
    cfg_path = tmp_path / "repro.toml"
    cfg_path.write_text(toml)
    hashes = []
    for run_dir in ("a", "b"):
        out = tmp_path / run_dir
        rc = cli_main(
            ["reproduce", "--config", str(cfg_path), "--out", str(out), "--only", "marker"]
        )
        assert rc in (0, 2)  # toy models may fail traces; they must still report
        hashes.append(_hash_tree(out, ["checksum.txt", "*.ckpt", "traces/*.csv", "*.csv"]))
    ok = hashes[0] == hashes[1] and len(hashes[0]) > 0
    record_criterion(
        7, ok, f"two reproduce runs: {len(hashes[0])} artifacts, byte-identical={ok}"
    )
    assert hashes[0] == hashes[1]


# ---------------------------------------------------------------------------
# criterion 8: shear invariance of the training protocol


def test_criterion_8_shear_invariance(experiment_config):
    cfg = experiment_config
    spec = cfg.sensors["marker"]
    n, epochs = 1500, 40
    train_cfg = dataclasses.replace(cfg.train, epochs=epochs)

    # seed bases must be XOR-disjoint from each other over the index range,
    # otherwise evaluation samples replicate training samples exactly
    plan_slides = dataclasses.replace(cfg.plans["edge"], n_samples=n, seed=11)
    plan_noslides = dataclasses.replace(
        plan_slides,
        slide_x_range=(0.0, 0.0), slide_y_range=(0.0, 0.0), slide_angle_range=(0.0, 0.0),
    )
    eval_sheared = dataclasses.replace(cfg.plans["edge"], n_samples=600, seed=(1 << 20) + 77)
    eval_clean = dataclasses.replace(
        eval_sheared,
        slide_x_range=(0.0, 0.0), slide_y_range=(0.0, 0.0), slide_angle_range=(0.0, 0.0),
    )

    def offset_mae(model, plan):
        d = dt.collect(plan, spec)
        preds = model.predict(d.images_float())
        return float(np.mean(np.abs(preds[:, 0] - d.labels[:, 0])))

    maes = {}
    for tag, plan in (("with", plan_slides), ("without", plan_noslides)):
        d = dt.collect(plan, spec)
        dt.split(d, cfg.train_fraction, cfg.seed + 1)
        model, _ = _cached_model(d, train_cfg, f"shear-{tag}")
        maes[tag] = (offset_mae(model, eval_clean), offset_mae(model, eval_sheared))

    robust_ratio = maes["with"][1] / maes["with"][0]
    naive_ratio = maes["without"][1] / maes["without"][0]
    ok = robust_ratio <= 1.5 and naive_ratio > 2.0
    record_criterion(
        8, ok,
        f"slide-trained: clean {maes['with'][0]:.3f} -> sheared {maes['with'][1]:.3f} mm "
        f"(x{robust_ratio:.2f}); slide-naive: {maes['without'][0]:.3f} -> "
        f"{maes['without'][1]:.3f} mm (x{naive_ratio:.2f})",
    )
    assert robust_ratio <= 1.5
    assert naive_ratio > 2.0


# ---------------------------------------------------------------------------
# criterion 9: format round-trips


def test_criterion_9_format_round_trips(tmp_path):
    from tacservo.tactsim import marker_spec

    spec = marker_spec(image_width=48, image_height=48, marker_count=60, marker_radius=1.5)
    plan = dt.edge_plan(n_samples=10, seed=4)
    d = dt.collect(plan, spec)
    dt.split(d, 0.75, 1)
    h1 = dt.save(d, tmp_path / "ds")
    d2 = dt.load(tmp_path / "ds")
    h2 = dt.save(d2, tmp_path / "ds2")
    dataset_ok = h1 == h2 and dt.dataset_hash(d2) == h1

    cfg = pn.NetConfig(
        input_h=48, input_w=48, conv_channels=(4, 8), dense_units=8,
        outputs=2, out_low=(-5.0, -45.0), out_high=(5.0, 45.0),
    )
    m = pn.PoseNetModel(cfg, seed=5)
    ck1 = m.save(tmp_path / "m.ckpt")
    m2 = pn.PoseNetModel.load(tmp_path / "m.ckpt")
    ck2 = m2.save(tmp_path / "m2.ckpt")
    ckpt_ok = (
        ck1 == ck2
        and (tmp_path / "m.ckpt").read_bytes() == (tmp_path / "m2.ckpt").read_bytes()
    )
    ok = dataset_ok and ckpt_ok
    record_criterion(9, ok, f"dataset hash stable={dataset_ok}, checkpoint bytes stable={ckpt_ok}")
    assert dataset_ok and ckpt_ok
