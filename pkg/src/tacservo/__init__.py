"""tacservo: simulated optical-tactile sensing, pose regression and
tactile servo control on parametric 2D test shapes."""

from .contours import Circle, CircularWave, Contour, ContourQuery, Square, make_contour
from .data import CollectionPlan, Dataset, Sample, collect, edge_plan, load, save, split, surface_plan
from .geometry import FeaturePose, Pose2p5, PoseError, TcpOffset, apply_tcp, compose, inverse, unapply_tcp
from .posenet import EvalReport, NetConfig, PoseNetModel, TrainConfig, evaluate, train
from .scoring import TraceReport, score_trace, summarize
from .servo import ModelPredictor, OraclePredictor, ServoConfig, Trajectory, run
from .tactsim import (
    ContactParams,
    SensorSpec,
    TactileImage,
    digitac_spec,
    marker_spec,
    penetration,
    render,
    rest_frame,
    shading_spec,
)

__version__ = "0.1.0"
