"""Run configuration: every module default in one strict, JSON-loadable document."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from .elements import MapClass
from .errors import InvalidArgumentError
from .evalm import DistanceFn, EvalConfig
from .htf import FusionMode, StackingConfig
from .io import load_json, validate_doc
from .matchloss import CostWeights
from .svt import BevGridSpec, DepthBins
from .synth import LidarConfig, SceneConfig
from .topo import TopoTrainConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BevSection(_Section):
    rows: int = 100
    cols: int = 200
    x_range: tuple[float, float] = (-50.0, 50.0)
    y_range: tuple[float, float] = (-25.0, 25.0)


class DepthSection(_Section):
    d_min: float = 1.0
    d_max: float = 56.0
    bin_width: float = 1.0


class SceneSection(_Section):
    n_lanes: int = 2
    intersections: int = 1
    length: float = 200.0
    section_length: float = 50.0
    lane_width: float = 3.5
    cross_lanes: int = 2
    cross_length: float = 30.0
    height_amplitude: float = 0.3
    sample_spacing: float = 1.0


class SequenceSection(_Section):
    n_frames: int = 48
    spacing: float = 0.5
    lane: int = 0
    lidar: bool = False
    lidar_azimuth: int = 720
    lidar_max_range: float = 50.0
    depth_stride: int = 8


class FusionSection(_Section):
    mode: FusionMode = FusionMode.STREAMING_STACKING
    n: int = 4
    m: int = 10
    test_strides: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    phase: Literal["train", "test"] = "test"
    buffer_capacity: int = 64
    gru_kernel: int = 3
    gru_scale: float = 0.1
    stack: Literal["average", "passthrough"] = "average"


class LossSection(_Section):
    lam_cls: float = 2.0
    lam_pts: float = 5.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25


class EvalSection(_Section):
    thresholds: tuple[float, ...] = (1.0, 2.0, 3.0)
    lane_distance: DistanceFn = DistanceFn.FRECHET
    other_distance: DistanceFn = DistanceFn.CHAMFER
    te_iou_thresholds: tuple[float, ...] = (0.5, 0.75)
    topology_threshold: float = 0.5
    uniscore_weights: tuple[float, float, float, float, float] = (1.0, 1.0, 1.0, 1.0, 1.0)


class EnsembleSection(_Section):
    tau_sim: float = 0.5
    score_penalty: float = 0.9


class TopoSection(_Section):
    train_scenes: int = 600
    test_scenes: int = 100
    n_lanes: int = 8
    n_tes: int = 2
    epochs: int = 80
    lr: float = 0.02
    momentum: float = 0.9
    batch_scenes: int = 32
    d_model: int = 64
    hidden: int = 128
    grad_clip: float = 5.0
    time_budget_s: Optional[float] = None


class RunConfig(_Section):
    seed: int = Field(0, ge=0, lt=2**64)
    bev: BevSection = BevSection()
    depth: DepthSection = DepthSection()
    scene: SceneSection = SceneSection()
    sequence: SequenceSection = SequenceSection()
    fusion: FusionSection = FusionSection()
    loss: LossSection = LossSection()
    eval: EvalSection = EvalSection()
    ensemble: EnsembleSection = EnsembleSection()
    topo: TopoSection = TopoSection()

    def grid_spec(self) -> BevGridSpec:
        return BevGridSpec(self.bev.rows, self.bev.cols, self.bev.x_range, self.bev.y_range)

    def depth_bins(self) -> DepthBins:
        return DepthBins(self.depth.d_min, self.depth.d_max, self.depth.bin_width)

    def scene_config(self) -> SceneConfig:
        return SceneConfig(**self.scene.model_dump())

    def lidar_config(self) -> LidarConfig:
        return LidarConfig(n_azimuth=self.sequence.lidar_azimuth, max_range=self.sequence.lidar_max_range)

    def stacking(self) -> StackingConfig:
        f = self.fusion
        return StackingConfig(f.n, f.m, f.test_strides, f.phase)

    def cost_weights(self) -> CostWeights:
        return CostWeights(self.loss.lam_cls, self.loss.lam_pts)

    def eval_config(self) -> EvalConfig:
        e = self.eval
        distance = {c: (e.lane_distance if c is MapClass.LANE_SEGMENT else e.other_distance) for c in MapClass}
        return EvalConfig(e.thresholds, distance, e.te_iou_thresholds, e.topology_threshold, e.uniscore_weights)

    def topo_train_config(self) -> TopoTrainConfig:
        t = self.topo
        return TopoTrainConfig(t.epochs, t.lr, t.momentum, t.batch_scenes, t.d_model, t.hidden, t.grad_clip,
                               self.seed, t.time_budget_s)

    def check(self) -> "RunConfig":
        """Build every domain object once so bad values fail early."""
        self.grid_spec(), self.depth_bins(), self.scene_config(), self.lidar_config()
        self.stacking(), self.cost_weights(), self.eval_config(), self.topo_train_config()
        if not 0.0 <= self.ensemble.score_penalty <= 1.0:
            raise InvalidArgumentError("ensemble.score_penalty must lie in [0, 1]")
        if self.fusion.buffer_capacity < self.fusion.m:
            raise InvalidArgumentError("fusion.buffer_capacity must hold at least m frames")
        if self.topo.train_scenes < 1 or self.topo.test_scenes < 1:
            raise InvalidArgumentError("topo needs at least one train and one test scene")
        if self.sequence.depth_stride < 1:
            raise InvalidArgumentError("sequence.depth_stride must be >= 1")
        return self


def load_config(path=None, seed: Optional[int] = None) -> RunConfig:
    """Defaults, overlaid by a JSON file, then by an explicit seed."""
    raw = {} if path is None else load_json(path)
    cfg = validate_doc(RunConfig, raw, path or "<defaults>")
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg.check()
