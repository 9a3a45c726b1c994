"""Merge predictions from several ranked models.

The best model's instances are kept as they are. Each further model, in rank
order, contributes only instances that are unlike everything merged so far,
with their scores discounted by ``score_penalty ** rank``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .elements import MapInstance
from .errors import InvalidArgumentError
from .evalm import chamfer
from .topo import MapFrame, TopoHeadParams, predict_topology


@dataclass(frozen=True)
class ModelRanking:
    model_ids: tuple[str, ...]

    def __post_init__(self):
        ids = tuple(str(m) for m in self.model_ids)
        if not ids or len(set(ids)) != len(ids):
            raise InvalidArgumentError("ranking needs at least one model and unique ids")
        object.__setattr__(self, "model_ids", ids)

    @classmethod
    def from_scores(cls, scores: Mapping[str, float]) -> "ModelRanking":
        """Best score first; equal scores fall back to id order."""
        return cls(tuple(sorted(scores, key=lambda m: (-scores[m], m))))


def instance_similarity(a: MapInstance, b: MapInstance) -> float:
    if a.cls is not b.cls:
        return 0.0
    return 1.0 / (1.0 + chamfer(a, b))


def ensemble_instances(ranked_outputs: Sequence[Sequence[MapInstance]], tau_sim: float = 0.5,
                       score_penalty: float = 0.9) -> list[MapInstance]:
    """Base model's instances plus low-similarity proposals from the lower-ranked ones."""
    if not ranked_outputs:
        raise InvalidArgumentError("need at least one model's predictions")
    if not 0.0 <= score_penalty <= 1.0:
        raise InvalidArgumentError("score penalty must lie in [0, 1]")
    merged = list(ranked_outputs[0])
    for rank, proposals in enumerate(ranked_outputs[1:], start=1):
        factor = score_penalty**rank
        for inst in proposals:
            best = max((instance_similarity(inst, m) for m in merged), default=0.0)
            if best < tau_sim:
                merged.append(inst.with_score(inst.score * factor))
    return merged


def ensemble_frames(ranked_frames: Sequence[MapFrame], tau_sim: float = 0.5, score_penalty: float = 0.9,
                    topo_params: Optional[TopoHeadParams] = None) -> MapFrame:
    """Merge one scene across models.

    Traffic elements come from the base model. When topology parameters are
    given, the graph is recomputed on the merged lanes; otherwise it is left
    empty rather than merged edge by edge.
    """
    if not ranked_frames:
        raise InvalidArgumentError("need at least one model's frame")
    base = ranked_frames[0]
    merged = ensemble_instances([f.instances for f in ranked_frames], tau_sim, score_penalty)
    frame = MapFrame(merged, base.traffic_elements, None, base.image_size)
    if topo_params is not None and frame.lanes():
        graph = predict_topology([i.geometry for i in frame.lanes()], frame.traffic_elements, topo_params,
                                 frame.image_size)
        frame = MapFrame(merged, base.traffic_elements, graph, base.image_size)
    return frame
