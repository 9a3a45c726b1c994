"""File formats: JSON documents for maps, scenes and sequences, and a binary tensor container.

Binary files hold one or more tensor records back to back. Each record is::

    b"VMKT" | version u32 | dtype u32 | rank u32 | dims u64 * rank | payload

all little-endian, payload row-major. Parameter bundles start with a ``uint8``
record carrying a UTF-8 JSON manifest that describes the tensors after it.

JSON documents carry ``version`` and ``kind`` fields and are validated with
strict schemas (unknown keys are rejected). Every writer goes through a temp
file and a rename, and output is a pure function of its input.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .elements import BoundaryAttr, MapClass, MapInstance
from .errors import InvalidArgumentError, SchemaError, StorageError
from .geom import Polyline, SE3Pose
from .nnkern import MlpParams
from .svt import BevGridSpec, CameraModel, FeatureGrid
from .synth import Scene, SceneConfig, TeAnchor
from .topo import DEFAULT_IMAGE_SIZE, MapFrame, TopoHeadParams, TopologyGraph, TrafficElement

FORMAT_VERSION = 1
MAGIC = b"VMKT"
DTYPE_CODES = {
    np.dtype("<f4"): 1,
    np.dtype("<f8"): 2,
    np.dtype("u1"): 3,
    np.dtype("<i4"): 4,
    np.dtype("<i8"): 5,
}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}
_HEADER = struct.Struct("<4sIII")


# -- atomic writes ------------------------------------------------------------


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.chmod(tmp, 0o666 & ~_umask())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc.strerror or exc}") from exc


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc.strerror or exc}") from exc


# -- tensor container ---------------------------------------------------------


def encode_tensor(array) -> bytes:
    a = np.asarray(array)
    dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
    if dt == np.dtype("<u1") or dt == np.dtype("|u1"):
        dt = np.dtype("u1")
    if dt not in DTYPE_CODES:
        raise InvalidArgumentError(f"dtype {a.dtype} is not storable")
    a = np.asarray(a, dtype=dt, order="C")  # ascontiguousarray would promote 0-d to 1-d
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_CODES[dt], a.ndim)
    return head + struct.pack(f"<{a.ndim}Q", *a.shape) + a.tobytes(order="C")


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """One record starting at ``offset``; returns the array and the offset after it."""
    if len(buf) - offset < _HEADER.size:
        raise SchemaError(f"truncated tensor header at byte {offset}")
    magic, version, code, rank = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise SchemaError(f"bad magic {magic!r} at byte {offset}")
    if version != FORMAT_VERSION:
        raise SchemaError(f"unsupported container version {version}")
    if code not in CODE_DTYPES:
        raise SchemaError(f"unknown dtype code {code}")
    offset += _HEADER.size
    if len(buf) - offset < 8 * rank:
        raise SchemaError("truncated tensor dims")
    dims = struct.unpack_from(f"<{rank}Q", buf, offset)
    offset += 8 * rank
    dt = CODE_DTYPES[code]
    nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
    if len(buf) - offset < nbytes:
        raise SchemaError(f"truncated payload: need {nbytes} bytes, have {len(buf) - offset}")
    a = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=offset).reshape(dims).copy()
    return a, offset + nbytes


def decode_tensors(buf: bytes) -> list[np.ndarray]:
    out, offset = [], 0
    while offset < len(buf):
        a, offset = decode_tensor(buf, offset)
        out.append(a)
    return out


def write_tensor(path, array) -> None:
    atomic_write_bytes(path, encode_tensor(array))


def read_tensor(path) -> np.ndarray:
    tensors = decode_tensors(read_bytes(path))
    if len(tensors) != 1:
        raise SchemaError(f"{path}: expected one tensor record, found {len(tensors)}")
    return tensors[0]


def write_bundle(path, manifest: dict, tensors) -> None:
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    body = encode_tensor(np.frombuffer(head, dtype=np.uint8)) + b"".join(encode_tensor(t) for t in tensors)
    atomic_write_bytes(path, body)


def read_bundle(path) -> tuple[dict, list[np.ndarray]]:
    records = decode_tensors(read_bytes(path))
    if not records or records[0].dtype != np.uint8 or records[0].ndim != 1:
        raise SchemaError(f"{path}: missing manifest record")
    try:
        manifest = json.loads(records[0].tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: unreadable manifest: {exc}") from exc
    return manifest, records[1:]


def save_topo_params(path, params: TopoHeadParams, extra: Optional[dict] = None) -> None:
    manifest = {
        "kind": "topo_params",
        "version": FORMAT_VERSION,
        "layers": [len(m.weights) for m in (params.lane_mlp, params.te_mlp, params.ll_mlp, params.lt_mlp)],
        "points_per_lane": params.points_per_lane,
        "n_te_classes": params.n_te_classes,
        "coord_scale": list(params.coord_scale),
        "extra": extra or {},
    }
    write_bundle(path, manifest, params.tensors())


def load_topo_params(path) -> TopoHeadParams:
    manifest, tensors = read_bundle(path)
    if manifest.get("kind") != "topo_params":
        raise SchemaError(f"{path}: not a topology parameter file")
    try:
        mlps, i = [], 0
        for n in manifest["layers"][:2]:
            mlps.append(MlpParams.from_tensors(tensors[i : i + 2 * n]))
            i += 2 * n
        wq, wk, wv = tensors[i : i + 3]
        i += 3
        n_ll, n_lt = manifest["layers"][2:]
        ll = MlpParams.from_tensors(tensors[i : i + 2 * n_ll])
        lt = MlpParams.from_tensors(tensors[i + 2 * n_ll : i + 2 * n_ll + 2 * n_lt])
        if i + 2 * n_ll + 2 * n_lt != len(tensors):
            raise SchemaError(f"{path}: tensor count does not match manifest")
        return TopoHeadParams(mlps[0], mlps[1], wq, wk, wv, ll, lt, int(manifest["points_per_lane"]),
                              int(manifest["n_te_classes"]), tuple(manifest["coord_scale"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: inconsistent parameter bundle: {exc}") from exc


# -- JSON schemas -------------------------------------------------------------


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InstanceDoc(_Doc):
    cls: MapClass
    points: list[list[float]]
    score: float = 1.0
    corner_indices: Optional[list[int]] = None
    left_offset: Optional[list[float]] = None
    right_offset: Optional[list[float]] = None
    left_attr: BoundaryAttr = BoundaryAttr.NONE
    right_attr: BoundaryAttr = BoundaryAttr.NONE

    @field_validator("points")
    @classmethod
    def _point_width(cls, v):
        if any(len(p) not in (2, 3) for p in v):
            raise ValueError("every point needs 2 or 3 coordinates")
        return v


class TrafficElementDoc(_Doc):
    bbox: tuple[float, float, float, float]
    category: int
    score: float = 1.0


class TopologyDoc(_Doc):
    ll: list[list[float]]
    lt: list[list[float]]
    threshold: float = 0.5


class FrameDoc(_Doc):
    instances: list[InstanceDoc] = []
    traffic_elements: list[TrafficElementDoc] = []
    topology: Optional[TopologyDoc] = None
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE


class MapDoc(FrameDoc):
    version: Literal[1]
    kind: Literal["map"]


class MapSetDoc(_Doc):
    version: Literal[1]
    kind: Literal["map_set"]
    frames: list[FrameDoc]


class PoseDoc(_Doc):
    rotation: list[list[float]]
    translation: list[float]


class CameraDoc(_Doc):
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: PoseDoc


class GridSpecDoc(_Doc):
    rows: int
    cols: int
    x_range: tuple[float, float]
    y_range: tuple[float, float]


class SequenceFrameDoc(_Doc):
    frame_id: int
    pose: PoseDoc
    grid: str
    lidar: Optional[str] = None
    depth: Optional[list[Optional[str]]] = None


class SequenceDoc(_Doc):
    version: Literal[1]
    kind: Literal["sequence"]
    scene_seed: Optional[int] = None
    grid_spec: GridSpecDoc
    channels: int
    cameras: list[CameraDoc] = []
    frames: list[SequenceFrameDoc]


class AnchorDoc(_Doc):
    position: tuple[float, float, float]
    category: int
    size: tuple[float, float]


class SceneDoc(_Doc):
    version: Literal[1]
    kind: Literal["scene"]
    seed: int
    config: dict[str, Any]
    instances: list[InstanceDoc]
    topology: TopologyDoc
    te_anchors: list[AnchorDoc]


# -- conversions --------------------------------------------------------------


def _floats(a) -> list:
    return np.asarray(a, dtype=np.float64).tolist()


def instance_to_dict(inst: MapInstance) -> dict:
    d: dict[str, Any] = {"cls": inst.cls.value, "points": _floats(inst.points), "score": float(inst.score)}
    if inst.corner_indices is not None:
        d["corner_indices"] = list(inst.corner_indices)
    for name in ("left_offset", "right_offset"):
        v = getattr(inst, name)
        if v is not None:
            d[name] = _floats(v)
    if inst.left_attr is not BoundaryAttr.NONE:
        d["left_attr"] = inst.left_attr.value
    if inst.right_attr is not BoundaryAttr.NONE:
        d["right_attr"] = inst.right_attr.value
    return d


def instance_from_doc(doc: InstanceDoc) -> MapInstance:
    cls = MapClass(doc.cls)
    return MapInstance(cls, Polyline(doc.points, closed=cls.closed), doc.score, doc.corner_indices,
                       doc.left_offset, doc.right_offset, doc.left_attr, doc.right_attr)


def topology_to_dict(g: TopologyGraph) -> dict:
    return {"ll": _floats(g.ll_scores), "lt": _floats(g.lt_scores), "threshold": float(g.threshold)}


def topology_from_doc(doc: TopologyDoc, n_t: Optional[int] = None) -> TopologyGraph:
    n = len(doc.ll)
    if any(len(r) != n for r in doc.ll):
        raise InvalidArgumentError("ll matrix must be square")
    widths = {len(r) for r in doc.lt}
    if len(doc.lt) != n or len(widths) > 1:
        raise InvalidArgumentError("lt matrix must have one equal-length row per lane")
    t = widths.pop() if widths else (n_t or 0)
    return TopologyGraph(np.asarray(doc.ll, float).reshape(n, n), np.asarray(doc.lt, float).reshape(n, t),
                         doc.threshold)


def frame_to_dict(frame: MapFrame) -> dict:
    d: dict[str, Any] = {
        "instances": [instance_to_dict(i) for i in frame.instances],
        "traffic_elements": [{"bbox": list(te.bbox), "category": te.category, "score": te.score}
                             for te in frame.traffic_elements],
    }
    if frame.topology is not None:
        d["topology"] = topology_to_dict(frame.topology)
    d["image_size"] = list(frame.image_size)
    return d


def frame_from_doc(doc: FrameDoc) -> MapFrame:
    tes = [TrafficElement(t.bbox, t.category, t.score) for t in doc.traffic_elements]
    topo = None if doc.topology is None else topology_from_doc(doc.topology, len(tes))
    return MapFrame([instance_from_doc(i) for i in doc.instances], tes, topo, tuple(doc.image_size))


def pose_to_dict(p: SE3Pose) -> dict:
    return {"rotation": _floats(p.rotation), "translation": _floats(p.translation)}


def pose_from_doc(doc: PoseDoc) -> SE3Pose:
    return SE3Pose(np.asarray(doc.rotation, float), np.asarray(doc.translation, float))


def camera_to_dict(c: CameraModel) -> dict:
    return {"fx": float(c.fx), "fy": float(c.fy), "cx": float(c.cx), "cy": float(c.cy), "width": int(c.width),
            "height": int(c.height), "extrinsic": pose_to_dict(c.extrinsic)}


def camera_from_doc(doc: CameraDoc) -> CameraModel:
    return CameraModel(doc.fx, doc.fy, doc.cx, doc.cy, doc.width, doc.height, pose_from_doc(doc.extrinsic))


def grid_spec_to_dict(s: BevGridSpec) -> dict:
    return {"rows": s.rows, "cols": s.cols, "x_range": list(s.x_range), "y_range": list(s.y_range)}


def grid_spec_from_doc(doc: GridSpecDoc) -> BevGridSpec:
    return BevGridSpec(doc.rows, doc.cols, tuple(doc.x_range), tuple(doc.y_range))


# -- document I/O -------------------------------------------------------------


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def write_json(path, doc: dict) -> None:
    atomic_write_text(path, dumps(doc))


def load_json(path) -> Any:
    text = read_bytes(path).decode("utf-8", errors="replace")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if 0 < exc.lineno <= len(text.splitlines()) else ""
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n  {line.strip()}") from exc


def validate_doc(model, raw, path):
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise SchemaError(f"{path}: {where}: {first['msg']} ({exc.error_count()} error(s))") from exc


def _build(fn, path, *args):
    try:
        return fn(*args)
    except InvalidArgumentError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _kind(raw, path) -> str:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise SchemaError(f"{path}: top level must be an object with a 'kind' field")
    return raw["kind"]


def write_map(path, frame: MapFrame) -> None:
    write_json(path, {"version": FORMAT_VERSION, "kind": "map", **frame_to_dict(frame)})


def write_map_set(path, frames) -> None:
    write_json(path, {"version": FORMAT_VERSION, "kind": "map_set", "frames": [frame_to_dict(f) for f in frames]})


def read_frames(path) -> list[MapFrame]:
    """Frames from a ``map`` (one frame) or ``map_set`` document."""
    raw = load_json(path)
    kind = _kind(raw, path)
    if kind == "map":
        doc = validate_doc(MapDoc, raw, path)
        return [_build(frame_from_doc, path, doc)]
    if kind == "map_set":
        doc = validate_doc(MapSetDoc, raw, path)
        return [_build(frame_from_doc, f"{path}: frames.{k}", f) for k, f in enumerate(doc.frames)]
    raise SchemaError(f"{path}: expected a map or map_set document, got kind {kind!r}")


def read_map(path) -> MapFrame:
    frames = read_frames(path)
    if len(frames) != 1:
        raise SchemaError(f"{path}: expected a single map, found {len(frames)} frames")
    return frames[0]


def scene_to_dict(scene) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": "scene",
        "seed": int(scene.seed),
        "config": asdict(scene.config),
        "instances": [instance_to_dict(i) for i in scene.instances],
        "topology": topology_to_dict(scene.topology),
        "te_anchors": [{"position": list(a.position), "category": a.category, "size": list(a.size)}
                       for a in scene.te_anchors],
    }


def write_scene(path, scene) -> None:
    write_json(path, scene_to_dict(scene))


def read_scene(path):
    raw = load_json(path)
    if _kind(raw, path) != "scene":
        raise SchemaError(f"{path}: expected a scene document")
    doc = validate_doc(SceneDoc, raw, path)

    def build():
        try:
            config = SceneConfig(**doc.config)
        except TypeError as exc:
            raise InvalidArgumentError(f"scene config: {exc}") from exc
        anchors = [TeAnchor(tuple(a.position), a.category, tuple(a.size)) for a in doc.te_anchors]
        return Scene([instance_from_doc(i) for i in doc.instances], topology_from_doc(doc.topology, len(anchors)),
                     anchors, doc.seed, config)

    return _build(build, path)


def read_sequence(path) -> SequenceDoc:
    raw = load_json(path)
    if _kind(raw, path) != "sequence":
        raise SchemaError(f"{path}: expected a sequence document")
    return validate_doc(SequenceDoc, raw, path)


def sequence_to_dict(doc: SequenceDoc) -> dict:
    return doc.model_dump(mode="json", exclude_none=True)


def load_grid(path, spec: BevGridSpec, channels: int):
    """A ``(C, rows, cols)`` float32 grid file as a FeatureGrid."""
    a = read_tensor(path)
    if a.shape != (channels, spec.rows, spec.cols):
        raise SchemaError(f"{path}: grid shape {a.shape} != {(channels, spec.rows, spec.cols)}")
    return FeatureGrid(spec, a.astype(np.float32, copy=False))

