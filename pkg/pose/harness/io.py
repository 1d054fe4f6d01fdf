"""文件读写

JSON 统一通过 share.util.dump_json 写出（浮点数固定 17 位有效数字）。

观测文件: [{"frame": t, "views": [{"camera": id, "points": [[u, v, conf] × K]}]}]
姿态文件: [{"frame": t, "joints": [[x, y, z] × K], "report": {...} | null}]
读取时两者都接受单个帧对象；结构错误抛 MalformedInput。

二进制张量格式（小端）:
    偏移 0   3 字节  magic b"HTM"
    偏移 3   1 字节  dtype 码 b"f" (float32)
    偏移 4   uint32  W
    偏移 8   uint32  H
    偏移 12  uint32  N
    偏移 16  H*W*N 个 float32，(H, W, N) 数组按 C 顺序展开
旁挂 <file>.json: {"kind", "view", "joint", "width", "height", "channels"}
"""
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union
import csv
import logging
import struct

import numpy as np

from share.util import dump_json, format_float, load_json

from ..anatomy.kcs import kcs_map
from ..anatomy.pca import AnatomyPrior, HopPrior, PcaPrior
from ..anatomy.topology import SkeletonTopology
from ..core.errors import CountMismatch, DimensionMismatch, HtPoseError, MalformedInput, ValidationError
from ..core.types import FeatureMap, Heatmap, MultiViewObservation, Pose3D, SolverReport
from ..geometry import CameraParams
from ..plausibility.metrics import MetricReport
from ..plausibility.model import JointAngleModel, OccupancyGrid, PlausibilityModel

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TENSOR_HEADER = struct.Struct("<3sc3I")
TENSOR_MAGIC = b"HTM"
TENSOR_DTYPE = b"f"


@contextmanager
def _parsing(path: PathLike, what: str) -> Iterator[None]:
    """把缺键、类型错误等结构问题统一转换为 MalformedInput"""
    try:
        yield
    except HtPoseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, AttributeError) as e:
        raise MalformedInput(f"{what}文件格式错误 ({path}): {type(e).__name__}: {str(e)}") from e


def _frame_items(data, path: PathLike) -> List[dict]:
    """单帧对象或帧对象数组"""
    if isinstance(data, dict):
        return [data]
    if isinstance(data, list) and all(isinstance(item, dict) for item in data):
        return data
    raise MalformedInput(f"帧文件必须是对象或对象数组: {path}")


# ---- 相机 ----

def save_cameras(cameras: Sequence[CameraParams], path: PathLike) -> Path:
    return dump_json([cam.to_dict() for cam in cameras], path)


def load_cameras(path: PathLike) -> List[CameraParams]:
    with _parsing(path, "相机"):
        data = load_json(path)
        if not isinstance(data, list):
            raise MalformedInput(f"相机文件必须是 JSON 数组: {path}")
        return [CameraParams.from_dict(item) for item in data]


# ---- 观测 ----

def observation_to_dict(obs: MultiViewObservation) -> dict:
    """{"frame", "views": [{"camera", "points": [[u, v, conf], ...]}]}"""
    return {"frame": obs.frame, "views": [
        {"camera": vid, "points": np.column_stack([obs.points[i], obs.confidence[i]])}
        for i, vid in enumerate(obs.view_ids)
    ]}


def observations_to_dict(observations: Sequence[MultiViewObservation]) -> List[dict]:
    return [observation_to_dict(obs) for obs in observations]


def save_observations(observations: Sequence[MultiViewObservation], path: PathLike) -> Path:
    return dump_json(observations_to_dict(observations), path)


def observation_from_dict(item: dict) -> MultiViewObservation:
    frame = int(item["frame"])
    views = item["views"]
    if not isinstance(views, list) or not views:
        raise MalformedInput(f"帧 {frame} 没有视角")
    view_ids, packed = [], []
    for view in views:
        points = np.asarray(view["points"], dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise MalformedInput(f"帧 {frame} 相机 {view['camera']} 的点必须是 [[u, v, conf], ...]: 形状 {points.shape}")
        view_ids.append(int(view["camera"]))
        packed.append(points)
    if len({p.shape[0] for p in packed}) != 1:
        raise MalformedInput(f"帧 {frame} 各视角的关节数不一致: {[p.shape[0] for p in packed]}")
    packed = np.stack(packed)
    return MultiViewObservation(view_ids=view_ids, points=packed[:, :, :2], confidence=packed[:, :, 2], frame=frame)


def load_observations(path: PathLike) -> List[MultiViewObservation]:
    with _parsing(path, "观测"):
        return [observation_from_dict(item) for item in _frame_items(load_json(path), path)]


# ---- 姿态 ----

@dataclass
class PoseRecord:
    """姿态文件中的一帧"""
    frame: int
    pose: Pose3D
    report: Optional[SolverReport] = None


def poses_to_dict(poses: Sequence[Pose3D], reports: Optional[Sequence[Optional[SolverReport]]] = None,
                  frames: Optional[Sequence[int]] = None) -> List[dict]:
    """[{"frame", "joints": [[x, y, z], ...], "report"}]；没有求解报告 (lt/at) 时 report 为 null"""
    reports = reports if reports is not None else [None] * len(poses)
    frames = frames if frames is not None else range(len(poses))
    if not len(reports) == len(frames) == len(poses):
        raise CountMismatch(f"姿态 {len(poses)}、报告 {len(reports)}、帧号 {len(frames)} 数量不一致")
    return [
        {"frame": int(t), "joints": pose.points, "report": report.to_dict() if report is not None else None}
        for pose, report, t in zip(poses, reports, frames)
    ]


def save_poses(poses: Sequence[Pose3D], path: PathLike, reports: Optional[Sequence[Optional[SolverReport]]] = None,
               frames: Optional[Sequence[int]] = None) -> Path:
    return dump_json(poses_to_dict(poses, reports, frames), path)


def load_pose_records(path: PathLike, root_index: int = 0) -> List[PoseRecord]:
    records = []
    with _parsing(path, "姿态"):
        for item in _frame_items(load_json(path), path):
            joints = np.asarray(item["joints"], dtype=float)
            if joints.ndim != 2 or joints.shape[1] != 3:
                raise MalformedInput(f"帧 {item['frame']} 的 joints 必须是 [[x, y, z], ...]: 形状 {joints.shape}")
            report = item.get("report")
            records.append(PoseRecord(int(item["frame"]), Pose3D.from_points(joints, root_index),
                                      SolverReport.from_dict(report) if report else None))
    return records


def load_poses(path: PathLike, root_index: int = 0) -> List[Pose3D]:
    return [record.pose for record in load_pose_records(path, root_index)]


def align_frames(*groups: Sequence) -> List[List]:
    """按帧号排序并要求各组帧号集合相同；元素需有 frame 属性"""
    ordered = [sorted(group, key=lambda item: item.frame) for group in groups]
    frames = [[item.frame for item in group] for group in ordered]
    for other in frames[1:]:
        if other != frames[0]:
            missing = sorted(set(frames[0]) ^ set(other))
            raise CountMismatch(f"帧号不一致 ({len(frames[0])} vs {len(other)} 帧)，差异帧: {missing[:10]}")
    return ordered


# ---- 先验 ----

def prior_to_dicts(prior: AnatomyPrior) -> List[dict]:
    return [e.pca.to_dict(e.lam) for _, e in sorted(prior.entries.items())]


def save_prior(prior: AnatomyPrior, path: PathLike) -> Path:
    """单个 hop 写成对象，多个 hop 写成数组"""
    items = prior_to_dicts(prior)
    return dump_json(items[0] if len(items) == 1 else items, path)


def load_prior(paths: Union[PathLike, Sequence[PathLike]], topology: SkeletonTopology,
               lambdas: Optional[Dict[int, float]] = None) -> AnatomyPrior:
    """读取一个或多个先验文件并合并；lambdas 覆盖文件中的 λ"""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    entries: Dict[int, HopPrior] = {}
    for path in paths:
        with _parsing(path, "先验"):
            data = load_json(path)
            for item in (data if isinstance(data, list) else [data]):
                pca = PcaPrior.from_dict(item)
                if pca.hop in entries:
                    raise ValidationError(f"hop {pca.hop} 在先验文件中重复出现")
                lam = float(item.get("lambda", 0.0))
                if lambdas and pca.hop in lambdas:
                    lam = float(lambdas[pca.hop])
                entries[pca.hop] = HopPrior(kcs_map(topology, pca.hop), pca, lam)
    logger.debug(f"载入先验 hops={sorted(entries)}")
    return AnatomyPrior(topology, entries)


# ---- 合理性模型 ----

def rle_encode(mask: np.ndarray) -> List[int]:
    """行优先展开后的游程，从 False 开始计数"""
    flat = np.asarray(mask, dtype=bool).ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], shape: Tuple[int, int]) -> np.ndarray:
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, np.asarray(runs, dtype=int))
    if flat.size != shape[0] * shape[1]:
        raise DimensionMismatch(f"游程总长 {flat.size} 与形状 {shape} 不符")
    return flat.reshape(shape)


def plausibility_to_dict(model: PlausibilityModel, topology: SkeletonTopology) -> dict:
    return {
        "bin_deg": model.bin_deg,
        "dilate": model.dilate,
        "threshold": model.threshold,
        "bones": [[topology.joints[c], topology.joints[p]] for c, p in topology.bones],
        "reference_lengths": model.reference_lengths,
        "occupancy": {
            name: {"shape": list(grid.grid.shape), "rle": rle_encode(grid.grid)}
            for name, grid in model.occupancy.items()
        },
        "angle_model": model.angle_model.to_dict() if model.angle_model else None,
    }


def save_plausibility(model: PlausibilityModel, topology: SkeletonTopology, path: PathLike) -> Path:
    return dump_json(plausibility_to_dict(model, topology), path)


def load_plausibility(path: PathLike) -> PlausibilityModel:
    with _parsing(path, "合理性模型"):
        data = load_json(path)
        bin_deg, dilate = float(data["bin_deg"]), int(data["dilate"])
        occupancy = {
            name: OccupancyGrid(rle_decode(item["rle"], tuple(item["shape"])), bin_deg, dilate)
            for name, item in data["occupancy"].items()
        }
        angle_model = JointAngleModel.from_dict(data["angle_model"]) if data.get("angle_model") else None
        return PlausibilityModel(np.asarray(data["reference_lengths"], dtype=float), occupancy,
                                 float(data["threshold"]), angle_model)


# ---- 指标报告 ----

def save_report(report: MetricReport, csv_path: PathLike, summary: Optional[dict] = None) -> Tuple[Path, Path]:
    """CSV 每行一个 (frame, metric)，另写 <csv>.json 汇总"""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["frame", "metric", "value"])
        for frame in report.frames:
            for metric in ("mpjpe", "jdr", "l_pj", "l_bl", "mse", "l_ja"):
                value = getattr(frame, metric)
                if value is not None:
                    writer.writerow([frame.frame, metric, format_float(value)])
    json_path = dump_json(summary if summary is not None else report.summary(), csv_path.with_suffix(".json"))
    return csv_path, json_path


def save_sweep(kind: str, rows: Sequence[Tuple[str, Dict[str, float]]], csv_path: PathLike) -> Tuple[Path, Path]:
    """扫描结果：CSV 每行一个 (setting, metric)，<csv>.json 按取值汇总"""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["setting", "metric", "value"])
        for setting, metrics in rows:
            for metric, value in metrics.items():
                writer.writerow([setting, metric, format_float(value)])
    summary = {"kind": kind, "points": [{"setting": s, "metrics": m} for s, m in rows]}
    return csv_path, dump_json(summary, csv_path.with_suffix(".json"))


# ---- 二进制张量 ----

def write_tensor(path: PathLike, array: np.ndarray, kind: str, view: int = -1, joint: int = -1) -> Path:
    """写 (H, W) 或 (H, W, N) 张量及旁挂 JSON"""
    array = np.asarray(array, dtype="<f4")
    if array.ndim == 2:
        array = array[:, :, None]
    if array.ndim != 3:
        raise DimensionMismatch(f"张量必须是 (H, W) 或 (H, W, N): {array.shape}")
    H, W, N = array.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(TENSOR_HEADER.pack(TENSOR_MAGIC, TENSOR_DTYPE, W, H, N))
        f.write(np.ascontiguousarray(array).tobytes(order="C"))
    dump_json({"kind": kind, "view": view, "joint": joint, "width": W, "height": H, "channels": N},
              Path(f"{path}.json"))
    return path


def read_tensor(path: PathLike) -> Tuple[np.ndarray, dict]:
    """返回 ((H, W, N) float32 数组, 旁挂元数据)"""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < TENSOR_HEADER.size:
        raise ValidationError(f"张量文件过短: {path}")
    magic, dtype, W, H, N = TENSOR_HEADER.unpack_from(raw)
    if magic != TENSOR_MAGIC or dtype != TENSOR_DTYPE:
        raise ValidationError(f"张量文件头错误: {magic!r} {dtype!r}")
    expected = TENSOR_HEADER.size + 4 * W * H * N
    if len(raw) != expected:
        raise DimensionMismatch(f"张量文件长度 {len(raw)} 与头部声明 {expected} 不符")
    array = np.frombuffer(raw, dtype="<f4", offset=TENSOR_HEADER.size).reshape(H, W, N)
    meta_path = Path(f"{path}.json")
    meta = load_json(meta_path) if meta_path.exists() else {}
    return array, meta


def save_maps(directory: PathLike, frame: int, heatmaps: Sequence[Sequence[Heatmap]],
              feature_maps: Sequence[FeatureMap]) -> None:
    """frame_{t}/heat_v{c}_j{k}.bin 与 frame_{t}/feat_v{c}.bin"""
    root = Path(directory) / f"frame_{frame:05d}"
    for view_maps in heatmaps:
        for h in view_maps:
            write_tensor(root / f"heat_v{h.view}_j{h.joint:02d}.bin", h.grid, "heatmap", h.view, h.joint)
    for fmap in feature_maps:
        write_tensor(root / f"feat_v{fmap.view}.bin", fmap.grid, "feature", fmap.view)


def load_maps(directory: PathLike, frame: int, view_ids: Sequence[int],
              num_joints: int) -> Tuple[List[List[Heatmap]], List[FeatureMap]]:
    root = Path(directory) / f"frame_{frame:05d}"
    heatmaps, feature_maps = [], []
    for vid in view_ids:
        view_maps = []
        for k in range(num_joints):
            array, _ = read_tensor(root / f"heat_v{vid}_j{k:02d}.bin")
            view_maps.append(Heatmap(array[:, :, 0].astype(float), joint=k, view=vid))
        heatmaps.append(view_maps)
        array, _ = read_tensor(root / f"feat_v{vid}.bin")
        feature_maps.append(FeatureMap(array.astype(float), view=vid))
    return heatmaps, feature_maps


def list_frames(directory: PathLike) -> List[int]:
    return sorted(int(p.name.split("_")[1]) for p in Path(directory).glob("frame_*") if p.is_dir())
