"""随机数流与确定性序列化工具"""
from pathlib import Path
from typing import Any, Union
import json
import math

import numpy as np

# 各阶段的随机数流编号，新增阶段只能追加
STREAMS = {
    "rig": 0,
    "poses": 1,
    "corruption": 2,
    "features": 3,
    "gmm": 4,
}

FLOAT_FORMAT = "{:.17g}"


def stream_rng(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """由单个 64 位种子派生某阶段的独立随机数流

    使用 SeedSequence(seed, spawn_key=(stream, index)) 初始化计数器型的 Philox，
    各阶段可以单独重跑而互不影响。
    """
    sequence = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=(STREAMS[stream], int(index)))
    return np.random.Generator(np.random.Philox(sequence))


def stream_seed(seed: int, stream: str, index: int = 0) -> int:
    """派生一个 32 位整数种子（给只接受 int 的库使用）"""
    sequence = np.random.SeedSequence(int(seed) & (2 ** 64 - 1), spawn_key=(STREAMS[stream], int(index)))
    return int(sequence.generate_state(1)[0])


def format_float(value: float) -> str:
    """17 位有效数字，保证同一输入得到逐字节相同的输出"""
    if not math.isfinite(value):
        raise ValueError(f"无法序列化非有限浮点数: {value}")
    text = FLOAT_FORMAT.format(value)
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def to_json_text(data: Any, indent: int = 2, _level: int = 0) -> str:
    """json.dumps 的确定性版本：浮点数固定 17 位有效数字"""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(data, dict):
        if not data:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {to_json_text(v, indent, _level + 1)}"
                 for k, v in data.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(data, np.ndarray):
        return to_json_text(data.tolist(), indent, _level)
    if isinstance(data, (list, tuple)):
        if not data:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in data):
            return "[" + ", ".join(to_json_text(v, indent, _level + 1) for v in data) + "]"
        items = [pad + to_json_text(v, indent, _level + 1) for v in data]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(data, (bool, np.bool_)) or data is None:
        return json.dumps(None if data is None else bool(data))
    if isinstance(data, (int, np.integer)):
        return str(int(data))
    if isinstance(data, (float, np.floating)):
        return format_float(float(data))
    return json.dumps(data, ensure_ascii=False)


def dump_json(data: Any, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(to_json_text(data) + "\n")
    return path


def load_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
