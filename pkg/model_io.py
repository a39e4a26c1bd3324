"""
学習済みモデルのテキスト形式

1 行目がモデル種別のタグ、続いて key=value のメタデータ、[stumps] の後に
選択順で 1 行 1 決定株（`k d t` または `k d a b`）を並べる。
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from learners import CompressionModel, LearnedModel, OccamModel, PacBayesModel, TARGETS
from stumps import DecisionStump, IntervalStump, format_real

logger = logging.getLogger(__name__)

STUMPS_MARKER = "[stumps]"
MODEL_KINDS = ("sc", "occam", "pacbayes", "pacbayes-fixed")


def _join(values) -> str:
    return ",".join(format_real(v) if isinstance(v, float) else str(v) for v in values)


def _split_ints(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.split(",")) if text else ()


def _split_floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(",")) if text else ()


def dumps_model(model: LearnedModel, metadata: Optional[Mapping[str, object]] = None) -> str:
    """
    モデルをテキストに変換

    Args:
        model: 学習済みモデル
        metadata: 追加のメタデータ（属性数・ラベル名・パラメータなど）

    Returns:
        モデルのテキスト
    """
    lines = [f"model {model.kind} {model.target}"]
    for key, value in (metadata or {}).items():
        text = format_real(value) if isinstance(value, float) else str(value)
        if "\n" in text or "=" in key:
            raise ValueError(f"metadata entry {key!r} cannot be serialized")
        lines.append(f"{key}={text}")

    if isinstance(model, CompressionModel):
        lines.append(f"example_indices={_join(model.example_indices)}")
        lines.append(STUMPS_MARKER)
        lines.extend(f"{s.k} {s.d} {format_real(s.t)}" for s in model.stumps)
    elif isinstance(model, OccamModel):
        lines.append(f"bit_lengths={_join(model.bit_lengths)}")
        lines.append(f"code_indices={_join(model.code_indices)}")
        lines.append(f"intervals={','.join(f'{format_real(a)}:{format_real(b)}' for a, b in model.intervals)}")
        lines.append(STUMPS_MARKER)
        lines.extend(f"{s.k} {s.d} {format_real(s.t)}" for s in model.stumps)
    else:
        if model.gamma is not None:
            lines.append(f"gamma={format_real(model.gamma)}")
        lines.append(f"ratios={_join([float(r) for r in model.ratios])}")
        lines.append(STUMPS_MARKER)
        lines.extend(f"{s.k} {s.d} {format_real(s.a)} {format_real(s.b)}" for s in model.stumps)

    return "\n".join(lines) + "\n"


def loads_model(text: str) -> Tuple[LearnedModel, Dict[str, str]]:
    """
    テキストからモデルを復元

    Returns:
        (モデル, メタデータ)
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise ValueError("empty model file")
    tag = lines[0].split()
    if len(tag) != 3 or tag[0] != "model" or tag[1] not in MODEL_KINDS or tag[2] not in TARGETS:
        raise ValueError(f"invalid model tag line: {lines[0]!r}")
    kind, target = tag[1], tag[2]

    metadata: Dict[str, str] = {}
    stump_lines: List[List[str]] = []
    in_stumps = False
    for number, line in enumerate(lines[1:], start=2):
        if line.strip() == STUMPS_MARKER:
            in_stumps = True
        elif in_stumps:
            stump_lines.append(line.split())
        else:
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"line {number}: expected key=value, got {line!r}")
            metadata[key.strip()] = value.strip()

    if kind in ("sc", "occam"):
        stumps = tuple(DecisionStump(int(k), float(t), int(d)) for k, d, t in stump_lines)
        if kind == "sc":
            model: LearnedModel = CompressionModel(
                stumps, _split_ints(metadata.pop("example_indices", "")), target=target
            )
        else:
            intervals = tuple(
                (float(a), float(b))
                for a, b in (pair.split(":") for pair in metadata.pop("intervals", "").split(",") if pair)
            )
            model = OccamModel(
                stumps,
                _split_ints(metadata.pop("bit_lengths", "")),
                _split_ints(metadata.pop("code_indices", "")),
                intervals,
                target=target,
            )
    else:
        gamma = float(metadata.pop("gamma")) if "gamma" in metadata else None
        interval_stumps = tuple(IntervalStump(int(k), float(a), float(b), int(d)) for k, d, a, b in stump_lines)
        model = PacBayesModel(interval_stumps, _split_floats(metadata.pop("ratios", "")), gamma, target=target)
        if (gamma is None) != (kind == "pacbayes"):
            raise ValueError(f"model kind {kind} does not match its gamma entry")

    return model, metadata


def save_model(model: LearnedModel, path: Union[str, Path], metadata: Optional[Mapping[str, object]] = None) -> Path:
    """モデルをファイルに保存"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_model(model, metadata))
    logger.info(f"Model saved: {path}")
    return path


def load_model(path: Union[str, Path]) -> Tuple[LearnedModel, Dict[str, str]]:
    """モデルをファイルから読み込む"""
    return loads_model(Path(path).read_text())
