"""
データセットの読み込み・検証・書き出し
区切りテキスト形式と、決定株の連言を埋め込んだ合成データの生成
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

import config
from stumps import DecisionStump, StumpConjunction, conjunction_predict, format_real

logger = logging.getLogger(__name__)

# 欠損値として扱うセル
MISSING_TOKENS = {"", "na", "nan", "null", "?"}

# 合成データのクラス比がこの範囲に入るまで再生成する
SYNTH_BALANCE = (0.3, 0.7)
SYNTH_MAX_ATTEMPTS = 1000

PathLike = Union[str, Path]


class DataFormatError(ValueError):
    """入力ファイルの形式エラー（行番号・列名付き）"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column {column!r}")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


@dataclass(frozen=True)
class Dataset:
    """
    ラベル付き（またはラベルなし）の実数値データセット

    X は (m, n)、y は {0, 1} の (m,)、ranges は各属性の [A, B] を並べた (n, 2)。
    配列はすべて読み取り専用。
    """

    X: np.ndarray
    y: Optional[np.ndarray]
    ranges: np.ndarray
    attribute_names: Tuple[str, ...] = ()
    label_names: Tuple[str, str] = ("0", "1")

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be a 2-D array, got shape {X.shape}")
        m, n = X.shape
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")

        y = None
        if self.y is not None:
            y = np.array(self.y, dtype=np.int8)
            if y.shape != (m,):
                raise ValueError(f"y must have shape ({m},), got {y.shape}")
            if np.any((y != 0) & (y != 1)):
                raise ValueError("labels must be 0 or 1")

        ranges = np.array(self.ranges, dtype=np.float64)
        if ranges.shape != (n, 2):
            raise ValueError(f"ranges must have shape ({n}, 2), got {ranges.shape}")
        if np.any(ranges[:, 0] > ranges[:, 1]):
            raise ValueError("every range must satisfy A <= B")
        if m > 0 and (np.any(X < ranges[:, 0]) or np.any(X > ranges[:, 1])):
            bad = int(np.flatnonzero(np.any((X < ranges[:, 0]) | (X > ranges[:, 1]), axis=0))[0])
            raise ValueError(f"attribute {bad} has values outside its range")

        names = tuple(self.attribute_names) or tuple(f"x{i}" for i in range(n))
        if len(names) != n:
            raise ValueError(f"expected {n} attribute names, got {len(names)}")

        for array in (X, y, ranges):
            if array is not None:
                array.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "attribute_names", names)
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def m(self) -> int:
        return int(self.X.shape[0])

    @property
    def n(self) -> int:
        return int(self.X.shape[1])

    @property
    def labeled(self) -> bool:
        return self.y is not None

    @property
    def usable(self) -> np.ndarray:
        """A < B を満たす（決定株を置ける）属性のマスク"""
        return self.ranges[:, 0] < self.ranges[:, 1]

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.y == 1)) if self.labeled else 0

    @property
    def n_negative(self) -> int:
        return int(np.count_nonzero(self.y == 0)) if self.labeled else 0

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """例の部分集合（範囲はそのまま引き継ぐ）"""
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(
            X=self.X[indices],
            y=None if self.y is None else self.y[indices],
            ranges=self.ranges,
            attribute_names=self.attribute_names,
            label_names=self.label_names,
        )

    def with_ranges(self, ranges) -> "Dataset":
        return Dataset(self.X, self.y, ranges, self.attribute_names, self.label_names)

    def with_inferred_ranges(self) -> "Dataset":
        return self.with_ranges(infer_ranges(self.X))

    def swap_labels(self) -> "Dataset":
        """正例と負例を入れ替える（選言の学習用）"""
        if self.y is None:
            raise ValueError("cannot swap labels of an unlabeled dataset")
        return Dataset(
            X=self.X,
            y=1 - self.y,
            ranges=self.ranges,
            attribute_names=self.attribute_names,
            label_names=(self.label_names[1], self.label_names[0]),
        )


def infer_ranges(X) -> np.ndarray:
    """
    各属性の観測値の最小値・最大値を範囲とする

    Args:
        X: (m, n) の配列、または Dataset

    Returns:
        (n, 2) の配列
    """
    if isinstance(X, Dataset):
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("range inference requires at least one example")
    return np.column_stack([X.min(axis=0), X.max(axis=0)])


def degenerate_attributes(ranges) -> List[int]:
    """A = B の属性番号"""
    ranges = np.asarray(ranges, dtype=np.float64)
    return [int(i) for i in np.flatnonzero(ranges[:, 0] == ranges[:, 1])]


def _resolve_column(header: List[str], label_column: Union[str, int]) -> int:
    if isinstance(label_column, int) or (isinstance(label_column, str) and label_column.lstrip("-").isdigit()):
        index = int(label_column)
        if index < 0:
            index += len(header)
        if not 0 <= index < len(header):
            raise DataFormatError(f"label column index {label_column} out of range", line=1)
        return index
    if label_column not in header:
        raise DataFormatError(f"label column {label_column!r} not found in header", line=1)
    return header.index(label_column)


def _parse_cell(cell: str, line: int, column: str, fill_value: float) -> float:
    token = cell.strip()
    if token.lower() in MISSING_TOKENS:
        return fill_value
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"non-numeric value {cell!r}", line=line, column=column) from None
    if not np.isfinite(value):
        raise DataFormatError(f"non-finite value {cell!r}", line=line, column=column)
    return value


def _map_labels(
    labels: List[str],
    label_lines: List[int],
    column: str,
    positive_label: Optional[str],
    label_names: Optional[Tuple[str, str]],
) -> Tuple[np.ndarray, Tuple[str, str]]:
    seen: List[str] = []
    for label, line in zip(labels, label_lines):
        if label not in seen:
            seen.append(label)
            if len(seen) > 2:
                raise DataFormatError(f"more than two distinct labels: {sorted(seen)}", line=line, column=column)

    if label_names is not None:
        names = tuple(label_names)
        for label, line in zip(labels, label_lines):
            if label not in names:
                raise DataFormatError(f"unknown label {label!r}, expected one of {list(names)}", line=line, column=column)
    elif positive_label is not None:
        if positive_label not in seen:
            raise DataFormatError(f"positive label {positive_label!r} does not occur", column=column)
        others = [label for label in seen if label != positive_label]
        if not others:
            raise DataFormatError("label column needs two distinct values", column=column)
        names = (others[0], positive_label)
    else:
        if len(seen) < 2:
            raise DataFormatError("label column needs two distinct values", column=column)
        # 辞書順で小さい方を 0 とする
        ordered = sorted(seen)
        names = (ordered[0], ordered[1])

    y = np.array([1 if label == names[1] else 0 for label in labels], dtype=np.int8)
    return y, (names[0], names[1])


def read_ranges(path: PathLike, attribute_names: Sequence[str]) -> np.ndarray:
    """
    範囲ファイル（1 行に `名前 A B`）を読み込む

    Args:
        path: 範囲ファイルのパス
        attribute_names: データセットの属性名

    Returns:
        (n, 2) の配列
    """
    position = {name: i for i, name in enumerate(attribute_names)}
    ranges = np.full((len(attribute_names), 2), np.nan)
    with Path(path).open() as handle:
        for line_number, line in enumerate(handle, start=1):
            fields = line.split()
            if not fields or fields[0].startswith("#"):
                continue
            if len(fields) != 3:
                raise DataFormatError(f"expected 'name A B', got {len(fields)} fields", line=line_number)
            name = fields[0]
            if name not in position:
                raise DataFormatError(f"unknown attribute {name!r}", line=line_number, column=name)
            try:
                lower, upper = float(fields[1]), float(fields[2])
            except ValueError:
                raise DataFormatError("non-numeric range bound", line=line_number, column=name) from None
            if lower > upper:
                raise DataFormatError("range requires A <= B", line=line_number, column=name)
            ranges[position[name]] = (lower, upper)

    missing = [attribute_names[i] for i in np.flatnonzero(np.isnan(ranges[:, 0]))]
    if missing:
        raise DataFormatError(f"no range given for attributes {missing[:5]}")
    return ranges


def load_delimited(
    path: PathLike,
    label_column: Optional[Union[str, int]] = "label",
    delimiter: str = config.DATA_CONFIG["delimiter"],
    positive_label: Optional[str] = None,
    ranges_path: Optional[PathLike] = None,
    fill_value: float = config.DATA_CONFIG["fill_value"],
    label_names: Optional[Tuple[str, str]] = None,
) -> Dataset:
    """
    ヘッダ付きの区切りテキストを読み込む

    Args:
        path: 入力ファイル
        label_column: ラベル列の名前または番号（None ならラベルなし）
        delimiter: 区切り文字
        positive_label: 1 に対応させるラベル（省略時は辞書順で大きい方）
        ranges_path: 範囲ファイル（省略時は観測値から推定）
        fill_value: 欠損セルを埋める値
        label_names: 既知のラベル名 (0 側, 1 側)。予測時に学習時の対応を再現する

    Returns:
        Dataset
    """
    path = Path(path)
    logger.info(f"Loading dataset: {path}")

    with path.open(newline="") as handle:
        reader = csv.reader(handle, delimiter=delimiter)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise DataFormatError("empty file", line=1) from None

        label_index = None if label_column is None else _resolve_column(header, label_column)
        attribute_names = tuple(name for i, name in enumerate(header) if i != label_index)

        rows: List[List[float]] = []
        labels: List[str] = []
        label_lines: List[int] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, found {len(row)}", line=line)
            values = []
            for column, cell in enumerate(row):
                if column == label_index:
                    labels.append(cell.strip())
                    label_lines.append(line)
                else:
                    values.append(_parse_cell(cell, line, header[column], fill_value))
            rows.append(values)

    if len(rows) < 2:
        raise DataFormatError(f"at least 2 examples required, found {len(rows)}")

    X = np.array(rows, dtype=np.float64)
    y = None
    names: Tuple[str, str] = ("0", "1")
    if label_index is not None:
        y, names = _map_labels(labels, label_lines, header[label_index], positive_label, label_names)
    elif label_names is not None:
        names = tuple(label_names)  # type: ignore[assignment]

    ranges = read_ranges(ranges_path, attribute_names) if ranges_path else infer_ranges(X)
    degenerate = degenerate_attributes(ranges)
    if degenerate:
        logger.warning(f"{len(degenerate)} attributes have A = B and will never be used")

    dataset = Dataset(X=X, y=y, ranges=ranges, attribute_names=attribute_names, label_names=names)
    logger.info(f"Loaded {dataset.m} examples with {dataset.n} attributes")
    return dataset


def write_delimited(dataset: Dataset, path: PathLike, delimiter: str = ",", label_column: str = "label") -> None:
    """Dataset を区切りテキストとして書き出す（値は往復で変わらない）"""
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, delimiter=delimiter, lineterminator="\n")
        header = list(dataset.attribute_names)
        if dataset.labeled:
            header.append(label_column)
        writer.writerow(header)
        for i in range(dataset.m):
            row = [format_real(v) for v in dataset.X[i]]
            if dataset.labeled:
                row.append(dataset.label_names[int(dataset.y[i])])
            writer.writerow(row)


def write_ranges(dataset: Dataset, path: PathLike) -> None:
    """範囲ファイルを書き出す"""
    with Path(path).open("w") as handle:
        for name, (lower, upper) in zip(dataset.attribute_names, dataset.ranges):
            handle.write(f"{name} {format_real(lower)} {format_real(upper)}\n")


class SynthSpec(BaseModel):
    """合成データの生成条件"""

    n: int = Field(ge=1, description="属性数")
    m: int = Field(ge=4, description="例の数")
    r: int = Field(ge=1, description="埋め込む決定株の数")
    noise: float = Field(default=0.0, ge=0.0, lt=0.5, description="ラベル反転確率")
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_informative_count(self):
        if self.r > self.n:
            raise ValueError(f"r={self.r} informative attributes exceed n={self.n}")
        return self


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    planted: StumpConjunction
    spec: SynthSpec


def synth_generate(spec: SynthSpec) -> SynthResult:
    """
    決定株の連言でラベル付けした一様乱数データを生成

    各決定株は確率 0.5^(1/r) で 1 を出すので、連言が 1 になる確率は 1/2。
    ラベルは確率 noise で反転する。同じ生成条件からは常に同じデータが得られる。

    Args:
        spec: 生成条件

    Returns:
        SynthResult
    """
    rng = np.random.default_rng(spec.seed)
    informative = np.sort(rng.choice(spec.n, size=spec.r, replace=False))
    directions = rng.choice(np.array([-1, 1]), size=spec.r)
    q = 0.5 ** (1.0 / spec.r)
    thresholds = np.where(directions > 0, 1.0 - q, q)
    planted = StumpConjunction(
        tuple(DecisionStump(int(k), float(t), int(d)) for k, t, d in zip(informative, thresholds, directions))
    )

    for attempt in range(SYNTH_MAX_ATTEMPTS):
        X = rng.uniform(0.0, 1.0, size=(spec.m, spec.n))
        y = np.asarray(conjunction_predict(planted, X), dtype=np.int8)
        flips = rng.random(spec.m) < spec.noise
        y = np.where(flips, 1 - y, y)
        balance = float(y.mean())
        if SYNTH_BALANCE[0] <= balance <= SYNTH_BALANCE[1]:
            break
        logger.debug(f"Resampling synthetic data (attempt {attempt}, positive fraction {balance:.3f})")
    else:
        raise RuntimeError(f"could not reach class balance in {SYNTH_MAX_ATTEMPTS} attempts")

    dataset = Dataset(
        X=X,
        y=y,
        ranges=infer_ranges(X),
        attribute_names=tuple(f"g{i}" for i in range(spec.n)),
    )
    logger.info(f"Generated synthetic dataset: m={spec.m}, n={spec.n}, r={spec.r}, noise={spec.noise}")
    return SynthResult(dataset=dataset, planted=planted, spec=spec)


def write_manifest(result: SynthResult, path: PathLike) -> None:
    """合成データのマニフェスト（生成条件と埋め込んだ決定株）"""
    lines = [f"{key}={value}" for key, value in result.spec.model_dump().items()]
    lines.append("[planted]")
    lines.extend(f"{s.k} {s.d} {format_real(s.t)}" for s in result.planted.stumps)
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path: PathLike) -> Tuple[SynthSpec, StumpConjunction]:
    """write_manifest の出力を読み込む"""
    values = {}
    stumps: List[DecisionStump] = []
    in_planted = False
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.strip() == "[planted]":
            in_planted = True
        elif in_planted:
            k, d, t = line.split()
            stumps.append(DecisionStump(int(k), float(t), int(d)))
        else:
            key, _, value = line.partition("=")
            values[key] = value
    return SynthSpec(**values), StumpConjunction(tuple(stumps))

