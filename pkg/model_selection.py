"""
入れ子交差検証とパラメータグリッド

順列ごとに層化した外側の分割を作り、外側の訓練集合だけで内側の交差検証を行って
パラメータを選ぶ。外側の各セル（順列 × 分割）は独立に実行できる。
"""

import logging
from collections import Counter
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field
from sklearn.model_selection import ParameterGrid, StratifiedKFold

import config
from data import Dataset
from learners import (
    LearnedModel,
    LearnerParams,
    OccamModel,
    PacBayesModel,
    model_bound,
    train_model,
    training_errors,
)
from model_io import dumps_model

logger = logging.getLogger(__name__)

RANGE_SCOPES = ("train", "full", "external")

# 既定グリッド
P_VALUES = (0.5, 1.0, 2.0, 4.0)
ETA_VALUES = (0.0, 0.01, 0.1, 0.5, 1.0)
V_VALUES = tuple(range(1, 11))
GAMMA_FACTORS = (0.05, 0.1, 0.2, 0.4)
# p の候補に置くと訓練集合の例の数に置き換わる
TRAINING_SIZE = "m"

BASE_COLUMNS = ["Name", "ex", "Genes", "Errs", "S"]
TABLE_COLUMNS: Dict[str, List[str]] = {
    "sc": BASE_COLUMNS,
    "occam": BASE_COLUMNS + ["bits"],
    "pacbayes": BASE_COLUMNS + ["Ratio", "G-errs", "B-errs", "Bound"],
    "pacbayes-fixed": BASE_COLUMNS + ["Bound"],
}


class CVPlan(BaseModel):
    """入れ子交差検証の設定"""

    outer_folds: int = Field(default=config.CV_CONFIG["outer_folds"], ge=2)
    inner_folds: int = Field(default=config.CV_CONFIG["inner_folds"], ge=2)
    permutations: int = Field(default=config.CV_CONFIG["permutations"], ge=1)
    seed: int = Field(default=config.CV_CONFIG["seed"], ge=0, lt=2**64)
    grid: Dict[str, List[float]] = Field(default_factory=dict)
    n_jobs: int = Field(default=config.CV_CONFIG["n_jobs"])
    range_scope: Literal["train", "full", "external"] = "train"
    fit_final: bool = False


class FoldRecord(BaseModel):
    """外側の 1 分割の結果"""

    permutation: int
    fold: int
    train_size: int
    test_size: int
    params: Dict[str, float] = Field(default_factory=dict)
    grid_point: Dict[str, Union[int, float, str]] = Field(default_factory=dict)
    train_errors: Optional[int] = None
    test_errors: Optional[int] = None
    model_size: Optional[int] = None
    attributes: List[int] = Field(default_factory=list)
    gibbs_test_errors: Optional[float] = None
    bayes_test_errors: Optional[int] = None
    bound: Optional[float] = None
    bayes_bound: Optional[float] = None
    ratio: Optional[float] = None
    bits: Optional[int] = None
    error: Optional[str] = None


def _mean_std(values: Sequence[float]) -> Tuple[float, float]:
    if len(values) == 0:
        return float("nan"), float("nan")
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


class CVResult(BaseModel):
    """入れ子交差検証の結果（集計値はすべて records から計算する）"""

    name: str
    learner: str
    target: str
    m: int
    n: int
    permutations: int
    outer_folds: int
    records: List[FoldRecord]
    final_params: Dict[str, float] = Field(default_factory=dict)
    final_model: Optional[str] = None

    @property
    def completed(self) -> List[FoldRecord]:
        return [r for r in self.records if r.error is None]

    @property
    def failed_folds(self) -> int:
        return len(self.records) - len(self.completed)

    def _per_permutation(self, field: str) -> List[float]:
        totals: Dict[int, float] = {}
        for record in self.completed:
            value = getattr(record, field)
            if value is not None:
                totals[record.permutation] = totals.get(record.permutation, 0.0) + float(value)
        return [totals[p] for p in sorted(totals)]

    @property
    def permutation_errors(self) -> List[float]:
        """順列ごとのテスト誤りの合計"""
        return self._per_permutation("test_errors")

    @property
    def errors(self) -> Tuple[float, float]:
        return _mean_std(self.permutation_errors)

    @property
    def model_size(self) -> Tuple[float, float]:
        return _mean_std([r.model_size for r in self.completed if r.model_size is not None])

    @property
    def gibbs_errors(self) -> Tuple[float, float]:
        return _mean_std(self._per_permutation("gibbs_test_errors"))

    @property
    def bayes_errors(self) -> Tuple[float, float]:
        return _mean_std(self._per_permutation("bayes_test_errors"))

    @property
    def bound_times_m(self) -> float:
        """上界の平均に例の数を掛けた値"""
        values = [r.bound * self.m for r in self.completed if r.bound is not None]
        return float(np.mean(values)) if values else float("nan")

    @property
    def mean_ratio(self) -> float:
        values = [r.ratio for r in self.completed if r.ratio is not None]
        return float(np.mean(values)) if values else float("nan")

    @property
    def modal_bits(self) -> Optional[int]:
        values = [r.bits for r in self.completed if r.bits is not None]
        return Counter(values).most_common(1)[0][0] if values else None

    @property
    def modal_attributes(self) -> List[int]:
        """最も多く選ばれた属性集合"""
        values = [tuple(r.attributes) for r in self.completed]
        return list(Counter(values).most_common(1)[0][0]) if values else []

    @property
    def modal_params(self) -> Dict[str, float]:
        values = [tuple(sorted(r.params.items())) for r in self.completed]
        return dict(Counter(values).most_common(1)[0][0]) if values else {}

    @property
    def modal_grid_point(self) -> Dict[str, Any]:
        """最も多く選ばれたグリッドの点（相対値のまま）"""
        values = [tuple(sorted(r.grid_point.items())) for r in self.completed]
        return dict(Counter(values).most_common(1)[0][0]) if values else {}

    def summary(self) -> Dict:
        errors_mean, errors_std = self.errors
        size_mean, size_std = self.model_size
        summary = {
            "name": self.name,
            "learner": self.learner,
            "target": self.target,
            "m": self.m,
            "n": self.n,
            "errors_mean": errors_mean,
            "errors_std": errors_std,
            "size_mean": size_mean,
            "size_std": size_std,
            "failed_folds": self.failed_folds,
            "modal_attributes": self.modal_attributes,
        }
        if self.learner == "occam":
            summary["modal_bits"] = self.modal_bits
        if self.learner in ("pacbayes", "pacbayes-fixed"):
            summary["gibbs_errors_mean"], summary["gibbs_errors_std"] = self.gibbs_errors
            summary["bayes_errors_mean"], summary["bayes_errors_std"] = self.bayes_errors
            summary["bound_times_m"] = self.bound_times_m
            summary["ratio_mean"] = self.mean_ratio
        return summary


def _seed_state(*entropy: int) -> int:
    """64 ビットのシードから scikit-learn 用の 32 ビットのシードを作る"""
    return int(np.random.SeedSequence([int(e) for e in entropy]).generate_state(1)[0])


def stratified_kfold(m: int, labels, k: int, seed: int) -> List[np.ndarray]:
    """
    層化 k 分割

    Args:
        m: 例の数
        labels: (m,) のラベル
        k: 分割数
        seed: シード

    Returns:
        互いに素な k 個の添字配列（昇順）
    """
    if k < 2:
        raise ValueError(f"at least 2 folds required, got k={k}")
    if k > m:
        raise ValueError(f"k={k} folds exceed m={m} examples")
    labels = np.asarray(labels)
    if labels.shape != (m,):
        raise ValueError(f"labels must have shape ({m},), got {labels.shape}")
    splitter = StratifiedKFold(n_splits=k, shuffle=True, random_state=_seed_state(seed))
    return [np.sort(test) for _, test in splitter.split(np.zeros((m, 1)), labels)]


def range_scale(dataset: Dataset) -> float:
    """使用可能な属性の範囲幅の中央値"""
    widths = (dataset.ranges[:, 1] - dataset.ranges[:, 0])[dataset.usable]
    return float(np.median(widths)) if widths.size else 1.0


def default_grid(kind: str) -> Dict[str, List[Any]]:
    """
    学習器ごとの既定グリッド

    p の候補 TRAINING_SIZE と gamma_factor は相対値で、resolve_point で訓練集合ごとに具体化する。

    Args:
        kind: 学習器のキー

    Returns:
        パラメータ名から値のリストへの辞書
    """
    config.get_learner_info(kind)
    grid: Dict[str, List[Any]] = {"p": list(P_VALUES) + [TRAINING_SIZE]}
    if kind in ("occam", "pacbayes"):
        grid["eta"] = list(ETA_VALUES)
    if kind == "pacbayes-fixed":
        grid["gamma_factor"] = list(GAMMA_FACTORS)
    grid["v_max"] = list(V_VALUES)
    return grid


def resolve_point(point: Dict[str, Any], m: int, scale: float) -> Dict[str, float]:
    """
    グリッドの点の相対値を具体的な値にする

    Args:
        point: グリッドの点
        m: 訓練集合の例の数
        scale: 訓練集合の範囲の尺度（range_scale）

    Returns:
        学習器のパラメータ名から値への辞書
    """
    resolved: Dict[str, float] = {}
    for name, value in point.items():
        if name == "gamma_factor":
            resolved["gamma"] = float(value) * scale
        elif isinstance(value, str) and value == TRAINING_SIZE:
            resolved[name] = float(m)
        else:
            resolved[name] = value
    return resolved


def _resolve_points(points: List[Dict[str, Any]], train: Dataset) -> List[Dict[str, float]]:
    scale = range_scale(train)
    return [resolve_point(point, train.m, scale) for point in points]


def validate_grid(kind: str, grid: Dict[str, List[Any]]) -> None:
    applicable = set(config.get_learner_params(kind))
    if "gamma" in applicable:
        applicable.add("gamma_factor")
    for name, values in grid.items():
        if name not in applicable:
            raise ValueError(f"parameter {name!r} does not apply to learner {kind}")
        if not values:
            raise ValueError(f"grid for {name!r} is empty")
    if kind == "pacbayes-fixed" and not {"gamma", "gamma_factor"} & set(grid):
        raise ValueError("fixed-margin grid requires gamma")


def params_from_point(point: Dict[str, float]) -> LearnerParams:
    values = dict(point)
    if "v_max" in values:
        values["v_max"] = int(values["v_max"])
    return LearnerParams(**values)


def _training_split(dataset: Dataset, indices: np.ndarray, range_scope: str) -> Dataset:
    split = dataset.subset(indices)
    return split.with_inferred_ranges() if range_scope == "train" else split


def _fit_grid(train: Dataset, kind: str, points: List[Dict], target: str) -> List[Optional[LearnedModel]]:
    """v_max 以外が同じ点はまとめて 1 回学習し、決定株の列を切り詰めて評価する"""
    models: List[Optional[LearnedModel]] = [None] * len(points)
    groups: Dict[Tuple, List[int]] = {}
    for i, point in enumerate(points):
        key = tuple(sorted((name, value) for name, value in point.items() if name != "v_max"))
        groups.setdefault(key, []).append(i)

    default_v = LearnerParams().v_max
    for key, members in groups.items():
        sizes = {i: int(points[i].get("v_max", default_v)) for i in members}
        params = params_from_point({**dict(key), "v_max": max(sizes.values())})
        try:
            model = train_model(train, kind, params, target)
        except ValueError as e:
            logger.warning(f"Grid point {dict(key)} failed: {e}")
            continue
        for i in members:
            models[i] = model.truncate(sizes[i])
    return models


def select_parameters(
    train: Dataset,
    kind: str,
    points: List[Dict],
    inner_folds: int,
    seed: int,
    target: str = "conjunction",
    range_scope: str = "train",
) -> int:
    """
    内側の交差検証でグリッドの点を選ぶ

    誤りの合計が最小の点、同じなら平均モデルサイズが最小の点、それも同じならグリッド順で先の点。

    Returns:
        選ばれた点の添字
    """
    folds = stratified_kfold(train.m, train.y, inner_folds, seed)
    errors = np.zeros(len(points))
    sizes = np.zeros(len(points))
    failed = np.zeros(len(points), dtype=bool)

    for test_idx in folds:
        mask = np.ones(train.m, dtype=bool)
        mask[test_idx] = False
        inner_train = _training_split(train, np.flatnonzero(mask), range_scope)
        inner_test = train.subset(test_idx)
        resolved = _resolve_points(points, inner_train)
        for i, model in enumerate(_fit_grid(inner_train, kind, resolved, target)):
            if model is None:
                failed[i] = True
                continue
            errors[i] += training_errors(model, inner_test)
            sizes[i] += model.size

    if failed.all():
        raise ValueError("every grid point failed during inner cross-validation")
    errors[failed] = np.inf
    return int(np.lexsort((np.arange(len(points)), sizes, errors))[0])


def _evaluate(model: LearnedModel, train: Dataset, test: Dataset, delta: float, size_prior: Optional[str]) -> Dict:
    result: Dict = {
        "train_errors": training_errors(model, train),
        "test_errors": training_errors(model, test),
        "model_size": model.size,
        "attributes": list(model.attributes),
    }
    try:
        report = model_bound(model, train, delta, size_prior)
        result["bound"] = report.bound
        result["bayes_bound"] = report.components.get("bayes_bound")
    except ValueError as e:
        logger.warning(f"Bound unavailable for fold model: {e}")

    if isinstance(model, PacBayesModel):
        result["gibbs_test_errors"] = model.gibbs_risk(test) * test.m
        result["bayes_test_errors"] = int(np.count_nonzero(np.asarray(model.bayes_predict(test.X)) != test.y))
        result["ratio"] = float(np.mean(model.ratios)) if model.ratios else None
    if isinstance(model, OccamModel):
        result["bits"] = model.total_bits
    return result


def evaluate_outer_fold(
    dataset: Dataset,
    kind: str,
    points: List[Dict],
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    inner_folds: int = config.CV_CONFIG["inner_folds"],
    range_scope: str = "train",
    target: str = "conjunction",
    delta: float = config.DEFAULT_DELTA,
    size_prior: Optional[str] = None,
    seed: int = 0,
    permutation: int = 0,
    fold: int = 0,
) -> FoldRecord:
    """
    外側の 1 分割: 訓練集合だけでパラメータを選び、学習してテスト集合で評価する

    Returns:
        FoldRecord（学習に失敗した場合は error を記録）
    """
    base = {"permutation": permutation, "fold": fold, "train_size": len(train_idx), "test_size": len(test_idx)}
    try:
        train = _training_split(dataset, np.asarray(train_idx), range_scope)
        test = dataset.subset(test_idx)
        point = points[select_parameters(train, kind, points, inner_folds, seed, target, range_scope)]
        params = resolve_point(point, train.m, range_scale(train))
        model = train_model(train, kind, params_from_point(params), target)
        record = FoldRecord(**base, params=params, grid_point=dict(point), **_evaluate(model, train, test, delta, size_prior))
    except Exception as e:
        logger.warning(f"Fold {fold} of permutation {permutation} failed: {e}")
        return FoldRecord(**base, error=str(e))

    logger.info(
        f"Permutation {permutation} fold {fold}: params={params} "
        f"test_errors={record.test_errors} size={record.model_size}"
    )
    return record


def nested_cv(
    dataset: Dataset,
    kind: str,
    plan: CVPlan,
    target: str = "conjunction",
    delta: float = config.DEFAULT_DELTA,
    size_prior: Optional[str] = None,
    name: str = "dataset",
) -> CVResult:
    """
    順列ごとの入れ子交差検証

    Args:
        dataset: ラベル付きデータ
        kind: 学習器のキー
        plan: 交差検証の設定
        target: "conjunction" または "disjunction"
        delta: 上界の信頼パラメータ
        size_prior: 決定株の数の事前分布
        name: 表に載せるデータセット名

    Returns:
        CVResult
    """
    config.get_learner_info(kind)
    if not dataset.labeled:
        raise ValueError("cross-validation requires a labeled dataset")

    grid: Dict[str, List[Any]] = dict(plan.grid) or default_grid(kind)
    validate_grid(kind, grid)
    points = list(ParameterGrid(grid))
    logger.info(
        f"Nested CV: learner={kind} permutations={plan.permutations} "
        f"folds={plan.outer_folds}x{plan.inner_folds} grid points={len(points)}"
    )

    cells = []
    for permutation, sequence in enumerate(np.random.SeedSequence(plan.seed).spawn(plan.permutations)):
        permutation_seed = int(sequence.generate_state(1)[0])
        folds = stratified_kfold(dataset.m, dataset.y, plan.outer_folds, permutation_seed)
        for fold, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(dataset.m), test_idx)
            cells.append((permutation, fold, train_idx, test_idx, _seed_state(permutation_seed, fold)))

    records = Parallel(n_jobs=plan.n_jobs)(
        delayed(evaluate_outer_fold)(
            dataset,
            kind,
            points,
            train_idx,
            test_idx,
            plan.inner_folds,
            plan.range_scope,
            target,
            delta,
            size_prior,
            seed,
            permutation,
            fold,
        )
        for permutation, fold, train_idx, test_idx, seed in cells
    )

    result = CVResult(
        name=name,
        learner=kind,
        target=target,
        m=dataset.m,
        n=dataset.n,
        permutations=plan.permutations,
        outer_folds=plan.outer_folds,
        records=list(records),
    )
    if result.failed_folds:
        logger.warning(f"{result.failed_folds} folds failed and are excluded from the aggregates")

    if plan.fit_final and result.completed:
        full = dataset.with_inferred_ranges() if plan.range_scope == "train" else dataset
        final_params = resolve_point(result.modal_grid_point, full.m, range_scale(full))
        final = train_model(full, kind, params_from_point(final_params), target)
        result.final_params = final_params
        metadata = {"n": dataset.n, "label0": dataset.label_names[0], "label1": dataset.label_names[1]}
        result.final_model = dumps_model(final, metadata)
        logger.info(f"Final model trained on all {dataset.m} examples with {final_params}")
    return result


def _plus_minus(pair: Tuple[float, float]) -> str:
    return f"{pair[0]:.2f}±{pair[1]:.2f}"


def render_table(result: CVResult) -> str:
    """集計結果の表（タブ区切り、見出し行付き）"""
    columns = TABLE_COLUMNS[result.learner]
    values = {
        "Name": result.name,
        "ex": str(result.m),
        "Genes": str(result.n),
        "Errs": _plus_minus(result.errors),
        "S": _plus_minus(result.model_size),
        "bits": "" if result.modal_bits is None else str(result.modal_bits),
        "Ratio": f"{result.mean_ratio:.3f}",
        "G-errs": _plus_minus(result.gibbs_errors),
        "B-errs": _plus_minus(result.bayes_errors),
        "Bound": f"{result.bound_times_m:.1f}",
    }
    return "\t".join(columns) + "\n" + "\t".join(values[c] for c in columns) + "\n"


def _format_value(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def render_folds(result: CVResult) -> str:
    """分割ごとの key=value ブロック"""
    blocks = []
    for record in result.records:
        lines = ["[fold]"]
        for key, value in record.model_dump().items():
            if key in ("params", "grid_point"):
                prefix = "params" if key == "params" else "grid"
                lines.extend(f"{prefix}.{name}={_format_value(v)}" for name, v in sorted(value.items()))
            elif value is not None:
                lines.append(f"{key}={_format_value(value)}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
