"""
決定株の連言の学習サービス
学習・予測・上界計算・入れ子交差検証・合成データ生成を CLI と HTTP の両方に提供する
"""

import logging
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

import config
from bounds import BoundReport, SizePrior, occam_bound, pacbayes_report, sc_bound
from data import SynthSpec, load_delimited, synth_generate, write_delimited, write_manifest
from learners import LearnedModel, LearnerParams, PacBayesModel, model_bound, train_model, training_errors
from model_io import load_model, save_model
from model_selection import CVPlan, nested_cv, render_folds, render_table
from stumps import conjunction_predict

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

BOUND_REGIMES = ("occam", "sc", "pacbayes")


def sweep_values(text: str) -> List[float]:
    """
    掃引する値のリスト

    Args:
        text: "start:stop:step"（stop を含む）または "v1,v2,..."

    Returns:
        値のリスト
    """
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"sweep must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValueError(f"invalid sweep {text!r}")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [float(v) for v in np.round(start + step * np.arange(count), 12)]
    return [float(v) for v in text.split(",") if v]


def _as_int(values: Dict[str, Any], name: str) -> int:
    value = _require(values, name)
    number = float(value)
    if number != int(number):
        raise ValueError(f"input {name!r} must be an integer, got {value}")
    return int(number)


def _require(values: Dict[str, Any], name: str) -> Any:
    if name not in values:
        raise ValueError(f"missing input {name!r}")
    return values[name]


def _as_list(value: Any, size: int, name: str) -> List[float]:
    if isinstance(value, str):
        items = [float(v) for v in value.split(",") if v]
    elif isinstance(value, (list, tuple)):
        items = [float(v) for v in value]
    else:
        items = [float(value)]
    if len(items) == 1 and size > 1:
        items = items * size
    if len(items) != size:
        raise ValueError(f"expected {size} values for {name!r}, got {len(items)}")
    return items


class LearningService:
    """決定株の連言の学習サービス"""

    def __init__(
        self,
        model_dir: str = config.MODEL_DIR,
        delta: float = config.DEFAULT_DELTA,
        size_prior: str = config.DEFAULT_SIZE_PRIOR,
    ):
        """
        サービスの初期化

        Args:
            model_dir: 学習済みモデルの保存先
            delta: 既定の信頼パラメータ
            size_prior: 既定の決定株の数の事前分布
        """
        self.model_dir = Path(model_dir)
        self.delta = delta
        self.size_prior = size_prior

        # 読み込み済みモデルのキャッシュ（パス -> (更新時刻, モデル, メタデータ)）
        self.loaded_models: Dict[str, Tuple[Optional[int], LearnedModel, Dict[str, str]]] = {}
        self.models_lock = threading.Lock()

    def _load_model(self, model_path: str) -> Tuple[LearnedModel, Dict[str, str]]:
        """モデルを読み込んでキャッシュ（ファイルの更新時刻が変わっていれば読み直す）"""
        path = Path(model_path).resolve()
        mtime = path.stat().st_mtime_ns if path.exists() else None
        key = str(path)
        with self.models_lock:
            cached = self.loaded_models.get(key)
            if cached is None or cached[0] != mtime:
                logger.info(f"Loading model: {model_path}")
                model, metadata = load_model(model_path)
                self.loaded_models[key] = (mtime, model, metadata)
            _, model, metadata = self.loaded_models[key]
            return model, metadata

    def _remember(self, model_path: Path, model: LearnedModel, metadata: Dict[str, Any]) -> None:
        path = model_path.resolve()
        with self.models_lock:
            self.loaded_models[str(path)] = (path.stat().st_mtime_ns, model, {k: str(v) for k, v in metadata.items()})

    def get_loaded_models(self) -> List[str]:
        with self.models_lock:
            return list(self.loaded_models.keys())

    def train(
        self,
        data_path: str,
        learner: str = "sc",
        target: str = "conjunction",
        params: Optional[Dict[str, float]] = None,
        label_column: Optional[str] = "label",
        delimiter: str = config.DATA_CONFIG["delimiter"],
        positive_label: Optional[str] = None,
        ranges_path: Optional[str] = None,
        model_path: Optional[str] = None,
        delta: Optional[float] = None,
        size_prior: Optional[str] = None,
    ) -> Dict:
        """
        データを読み込んで学習し、モデルと訓練データ上の上界を返す

        Args:
            data_path: 区切りテキストのパス
            learner: 学習器のキー
            target: "conjunction" または "disjunction"
            params: 学習パラメータ（学習器に適用できるものだけ）
            label_column: ラベル列
            delimiter: 区切り文字
            positive_label: 1 に対応させるラベル
            ranges_path: 範囲ファイル
            model_path: モデルの保存先（省略時は model_dir 内）
            delta: 信頼パラメータ
            size_prior: 決定株の数の事前分布

        Returns:
            学習結果を含む辞書
        """
        try:
            delta = self.delta if delta is None else delta
            size_prior = size_prior or self.size_prior
            params = dict(params or {})
            applicable = config.get_learner_params(learner)
            rejected = sorted(set(params) - set(applicable))
            if rejected:
                raise ValueError(f"parameters {rejected} do not apply to learner {learner}")
            learner_params = LearnerParams(**params, size_prior=size_prior)

            dataset = load_delimited(
                data_path,
                label_column=label_column,
                delimiter=delimiter,
                positive_label=positive_label,
                ranges_path=ranges_path,
            )
            model = train_model(dataset, learner, learner_params, target)
            report = model_bound(model, dataset, delta, size_prior)
            errors = training_errors(model, dataset)

            metadata: Dict[str, Any] = {
                "n": dataset.n,
                "label0": dataset.label_names[0],
                "label1": dataset.label_names[1],
                "delta": float(delta),
                "size_prior": size_prior,
            }
            for name, value in learner_params.model_dump(exclude_none=True, exclude={"size_prior"}).items():
                metadata[f"params.{name}"] = value
            path = Path(model_path) if model_path else self.model_dir / f"{learner}-{target}.model"
            save_model(model, path, metadata)
            self._remember(path, model, metadata)

            result = {
                "model_path": str(path),
                "learner": learner,
                "target": target,
                "m": dataset.m,
                "n": dataset.n,
                "size": model.size,
                "attributes": list(model.attributes),
                "train_errors": errors,
                "train_error_rate": errors / dataset.m,
                "stumps": model.details(),
                "bound": report.model_dump(),
            }
            if isinstance(model, PacBayesModel):
                result["gibbs_train_risk"] = model.gibbs_risk(dataset)
                result["bayes_train_errors"] = int(np.count_nonzero(np.asarray(model.bayes_predict(dataset.X)) != dataset.y))
                result["psi"] = report.components["psi"]
                result["bayes_bound"] = report.components["bayes_bound"]
            logger.info(f"Trained {learner} {target}: {model.size} stumps, {errors} training errors")
            return result

        except Exception as e:
            logger.error(f"Training error: {e}")
            return {"error": str(e)}

    def _check_attributes(self, metadata: Dict[str, str], n: int) -> None:
        expected = int(metadata["n"])
        if n != expected:
            raise ValueError(f"attribute count mismatch: model expects n={expected}, data has {n}")

    def predict(
        self,
        model_path: str,
        data_path: str,
        label_column: Optional[str] = None,
        delimiter: str = config.DATA_CONFIG["delimiter"],
    ) -> Dict:
        """
        ファイルのデータを予測する（ラベルがあれば誤り数も返す）

        Args:
            model_path: モデルファイル
            data_path: 区切りテキストのパス
            label_column: ラベル列（省略時はラベルなし）
            delimiter: 区切り文字

        Returns:
            予測ラベルのリストを含む辞書
        """
        try:
            model, metadata = self._load_model(model_path)
            names = (metadata["label0"], metadata["label1"])
            dataset = load_delimited(data_path, label_column=label_column, delimiter=delimiter, label_names=names)
            self._check_attributes(metadata, dataset.n)

            labels = np.atleast_1d(np.asarray(model.predict(dataset.X)))
            result: Dict[str, Any] = {"m": dataset.m, "predictions": [names[int(v)] for v in labels]}
            if dataset.labeled:
                errors = int(np.count_nonzero(labels != dataset.y))
                result["errors"] = errors
                result["error_rate"] = errors / dataset.m
            return result

        except Exception as e:
            logger.error(f"Prediction error: {e}")
            return {"error": str(e)}

    def predict_rows(self, model_path: str, rows: List[List[float]]) -> Dict:
        """数値の行を直接予測する"""
        try:
            model, metadata = self._load_model(model_path)
            X = np.asarray(rows, dtype=np.float64)
            if X.ndim != 2:
                raise ValueError("rows must be a list of attribute vectors")
            self._check_attributes(metadata, X.shape[1])
            labels = np.atleast_1d(np.asarray(model.predict(X)))
            return {
                "predictions": [int(v) for v in labels],
                "label_names": [metadata["label0"], metadata["label1"]],
            }
        except Exception as e:
            logger.error(f"Prediction error: {e}")
            return {"error": str(e)}

    def _bound_report(self, regime: str, values: Dict[str, Any]) -> BoundReport:
        delta = float(values.get("delta", self.delta))
        if regime == "sc":
            return sc_bound(_as_int(values, "m"), _as_int(values, "i"), _as_int(values, "j"), _as_int(values, "n"), delta)

        n = _as_int(values, "n")
        prior = SizePrior(str(values.get("prior", self.size_prior)), n)
        k = _as_int(values, "k")
        if regime == "occam":
            bits = [int(b) for b in _as_list(values.get("bits", []), k, "bits")] if k else []
            return occam_bound(_as_int(values, "m"), _as_int(values, "errors"), n, k, bits, delta, prior)
        if regime == "pacbayes":
            ratios = _as_list(values.get("ratio", []), k, "ratio") if k else []
            risk = float(_require(values, "gibbs-risk"))
            return pacbayes_report(_as_int(values, "m"), n, k, ratios, risk, delta, prior)
        raise ValueError(f"Unknown regime: {regime}. Available: {list(BOUND_REGIMES)}")

    def bound(self, regime: str, values: Dict[str, Any], sweep: Optional[Tuple[str, List[float]]] = None) -> Dict:
        """
        上界の計算（1 つの入力を掃引できる）

        Args:
            regime: "occam", "sc" または "pacbayes"
            values: 入力（m, n, k, errors, bits, i, j, ratio, gibbs-risk, delta, prior）
            sweep: (入力名, 値のリスト)

        Returns:
            上界の行のリストを含む辞書
        """
        try:
            values = {key.replace("_", "-"): value for key, value in values.items()}
            settings = [(None, values)]
            if sweep is not None:
                name = sweep[0].replace("_", "-")
                if not sweep[1]:
                    raise ValueError(f"sweep over {name!r} is empty")
                settings = [(value, {**values, name: value}) for value in sweep[1]]

            rows = []
            for value, inputs in settings:
                report = self._bound_report(regime, inputs)
                row = report.model_dump()
                row["bound_times_m"] = report.bound * report.components["m"]
                if value is not None:
                    row["sweep"] = value
                rows.append(row)
            return {"regime": regime, "sweep": None if sweep is None else sweep[0], "rows": rows}

        except Exception as e:
            logger.error(f"Bound error: {e}")
            return {"error": str(e)}

    def cross_validate(
        self,
        data_path: str,
        learner: str,
        plan: Optional[Dict] = None,
        target: str = "conjunction",
        label_column: Optional[str] = "label",
        delimiter: str = config.DATA_CONFIG["delimiter"],
        positive_label: Optional[str] = None,
        ranges_path: Optional[str] = None,
        name: Optional[str] = None,
        delta: Optional[float] = None,
        size_prior: Optional[str] = None,
        final_model_path: Optional[str] = None,
    ) -> Dict:
        """
        入れ子交差検証を実行して表と分割ごとの記録を返す

        Returns:
            集計・表・分割ごとの記録を含む辞書
        """
        try:
            cv_plan = CVPlan(**(plan or {}))
            if cv_plan.range_scope == "external" and not ranges_path:
                raise ValueError("external range scope requires a ranges file")
            if final_model_path:
                cv_plan = cv_plan.model_copy(update={"fit_final": True})
            dataset = load_delimited(
                data_path,
                label_column=label_column,
                delimiter=delimiter,
                positive_label=positive_label,
                ranges_path=ranges_path,
            )
            result = nested_cv(
                dataset,
                learner,
                cv_plan,
                target=target,
                delta=self.delta if delta is None else delta,
                size_prior=size_prior or self.size_prior,
                name=name or Path(data_path).stem,
            )
            output = {
                "summary": result.summary(),
                "table": render_table(result),
                "folds": render_folds(result),
                "records": [record.model_dump() for record in result.records],
            }
            if result.final_model is not None and final_model_path:
                path = Path(final_model_path)
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(result.final_model)
                output["final_model_path"] = str(path)
                output["final_params"] = result.final_params
            return output

        except Exception as e:
            logger.error(f"Cross-validation error: {e}")
            return {"error": str(e)}

    def synth(self, spec: Dict, output_path: str, manifest_path: Optional[str] = None) -> Dict:
        """
        合成データとマニフェストを書き出す

        Args:
            spec: SynthSpec のフィールド
            output_path: データの出力先
            manifest_path: マニフェストの出力先（省略時は出力先 + ".manifest"）

        Returns:
            生成結果を含む辞書
        """
        try:
            result = synth_generate(SynthSpec(**spec))
            output = Path(output_path)
            output.parent.mkdir(parents=True, exist_ok=True)
            manifest = Path(manifest_path) if manifest_path else output.with_name(output.name + ".manifest")
            write_delimited(result.dataset, output)
            write_manifest(result, manifest)
            dataset = result.dataset
            planted_errors = int(np.count_nonzero(conjunction_predict(result.planted, dataset.X) != dataset.y))
            return {
                "data_path": str(output),
                "manifest_path": str(manifest),
                "m": dataset.m,
                "n": dataset.n,
                "positives": dataset.n_positive,
                "planted": [{"k": s.k, "d": s.d, "t": s.t} for s in result.planted.stumps],
                "planted_errors": planted_errors,
            }

        except Exception as e:
            logger.error(f"Synthesis error: {e}")
            return {"error": str(e)}
