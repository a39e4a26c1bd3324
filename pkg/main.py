"""
Decision Stump Toolkit - FastAPIアプリケーション
"""

import logging
import threading
from typing import Any, Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

import config
from learning_service import BOUND_REGIMES, LearningService

logger = logging.getLogger(__name__)

# FastAPIアプリケーションの初期化
app = FastAPI(
    title="Decision Stump Toolkit",
    description="決定株の連言・選言の学習と Occam / 標本圧縮 / PAC-Bayes のリスク上界を提供するWebサービス",
    version="1.0.0",
)

# 学習サービス（遅延ロード、スレッドセーフ）
learning_service = None
learning_service_lock = threading.Lock()


def get_learning_service() -> LearningService:
    """学習サービスのインスタンスを取得（遅延ロード、スレッドセーフ）"""
    global learning_service

    if learning_service is None:
        with learning_service_lock:
            # ダブルチェックロッキングパターン
            if learning_service is None:
                learning_service = LearningService()
                logger.info(f"Learning service initialized (model_dir={config.MODEL_DIR})")

    return learning_service


# リクエストモデル
class BoundRequest(BaseModel):
    values: Dict[str, Any]
    sweep_name: Optional[str] = None
    sweep_values: Optional[List[float]] = None

    class Config:
        json_schema_extra = {
            "example": {
                "values": {"m": 52, "n": 918, "k": 1, "ratio": 0.12, "gibbs-risk": 0.05, "delta": 0.05},
                "sweep_name": "gibbs-risk",
                "sweep_values": [0.0, 0.02, 0.04],
            }
        }


class TrainRequest(BaseModel):
    data_path: str
    learner: str = "sc"
    target: str = "conjunction"
    params: Dict[str, float] = Field(default_factory=dict)
    label_column: Optional[str] = "label"
    positive_label: Optional[str] = None
    ranges_path: Optional[str] = None
    model_path: Optional[str] = None
    delta: Optional[float] = None

    class Config:
        json_schema_extra = {
            "example": {
                "data_path": "data/colon.csv",
                "learner": "pacbayes",
                "params": {"p": 2.0, "eta": 0.1, "v_max": 5},
            }
        }


class PredictRequest(BaseModel):
    model_path: str
    rows: List[List[float]]


class PredictResponse(BaseModel):
    predictions: List[int]
    label_names: List[str]


class CrossValidateRequest(BaseModel):
    data_path: str
    learner: str = "sc"
    target: str = "conjunction"
    plan: Dict[str, Any] = Field(default_factory=dict)
    label_column: Optional[str] = "label"
    name: Optional[str] = None


def _raise_on_error(result: Dict) -> Dict:
    if "error" in result:
        raise HTTPException(status_code=400, detail=result["error"])
    return result


# ヘルスチェック
@app.get("/api/health")
async def health_check():
    """APIヘルスチェック"""
    return {"status": "healthy", "service": "Decision Stump Toolkit API"}


@app.get("/api/learners")
async def get_learners():
    """利用可能な学習器の一覧"""
    return {"learners": config.list_available_learners()}


@app.get("/api/learners/{kind}")
async def get_learner(kind: str):
    """
    特定の学習器の情報

    - **kind**: 学習器のキー (例: "sc", "pacbayes")
    """
    try:
        return {"key": kind, **config.get_learner_info(kind)}
    except ValueError as e:
        raise HTTPException(status_code=404, detail=str(e))


@app.post("/api/bound/{regime}")
async def compute_bound(regime: str, request: BoundRequest):
    """
    カウントからリスク上界を計算

    - **regime**: "occam", "sc" または "pacbayes"
    - **values**: 入力 (m, n, k, errors, bits, i, j, ratio, gibbs-risk, delta, prior)
    - **sweep_name / sweep_values**: 掃引する入力とその値 (オプション)
    """
    if regime not in BOUND_REGIMES:
        raise HTTPException(status_code=404, detail=f"Unknown regime: {regime}")
    if (request.sweep_name is None) != (request.sweep_values is None):
        raise HTTPException(status_code=400, detail="sweep_name and sweep_values must be given together")
    sweep = None if request.sweep_name is None else (request.sweep_name, request.sweep_values)
    return _raise_on_error(get_learning_service().bound(regime, request.values, sweep))


@app.post("/api/train")
def train(request: TrainRequest):
    """
    データファイルで学習してモデルを保存

    - **data_path**: 区切りテキストのパス
    - **learner**: 学習器のキー
    - **target**: "conjunction" または "disjunction"
    - **params**: 学習パラメータ
    """
    result = get_learning_service().train(
        request.data_path,
        learner=request.learner,
        target=request.target,
        params=request.params,
        label_column=request.label_column,
        positive_label=request.positive_label,
        ranges_path=request.ranges_path,
        model_path=request.model_path,
        delta=request.delta,
    )
    return _raise_on_error(result)


@app.post("/api/predict", response_model=PredictResponse)
def predict(request: PredictRequest):
    """
    保存済みモデルで属性ベクトルを予測

    - **model_path**: モデルファイル
    - **rows**: 属性ベクトルのリスト
    """
    result = _raise_on_error(get_learning_service().predict_rows(request.model_path, request.rows))
    return PredictResponse(**result)


@app.post("/api/cv")
def cross_validate(request: CrossValidateRequest):
    """
    入れ子交差検証を実行

    - **plan**: outer_folds, inner_folds, permutations, seed, grid, range_scope
    """
    result = get_learning_service().cross_validate(
        request.data_path,
        request.learner,
        request.plan,
        target=request.target,
        label_column=request.label_column,
        name=request.name,
    )
    result = _raise_on_error(result)
    return {"summary": result["summary"], "table": result["table"], "records": result["records"]}


@app.get("/api/models")
async def get_loaded_models():
    """読み込み済みのモデル"""
    return {"models": get_learning_service().get_loaded_models()}


if __name__ == "__main__":
    # アプリケーションを起動
    uvicorn.run("main:app", host="0.0.0.0", port=8000, reload=True)
