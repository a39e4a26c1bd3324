"""
アプリケーション設定
"""

import os
from typing import Dict, List


# 利用可能な学習アルゴリズムの定義
AVAILABLE_LEARNERS: Dict[str, Dict] = {
    "sc": {
        "name": "Sample Compression greedy",
        "description": "訓練例でしきい値を指定する圧縮集合型の貪欲法 (U = |Q| - p|R|)",
        "regime": "sample-compression",
        "params": ["p", "v_max"],
        "prediction": "conjunction",
    },
    "occam": {
        "name": "Occam's Razor greedy",
        "description": "二進しきい値符号のビット長を罰則とする貪欲法",
        "regime": "occam",
        "params": ["p", "eta", "v_max"],
        "prediction": "conjunction",
    },
    "pacbayes": {
        "name": "PAC-Bayes soft greedy",
        "description": "マージン区間とスパース性のトレードオフを行うソフト貪欲法 (Bayes 分類器で予測)",
        "regime": "pac-bayes",
        "params": ["p", "eta", "v_max"],
        "prediction": "bayes",
    },
    "pacbayes-fixed": {
        "name": "PAC-Bayes fixed-margin heuristic",
        "description": "幅 2γ の固定マージン区間を用いるヒューリスティック (区間中点のしきい値で予測)",
        "regime": "pac-bayes",
        "params": ["p", "eta", "v_max", "gamma"],
        "prediction": "midpoint",
    },
}

# リスク上界の信頼パラメータ δ（環境変数で変更可能）
DEFAULT_DELTA = float(os.getenv("STUMPS_DELTA", "0.05"))

# 決定株の個数に対する事前分布 ("quadratic" または "uniform")
DEFAULT_SIZE_PRIOR = os.getenv("STUMPS_SIZE_PRIOR", "quadratic")

# 交差検証の設定
CV_CONFIG = {
    "outer_folds": int(os.getenv("STUMPS_OUTER_FOLDS", "5")),
    "inner_folds": int(os.getenv("STUMPS_INNER_FOLDS", "5")),
    "permutations": int(os.getenv("STUMPS_PERMUTATIONS", "20")),
    "seed": int(os.getenv("STUMPS_SEED", "0")),
    "n_jobs": int(os.getenv("STUMPS_N_JOBS", "1")),
}

# データ読み込みの設定
DATA_CONFIG = {
    "delimiter": os.getenv("STUMPS_DELIMITER", ","),
    "fill_value": float(os.getenv("STUMPS_FILL_VALUE", "0")),
}

# 学習済みモデルの保存先
MODEL_DIR = os.getenv("STUMPS_MODEL_DIR", "./models")


def get_learner_info(kind: str) -> Dict:
    """
    学習器の種類から情報を取得

    Args:
        kind: 学習器のキー（例: "sc", "pacbayes"）

    Returns:
        学習器情報の辞書
    """
    if kind not in AVAILABLE_LEARNERS:
        raise ValueError(f"Unknown learner: {kind}. Available: {list(AVAILABLE_LEARNERS.keys())}")

    return AVAILABLE_LEARNERS[kind]


def get_learner_params(kind: str) -> List[str]:
    """学習器に適用できるパラメータ名のリスト"""
    return list(get_learner_info(kind)["params"])


def list_available_learners() -> List[Dict]:
    """
    利用可能な学習器のリストを取得

    Returns:
        学習器情報のリスト
    """
    learners = []
    for key, info in AVAILABLE_LEARNERS.items():
        learners.append({"key": key, **info})
    return learners
