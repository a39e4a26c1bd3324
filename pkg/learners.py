"""
決定株の連言を学習する貪欲アルゴリズム

標本圧縮 (SC)・Occam・PAC-Bayes ソフト貪欲・固定マージンヒューリスティックと、
ラベル交換による選言の学習
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Literal, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

import config
from bounds import BoundReport, make_size_prior, occam_bound, pacbayes_report, sc_bound
from data import Dataset
from stumps import (
    DecisionStump,
    GibbsConjunction,
    IntervalStump,
    StumpConjunction,
    bayes_predict,
    conjunction_predict,
    format_real,
    gibbs_empirical_risk,
    sigma,
    stump_predict,
)

logger = logging.getLogger(__name__)

# 候補テンソルを属性方向に分割する幅
ATTRIBUTE_CHUNK = 64
# 区間候補のテンソル（例 × 例 × 属性）の要素数の上限
SOFT_CHUNK_ELEMENTS = 1 << 21

# 残りの負例の重みがこれを下回ったら停止
SOFT_MASS_EPS = 1e-9

MAX_CODE_BITS = 60

TARGETS = ("conjunction", "disjunction")


class LearnerParams(BaseModel):
    """学習パラメータ"""

    model_config = ConfigDict(frozen=True)

    p: float = Field(default=1.0, gt=0.0, description="誤分類した正例ごとの罰則")
    eta: float = Field(default=0.0, ge=0.0, description="ビット数またはマージンの罰則")
    v_max: int = Field(default=10, ge=1, description="決定株の最大数")
    gamma: Optional[float] = Field(default=None, gt=0.0, description="固定マージンの半幅")
    size_prior: Literal["quadratic", "uniform"] = Field(default=config.DEFAULT_SIZE_PRIOR)  # type: ignore[assignment]


def _oriented(labels, target: str):
    labels = np.asarray(labels, dtype=np.int8)
    if target == "disjunction":
        return (1 - labels).astype(np.int8)[()]
    return labels[()]


@dataclass(frozen=True)
class CompressionModel:
    """
    標本圧縮モデル

    stumps と example_indices は選択順。各しきい値は対応する訓練例の属性値に等しい。
    """

    stumps: Tuple[DecisionStump, ...] = ()
    example_indices: Tuple[int, ...] = ()
    target: str = "conjunction"

    kind = "sc"

    @property
    def conjunction(self) -> StumpConjunction:
        return StumpConjunction.from_unsorted(self.stumps)

    @property
    def compression_indices(self) -> Tuple[int, ...]:
        return tuple(sorted(self.example_indices))

    @property
    def size(self) -> int:
        return len(self.stumps)

    @property
    def attributes(self) -> Tuple[int, ...]:
        return self.conjunction.attributes

    def predict(self, x):
        return _oriented(conjunction_predict(self.conjunction, x), self.target)

    def truncate(self, v: int) -> "CompressionModel":
        return replace(self, stumps=self.stumps[:v], example_indices=self.example_indices[:v])

    def details(self) -> List[Dict]:
        return [{"k": s.k, "d": s.d, "t": s.t, "example": i} for s, i in zip(self.stumps, self.example_indices)]


@dataclass(frozen=True)
class OccamModel:
    """
    Occam モデル

    しきい値は Λ_l の元 (l = bit_lengths[i], j = code_indices[i])。
    intervals は同じ (Q, R) を与えるしきい値の区間 [a, b]。
    """

    stumps: Tuple[DecisionStump, ...] = ()
    bit_lengths: Tuple[int, ...] = ()
    code_indices: Tuple[int, ...] = ()
    intervals: Tuple[Tuple[float, float], ...] = ()
    target: str = "conjunction"

    kind = "occam"

    @property
    def conjunction(self) -> StumpConjunction:
        return StumpConjunction.from_unsorted(self.stumps)

    @property
    def size(self) -> int:
        return len(self.stumps)

    @property
    def attributes(self) -> Tuple[int, ...]:
        return self.conjunction.attributes

    @property
    def total_bits(self) -> int:
        return int(sum(self.bit_lengths))

    def predict(self, x):
        return _oriented(conjunction_predict(self.conjunction, x), self.target)

    def truncate(self, v: int) -> "OccamModel":
        return replace(
            self,
            stumps=self.stumps[:v],
            bit_lengths=self.bit_lengths[:v],
            code_indices=self.code_indices[:v],
            intervals=self.intervals[:v],
        )

    def details(self) -> List[Dict]:
        return [
            {"k": s.k, "d": s.d, "t": s.t, "bits": l, "code": j, "a": a, "b": b}
            for s, l, j, (a, b) in zip(self.stumps, self.bit_lengths, self.code_indices, self.intervals)
        ]


@dataclass(frozen=True)
class PacBayesModel:
    """
    区間決定株の連言（Gibbs 分類器）

    gamma が None なら Bayes 分類器で、固定マージンなら区間中点の決定株の連言で予測する。
    ratios は各区間の (b - a)/(B - A)。
    """

    stumps: Tuple[IntervalStump, ...] = ()
    ratios: Tuple[float, ...] = ()
    gamma: Optional[float] = None
    target: str = "conjunction"

    @property
    def kind(self) -> str:
        return "pacbayes" if self.gamma is None else "pacbayes-fixed"

    @property
    def gibbs(self) -> GibbsConjunction:
        return GibbsConjunction.from_unsorted(self.stumps)

    @property
    def midpoint(self) -> StumpConjunction:
        return self.gibbs.midpoint_conjunction()

    @property
    def size(self) -> int:
        return len(self.stumps)

    @property
    def attributes(self) -> Tuple[int, ...]:
        return self.gibbs.attributes

    def predict(self, x):
        if self.gamma is None:
            return _oriented(bayes_predict(self.gibbs, x), self.target)
        return _oriented(conjunction_predict(self.midpoint, x), self.target)

    def bayes_predict(self, x):
        return _oriented(bayes_predict(self.gibbs, x), self.target)

    def gibbs_risk(self, S: Dataset) -> float:
        """元のラベルに対する Gibbs 分類器の経験リスク"""
        data = S.swap_labels() if self.target == "disjunction" else S
        return gibbs_empirical_risk(self.gibbs, data)

    def truncate(self, v: int) -> "PacBayesModel":
        return replace(self, stumps=self.stumps[:v], ratios=self.ratios[:v])

    def details(self) -> List[Dict]:
        return [{"k": s.k, "d": s.d, "a": s.a, "b": s.b, "ratio": r} for s, r in zip(self.stumps, self.ratios)]


LearnedModel = Union[CompressionModel, OccamModel, PacBayesModel]


class DyadicCode(NamedTuple):
    bits: int
    code: int
    threshold: float


def _dyadic_search(A, B, a, b, left_closed, right_closed):
    """
    区間ごとに Λ_l と交わる最小の l と、その中で最小の j を求める

    Returns:
        (bits, codes, thresholds)。a >= b の区間は bits = -1
    """
    A, B, a, b, left_closed, right_closed = np.broadcast_arrays(
        np.asarray(A, dtype=np.float64),
        np.asarray(B, dtype=np.float64),
        np.asarray(a, dtype=np.float64),
        np.asarray(b, dtype=np.float64),
        np.asarray(left_closed, dtype=bool),
        np.asarray(right_closed, dtype=bool),
    )
    shape = a.shape
    bits = np.full(shape, -1, dtype=np.int64)
    codes = np.zeros(shape, dtype=np.int64)
    thresholds = np.full(shape, np.nan)
    pending = (a < b) & (A < B)
    width = np.where(pending, B - A, 1.0)

    for level in range(MAX_CODE_BITS + 1):
        if not pending.any():
            break
        scale = 2.0 ** (level + 1)
        count = 2.0**level
        # 2j - 1 >= (a - A) / (B - A) * 2^(l+1) を満たす最小の j の近傍を調べる
        start = np.ceil(((a - A) / width * scale + 1.0) / 2.0)
        found = np.zeros(shape, dtype=bool)
        for offset in (-1.0, 0.0, 1.0):
            j = np.clip(start + offset, 1.0, count)
            frac = (2.0 * j - 1.0) / scale
            t = (1.0 - frac) * A + frac * B
            inside = np.where(left_closed, t >= a, t > a) & np.where(right_closed, t <= b, t < b)
            hit = pending & ~found & inside
            bits[hit] = level
            codes[hit] = j[hit].astype(np.int64)
            thresholds[hit] = t[hit]
            found |= hit
        pending &= ~found

    return bits, codes, thresholds


def dyadic_code(A: float, B: float, a: float, b: float, include: str = "both") -> DyadicCode:
    """
    区間 [a, b] に入る Λ_l の元を最小ビット数で指定する

    Args:
        A, B: 属性の範囲
        a, b: しきい値の区間
        include: 区間の端点の扱い ("both", "left", "right", "none")

    Returns:
        DyadicCode(bits=l, code=j, threshold=t)
    """
    if not A < B:
        raise ValueError(f"dyadic code requires A < B, got A={A}, B={B}")
    if not a < b:
        raise ValueError(f"dyadic code requires a < b, got a={a}, b={b}")
    if a < A or b > B:
        raise ValueError(f"interval [{a}, {b}] is not inside [{A}, {B}]")
    if include not in ("both", "left", "right", "none"):
        raise ValueError(f"Unknown endpoint convention: {include}")

    bits, codes, thresholds = _dyadic_search(
        np.atleast_1d(A),
        np.atleast_1d(B),
        np.atleast_1d(a),
        np.atleast_1d(b),
        np.atleast_1d(include in ("both", "left")),
        np.atleast_1d(include in ("both", "right")),
    )
    if bits[0] < 0:
        raise ValueError(f"no dyadic point within {MAX_CODE_BITS} bits for [{a}, {b}]")
    return DyadicCode(int(bits[0]), int(codes[0]), float(thresholds[0]))


class _Choice(NamedTuple):
    utility: float
    k: int
    d: int
    first: float
    second: float
    example: int = -1
    bits: int = -1
    code: int = 0
    threshold: float = math.nan


def _argmax_tiebreak(utility: np.ndarray, keys_at: Callable[[np.ndarray], Sequence[np.ndarray]]) -> Optional[int]:
    """
    最大効用の候補の平坦な位置

    同値の候補が複数あれば、keys_at がその位置について返すキーの辞書順で最小のものを選ぶ。
    """
    flat = utility.ravel()
    if flat.size == 0:
        return None
    best = np.max(flat)
    if not np.isfinite(best):
        return None
    tied = np.flatnonzero(flat == best)
    if tied.size == 1:
        return int(tied[0])
    order = np.lexsort(tuple(reversed(tuple(keys_at(tied)))))
    return int(tied[order[0]])


def _better(candidate: Optional[_Choice], best: Optional[_Choice]) -> bool:
    # 属性番号の小さいチャンクから順に調べるので、同値なら先の候補を残す
    return candidate is not None and (best is None or candidate.utility > best.utility)


def _attribute_chunks(available: np.ndarray, size: int = ATTRIBUTE_CHUNK):
    n = available.shape[0]
    for start in range(0, n, size):
        cols = np.arange(start, min(n, start + size))
        cols = cols[available[cols]]
        if cols.size:
            yield cols


def _check_training_set(S: Dataset) -> None:
    if not S.labeled:
        raise ValueError("training requires a labeled dataset")
    if S.m < 1:
        raise ValueError("training requires at least one example")


def _best_sc_stump(
    X: np.ndarray, y: np.ndarray, remaining: np.ndarray, available: np.ndarray, p: float
) -> Optional[_Choice]:
    rows = np.flatnonzero(remaining)
    neg = y[rows] == 0
    pos = ~neg
    anchors = rows[neg]
    directions = np.array([1, -1])
    best: Optional[_Choice] = None

    for cols in _attribute_chunks(available):
        values = X[np.ix_(rows, cols)]
        thresholds = X[np.ix_(anchors, cols)]
        # d = +1 は x <= t を、d = -1 は x >= t を覆う
        below = values[None, :, :] <= thresholds[:, None, :]
        above = values[None, :, :] >= thresholds[:, None, :]
        utility = np.stack(
            [
                below[:, neg, :].sum(axis=1) - p * below[:, pos, :].sum(axis=1),
                above[:, neg, :].sum(axis=1) - p * above[:, pos, :].sum(axis=1),
            ]
        ).astype(np.float64)

        shape = utility.shape

        def keys_at(positions):
            di, ai, ci = np.unravel_index(positions, shape)
            return cols[ci], di, thresholds[ai, ci], anchors[ai]

        position = _argmax_tiebreak(utility, keys_at)
        if position is None:
            continue
        di, ai, ci = np.unravel_index(position, shape)
        candidate = _Choice(
            float(utility[di, ai, ci]),
            int(cols[ci]),
            int(directions[di]),
            float(thresholds[ai, ci]),
            0.0,
            example=int(anchors[ai]),
        )
        if _better(candidate, best):
            best = candidate

    return best


def greedy_sc_learn(S: Dataset, params: LearnerParams) -> CompressionModel:
    """
    標本圧縮の貪欲法 (U = |Q| - p|R|)

    しきい値は残っている負例の属性値に限る。覆った負例 Q と誤った正例 R を取り除き、
    負例がなくなるか v_max 個選ぶか、最良の効用が 0 以下になったら停止する。

    Args:
        S: 訓練データ
        params: 学習パラメータ

    Returns:
        CompressionModel
    """
    _check_training_set(S)
    X, y = S.X, S.y
    if S.n_negative == 0:
        logger.warning("No negative examples in training set: returning the empty conjunction")
        return CompressionModel()

    remaining = np.ones(S.m, dtype=bool)
    available = S.usable.copy()
    stumps: List[DecisionStump] = []
    anchors: List[int] = []

    while len(stumps) < params.v_max:
        if not np.any(remaining & (y == 0)):
            break
        best = _best_sc_stump(X, y, remaining, available, params.p)
        if best is None or best.utility <= 0:
            break
        stump = DecisionStump(best.k, best.first, best.d)
        covered = remaining & (stump_predict(stump, X) == 0)
        remaining &= ~covered
        available[best.k] = False
        stumps.append(stump)
        anchors.append(best.example)
        logger.debug(f"SC stump {len(stumps)}: {stump} (utility {best.utility:g}, anchor {best.example})")

    logger.info(f"SC greedy selected {len(stumps)} stumps")
    return CompressionModel(tuple(stumps), tuple(anchors))


def occam_utility(covered_neg, n_neg: int, covered_pos, n_pos: int, p: float, eta: float, bits):
    """U = |Q|/N' - p|R|/|P| - η l"""
    return np.asarray(covered_neg) / n_neg - p * np.asarray(covered_pos) / n_pos - eta * np.asarray(bits)


def _best_occam_stump(
    X: np.ndarray,
    y: np.ndarray,
    ranges: np.ndarray,
    remaining: np.ndarray,
    available: np.ndarray,
    params: LearnerParams,
    n_neg: int,
    n_pos: int,
) -> Optional[_Choice]:
    rows = np.flatnonzero(remaining)
    neg = y[rows] == 0
    pos = ~neg
    directions = np.array([1, -1])
    best: Optional[_Choice] = None

    for cols in _attribute_chunks(available):
        values = X[np.ix_(rows, cols)]
        lower, upper = ranges[cols, 0], ranges[cols, 1]
        below = values[None, :, :] <= values[:, None, :]
        above = values[None, :, :] >= values[:, None, :]
        nxt = np.where(values[None, :, :] > values[:, None, :], values[None, :, :], np.inf).min(axis=1)
        prv = np.where(values[None, :, :] < values[:, None, :], values[None, :, :], -np.inf).max(axis=1)

        # d = +1: しきい値 t は [v, 次の値) で同じ (Q, R) を与える
        # d = -1: しきい値 t は (前の値, v] で同じ (Q, R) を与える
        has_next = np.isfinite(nxt)
        has_prev = np.isfinite(prv)
        a = np.stack([values, np.where(has_prev, prv, lower)])
        b = np.stack([np.where(has_next, nxt, upper), values])
        left_closed = np.stack([np.ones_like(has_next), ~has_prev])
        right_closed = np.stack([~has_next, np.ones_like(has_prev)])
        bits, codes, thresholds = _dyadic_search(lower, upper, a, b, left_closed, right_closed)

        covered_neg = np.stack([below[:, neg, :].sum(axis=1), above[:, neg, :].sum(axis=1)])
        covered_pos = np.stack([below[:, pos, :].sum(axis=1), above[:, pos, :].sum(axis=1)])
        utility = occam_utility(covered_neg, n_neg, covered_pos, n_pos, params.p, params.eta, np.maximum(bits, 0))
        utility = np.where(bits >= 0, utility, -np.inf)

        shape = utility.shape

        def keys_at(positions):
            di, vi, ci = np.unravel_index(positions, shape)
            return cols[ci], di, values[vi, ci]

        position = _argmax_tiebreak(utility, keys_at)
        if position is None:
            continue
        di, vi, ci = np.unravel_index(position, shape)
        candidate = _Choice(
            float(utility[di, vi, ci]),
            int(cols[ci]),
            int(directions[di]),
            float(a[di, vi, ci]),
            float(b[di, vi, ci]),
            bits=int(bits[di, vi, ci]),
            code=int(codes[di, vi, ci]),
            threshold=float(thresholds[di, vi, ci]),
        )
        if _better(candidate, best):
            best = candidate

    return best


def occam_learn(S: Dataset, params: LearnerParams) -> OccamModel:
    """
    Occam の貪欲法 (U = |Q|/N' - p|R|/|P| - η l)

    候補は各属性の値の間の区間で、同じ (Q, R) を与えるしきい値の区間を
    最小ビット数の二進点で符号化する。

    Args:
        S: 訓練データ
        params: 学習パラメータ

    Returns:
        OccamModel
    """
    _check_training_set(S)
    X, y = S.X, S.y
    if S.n_negative == 0:
        logger.warning("No negative examples in training set: returning the empty conjunction")
        return OccamModel()

    n_pos = max(S.n_positive, 1)
    remaining = np.ones(S.m, dtype=bool)
    available = S.usable.copy()
    stumps: List[DecisionStump] = []
    bit_lengths: List[int] = []
    code_indices: List[int] = []
    intervals: List[Tuple[float, float]] = []

    while len(stumps) < params.v_max:
        n_neg = int(np.count_nonzero(remaining & (y == 0)))
        if n_neg == 0:
            break
        best = _best_occam_stump(X, y, S.ranges, remaining, available, params, n_neg, n_pos)
        if best is None or best.utility <= 0:
            break
        bits, code = best.bits, best.code
        stump = DecisionStump(best.k, best.threshold, best.d)
        covered = remaining & (stump_predict(stump, X) == 0)
        remaining &= ~covered
        available[best.k] = False
        stumps.append(stump)
        bit_lengths.append(bits)
        code_indices.append(code)
        intervals.append((best.first, best.second))
        logger.debug(f"Occam stump {len(stumps)}: {stump} ({bits} bits, utility {best.utility:g})")

    logger.info(f"Occam greedy selected {len(stumps)} stumps using {sum(bit_lengths)} bits")
    return OccamModel(tuple(stumps), tuple(bit_lengths), tuple(code_indices), tuple(intervals))


def _soft_state(y: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    alive = np.flatnonzero(weights > 0)
    neg_w = np.where(y[alive] == 0, weights[alive], 0.0)
    pos_w = np.where(y[alive] == 1, weights[alive], 0.0)
    return alive, neg_w, pos_w


def _best_soft_interval(
    X: np.ndarray,
    y: np.ndarray,
    ranges: np.ndarray,
    weights: np.ndarray,
    available: np.ndarray,
    params: LearnerParams,
    n_pos: int,
) -> Optional[_Choice]:
    alive, neg_w, pos_w = _soft_state(y, weights)
    mass = neg_w.sum()
    directions = np.array([1, -1])
    best: Optional[_Choice] = None
    count = alive.size
    chunk = int(np.clip(SOFT_CHUNK_ELEMENTS // max(count * count, 1), 1, ATTRIBUTE_CHUNK))

    for cols in _attribute_chunks(available, chunk):
        raw = X[np.ix_(alive, cols)]
        lower, upper = ranges[cols, 0], ranges[cols, 1]
        order = np.argsort(raw, axis=0, kind="stable")
        values = np.take_along_axis(raw, order, axis=0)

        first = np.ones_like(values, dtype=bool)
        first[1:] = values[1:] != values[:-1]
        last = np.ones_like(values, dtype=bool)
        last[:-1] = values[:-1] != values[1:]

        # a は値の最初の出現位置 i、b は値の最後の出現位置 j
        a = values[:, None, :]
        b = values[None, :, :]
        valid = first[:, None, :] & last[None, :, :] & (b > a)
        width = np.where(valid, b - a, 1.0)

        def contributions(w):
            sorted_w = w[order]
            zero = np.zeros((1, values.shape[1]))
            total = np.vstack([zero, np.cumsum(sorted_w, axis=0)])
            weighted = np.vstack([zero, np.cumsum(sorted_w * values, axis=0)])
            inside = total[1:][None, :, :] - total[:-1][:, None, :]
            inside_x = weighted[1:][None, :, :] - weighted[:-1][:, None, :]
            plus = total[:-1][:, None, :] + (b * inside - inside_x) / width
            minus = (total[-1] - total[1:])[None, :, :] + (inside_x - a * inside) / width
            full_plus = (upper * total[-1] - weighted[-1]) / (upper - lower)
            full_minus = (weighted[-1] - lower * total[-1]) / (upper - lower)
            return np.stack([plus, minus]), np.stack([full_plus, full_minus])

        cover, cover_full = contributions(neg_w)
        error, error_full = contributions(pos_w)
        log_ratio = np.log((upper - lower) / width)
        utility = cover / mass - params.p * error / n_pos - params.eta * log_ratio[None]
        utility = np.where(valid[None], utility, -np.inf)
        # 全範囲 (A, B) の候補は ln((B - A)/(b - a)) = 0
        utility_full = cover_full / mass - params.p * error_full / n_pos
        utilities = np.concatenate([utility.ravel(), utility_full.ravel()])

        def keys_at(positions):
            inner = positions[positions < utility.size]
            outer = positions[positions >= utility.size] - utility.size
            di, ai, bi, ci = np.unravel_index(inner, utility.shape)
            fd, fc = np.unravel_index(outer, utility_full.shape)
            return (
                np.concatenate([cols[ci], cols[fc]]),
                np.concatenate([di, fd]),
                np.concatenate([values[ai, ci], lower[fc]]),
                np.concatenate([values[bi, ci], upper[fc]]),
            )

        position = _argmax_tiebreak(utilities, keys_at)
        if position is None:
            continue
        k_key, d_key, a_key, b_key = (key[0] for key in keys_at(np.array([position])))
        candidate = _Choice(
            float(utilities[position]),
            int(k_key),
            int(directions[d_key]),
            float(a_key),
            float(b_key),
        )
        if _better(candidate, best):
            best = candidate

    return best


def _best_fixed_interval(
    X: np.ndarray,
    y: np.ndarray,
    ranges: np.ndarray,
    weights: np.ndarray,
    available: np.ndarray,
    params: LearnerParams,
    n_pos: int,
) -> Optional[_Choice]:
    alive, neg_w, pos_w = _soft_state(y, weights)
    mass = neg_w.sum()
    gamma = float(params.gamma)  # type: ignore[arg-type]
    directions = np.array([1, -1])
    best: Optional[_Choice] = None

    for cols in _attribute_chunks(available):
        raw = X[np.ix_(alive, cols)]
        if raw.shape[0] < 2:
            continue
        lower, upper = ranges[cols, 0], ranges[cols, 1]
        values = np.sort(raw, axis=0)
        centers = (values[:-1] + values[1:]) / 2.0
        distinct = values[1:] > values[:-1]
        a = np.maximum(lower[None, :], centers - gamma)
        b = np.minimum(upper[None, :], centers + gamma)
        valid = distinct & (b > a)
        width = np.where(valid, b - a, 1.0)

        # ramp は d = +1 の σ、d = -1 では 1 - ramp が σ
        ramp = np.clip((raw[None, :, :] - a[:, None, :]) / width[:, None, :], 0.0, 1.0)
        cover = np.stack([((1.0 - ramp) * neg_w[None, :, None]).sum(axis=1), (ramp * neg_w[None, :, None]).sum(axis=1)])
        error = np.stack([((1.0 - ramp) * pos_w[None, :, None]).sum(axis=1), (ramp * pos_w[None, :, None]).sum(axis=1)])
        log_ratio = np.log((upper[None, :] - lower[None, :]) / width)
        utility = cover / mass - params.p * error / n_pos - params.eta * log_ratio[None]
        utility = np.where(valid[None], utility, -np.inf)

        shape = utility.shape

        def keys_at(positions):
            di, ci, ki = np.unravel_index(positions, shape)
            return cols[ki], di, a[ci, ki], b[ci, ki]

        position = _argmax_tiebreak(utility, keys_at)
        if position is None:
            continue
        di, ci, ki = np.unravel_index(position, shape)
        candidate = _Choice(
            float(utility[di, ci, ki]), int(cols[ki]), int(directions[di]), float(a[ci, ki]), float(b[ci, ki])
        )
        if _better(candidate, best):
            best = candidate

    return best


def _soft_greedy(S: Dataset, params: LearnerParams, search: Callable, available: np.ndarray) -> PacBayesModel:
    X, y = S.X, S.y
    n_pos = max(S.n_positive, 1)
    # 各例のこれまでの決定株の σ の積
    weights = np.ones(S.m, dtype=np.float64)
    stumps: List[IntervalStump] = []
    ratios: List[float] = []

    while len(stumps) < params.v_max:
        mass = float(weights[y == 0].sum())
        if mass < SOFT_MASS_EPS:
            break
        best = search(X, y, S.ranges, weights, available, params, n_pos)
        if best is None or best.utility <= 0:
            break
        stump = IntervalStump(best.k, best.first, best.second, best.d)
        lower, upper = S.ranges[best.k]
        weights = weights * sigma(stump, X)
        available[best.k] = False
        stumps.append(stump)
        ratios.append(float(min(1.0, stump.ratio(lower, upper))))
        logger.debug(
            f"Soft stump {len(stumps)}: k={stump.k} d={stump.d} "
            f"[{format_real(stump.a)}, {format_real(stump.b)}] (utility {best.utility:g})"
        )

    return PacBayesModel(tuple(stumps), tuple(ratios), params.gamma if search is _best_fixed_interval else None)


def pacbayes_learn(S: Dataset, params: LearnerParams) -> PacBayesModel:
    """
    PAC-Bayes のソフト貪欲法 (U = C/N - p E/|P| - η ln((B - A)/(b - a)))

    候補区間は属性値の組と全範囲 (A, B)。∏σ が 0 になった例は取り除く。

    Args:
        S: 訓練データ
        params: 学習パラメータ

    Returns:
        PacBayesModel（Bayes 分類器で予測）
    """
    _check_training_set(S)
    if S.n_negative == 0:
        logger.warning("No negative examples in training set: returning the empty conjunction")
        return PacBayesModel()
    model = _soft_greedy(S, params.model_copy(update={"gamma": None}), _best_soft_interval, S.usable.copy())
    logger.info(f"PAC-Bayes soft greedy selected {model.size} stumps")
    return model


def fixed_margin_learn(S: Dataset, params: LearnerParams) -> PacBayesModel:
    """
    固定マージンのヒューリスティック

    候補区間は隣り合う値の中点 c を中心とする [c - γ, c + γ] を [A, B] に切り詰めたもの。

    Args:
        S: 訓練データ
        params: gamma を含む学習パラメータ

    Returns:
        PacBayesModel（区間中点の決定株の連言で予測）
    """
    _check_training_set(S)
    if params.gamma is None:
        raise ValueError("fixed-margin learner requires gamma")
    available = S.usable & (S.ranges[:, 1] - S.ranges[:, 0] >= 2.0 * params.gamma)
    if not available.any():
        raise ValueError("margin exceeds every attribute range")
    if S.n_negative == 0:
        logger.warning("No negative examples in training set: returning the empty conjunction")
        return PacBayesModel(gamma=params.gamma)
    model = _soft_greedy(S, params, _best_fixed_interval, available)
    logger.info(f"Fixed-margin heuristic selected {model.size} stumps (gamma={params.gamma:g})")
    return model


LEARNERS: Dict[str, Callable[[Dataset, LearnerParams], LearnedModel]] = {
    "sc": greedy_sc_learn,
    "occam": occam_learn,
    "pacbayes": pacbayes_learn,
    "pacbayes-fixed": fixed_margin_learn,
}


def get_learner(kind: str) -> Callable[[Dataset, LearnerParams], LearnedModel]:
    config.get_learner_info(kind)
    return LEARNERS[kind]


def learn_disjunction(S: Dataset, learner: Union[str, Callable], params: LearnerParams) -> LearnedModel:
    """
    ラベルを入れ替えたデータで連言を学習し、選言として返す

    Args:
        S: 訓練データ
        learner: 学習器またはそのキー
        params: 学習パラメータ

    Returns:
        target="disjunction" のモデル
    """
    learn = get_learner(learner) if isinstance(learner, str) else learner
    model = learn(S.swap_labels(), params)
    return replace(model, target="disjunction")


def train_model(S: Dataset, kind: str, params: LearnerParams, target: str = "conjunction") -> LearnedModel:
    """学習器のキーと対象（連言・選言）を指定して学習"""
    if target not in TARGETS:
        raise ValueError(f"Unknown target: {target}. Available: {list(TARGETS)}")
    if target == "disjunction":
        return learn_disjunction(S, kind, params)
    return get_learner(kind)(S, params)


def model_bound(
    model: LearnedModel,
    S: Dataset,
    delta: float = config.DEFAULT_DELTA,
    size_prior: Optional[str] = None,
) -> BoundReport:
    """
    学習済みモデルの訓練データ上でのリスク上界

    Args:
        model: 学習済みモデル
        S: 学習に用いたデータ
        delta: 信頼パラメータ
        size_prior: 決定株の数の事前分布

    Returns:
        BoundReport
    """
    data = S.swap_labels() if model.target == "disjunction" else S
    prior = make_size_prior(size_prior, S.n)
    if isinstance(model, PacBayesModel):
        risk = gibbs_empirical_risk(model.gibbs, data)
        return pacbayes_report(S.m, S.n, model.size, list(model.ratios), risk, delta, prior)

    errors = int(np.count_nonzero(conjunction_predict(model.conjunction, data.X) != data.y))
    if isinstance(model, CompressionModel):
        return sc_bound(S.m, model.size, errors, S.n, delta)
    return occam_bound(S.m, errors, S.n, model.size, list(model.bit_lengths), delta, prior)


def training_errors(model: LearnedModel, S: Dataset) -> int:
    """予測に使う分類器の訓練誤り数"""
    return int(np.count_nonzero(np.asarray(model.predict(S.X)) != S.y))
