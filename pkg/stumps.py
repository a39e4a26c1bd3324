"""
決定株とその連言
区間決定株による Gibbs 分類器・Bayes 分類器の評価
"""

from dataclasses import dataclass
from typing import Callable, Iterable, Tuple

import numpy as np

# 予測はすべて単一ベクトル (n,) または行列 (m, n) を受け付ける


def format_real(value: float) -> str:
    """往復で値が変わらない 17 桁表記"""
    return format(float(value), ".17g")


def _check_direction(d: int) -> None:
    if d not in (-1, 1):
        raise ValueError(f"Invalid decision stump direction: {d}")


def _check_ascending(indices: Iterable[int]) -> None:
    previous = -1
    for k in indices:
        if k <= previous:
            raise ValueError(f"Attribute indices must be strictly increasing, got {k} after {previous}")
        previous = k


@dataclass(frozen=True)
class DecisionStump:
    """属性 k・しきい値 t・方向 d の決定株"""

    k: int
    t: float
    d: int

    def __post_init__(self):
        _check_direction(self.d)
        if self.k < 0:
            raise ValueError(f"Attribute index must be nonnegative, got {self.k}")

    def predict(self, x):
        return stump_predict(self, x)

    def __str__(self):
        return f"x[{self.k}] {'>' if self.d == 1 else '<'} {format_real(self.t)}"


@dataclass(frozen=True)
class StumpConjunction:
    """属性番号の昇順に並んだ決定株の連言（空の連言は常に 1 を出力）"""

    stumps: Tuple[DecisionStump, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stumps", tuple(self.stumps))
        _check_ascending(s.k for s in self.stumps)

    @classmethod
    def from_unsorted(cls, stumps: Iterable[DecisionStump]) -> "StumpConjunction":
        return cls(tuple(sorted(stumps, key=lambda s: s.k)))

    @property
    def attributes(self) -> Tuple[int, ...]:
        return tuple(s.k for s in self.stumps)

    def __len__(self):
        return len(self.stumps)

    def predict(self, x):
        return conjunction_predict(self, x)


@dataclass(frozen=True)
class IntervalStump:
    """マージン区間 [a, b] 上で一様にしきい値を選ぶ決定株"""

    k: int
    a: float
    b: float
    d: int

    def __post_init__(self):
        _check_direction(self.d)
        if self.k < 0:
            raise ValueError(f"Attribute index must be nonnegative, got {self.k}")
        if not self.a <= self.b:
            raise ValueError(f"Interval stump requires a <= b, got [{self.a}, {self.b}]")

    @property
    def degenerate(self) -> bool:
        return self.a == self.b

    def midpoint(self) -> DecisionStump:
        """区間の中点をしきい値とする決定株"""
        return DecisionStump(self.k, (self.a + self.b) / 2.0, self.d)

    def ratio(self, lower: float, upper: float) -> float:
        """(b - a) / (B - A)"""
        return (self.b - self.a) / (upper - lower)


@dataclass(frozen=True)
class GibbsConjunction:
    """区間決定株の連言（Gibbs 分類器の事後分布）"""

    stumps: Tuple[IntervalStump, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stumps", tuple(self.stumps))
        _check_ascending(s.k for s in self.stumps)

    @classmethod
    def from_unsorted(cls, stumps: Iterable[IntervalStump]) -> "GibbsConjunction":
        return cls(tuple(sorted(stumps, key=lambda s: s.k)))

    @property
    def attributes(self) -> Tuple[int, ...]:
        return tuple(s.k for s in self.stumps)

    def __len__(self):
        return len(self.stumps)

    def midpoint_conjunction(self) -> StumpConjunction:
        return StumpConjunction(tuple(s.midpoint() for s in self.stumps))


def stump_predict(s: DecisionStump, x):
    """(x_k - t) d > 0 なら 1、境界を含めそれ以外は 0"""
    values = np.asarray(x, dtype=np.float64)[..., s.k]
    return ((values - s.t) * s.d > 0).astype(np.int8)


def conjunction_predict(c: StumpConjunction, x):
    """すべての決定株が 1 を出力したときのみ 1"""
    x = np.asarray(x, dtype=np.float64)
    labels = np.ones(x.shape[:-1], dtype=np.int8)
    for s in c.stumps:
        labels &= stump_predict(s, x)
    return labels[()]


def sigma(s: IntervalStump, x):
    """
    区間決定株が 1 を出力する確率 σ

    a = b のときは指示関数 I((x_k - a) d > 0) に退化する
    """
    values = np.asarray(x, dtype=np.float64)[..., s.k]
    if s.degenerate:
        return ((values - s.a) * s.d > 0).astype(np.float64)
    width = s.b - s.a
    if s.d == 1:
        ramp = (values - s.a) / width
    else:
        ramp = (s.b - values) / width
    return np.clip(ramp, 0.0, 1.0)


def gibbs_product(g: GibbsConjunction, x):
    """∏σ（空の積は 1）"""
    x = np.asarray(x, dtype=np.float64)
    product = np.ones(x.shape[:-1], dtype=np.float64)
    for s in g.stumps:
        product = product * sigma(s, x)
    return product[()]


def gibbs_example_risk(g: GibbsConjunction, x, y):
    """R_(x,y)(G) = (1 - 2y)(∏σ - y)"""
    y = np.asarray(y, dtype=np.float64)
    return ((1.0 - 2.0 * y) * (gibbs_product(g, x) - y))[()]


def gibbs_empirical_risk(g: GibbsConjunction, S) -> float:
    """標本 S 上での Gibbs 分類器の経験リスク"""
    if S.m < 1:
        raise ValueError("Empirical risk requires at least one example")
    return float(np.mean(gibbs_example_risk(g, S.X, S.y)))


def bayes_predict(g: GibbsConjunction, x):
    """∏σ > 1/2 なら 1（1/2 ちょうどは 0）"""
    return (np.asarray(gibbs_product(g, x)) > 0.5).astype(np.int8)[()]


def empirical_risk(classifier: Callable, S) -> float:
    """
    誤分類された例の割合

    Args:
        classifier: 行列 (m, n) を受け取りラベル列を返す関数
        S: ラベル付きデータセット

    Returns:
        経験リスク
    """
    if S.m < 1:
        raise ValueError("Empirical risk requires at least one example")
    predictions = np.asarray(classifier(S.X))
    return float(np.mean(predictions != S.y))
