"""
リスク上界の数値計算

二項裾とその逆関数、Bernoulli KL の逆関数、事前分布・メッセージ分布と
Occam / 標本圧縮 / PAC-Bayes の各上界
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from scipy.optimize import bisect
from scipy.special import gammaln, logsumexp, rel_entr, xlog1py, xlogy

import config
from stumps import format_real

logger = logging.getLogger(__name__)

# 6 / π²
ZETA_NORMALIZER = 6.0 / math.pi**2

# 二分法の許容誤差
BISECT_XTOL = 1e-12

SIZE_PRIORS = ("quadratic", "uniform")


def log_zeta(a: int) -> float:
    """ln ζ(a) = ln(6/π²) - 2 ln(a + 1)"""
    if a < 0:
        raise ValueError(f"zeta is defined for nonnegative integers, got {a}")
    return math.log(ZETA_NORMALIZER) - 2.0 * math.log(a + 1)


def zeta(a: int) -> float:
    """ζ(a) = (6/π²)(a + 1)^-2"""
    return math.exp(log_zeta(a))


@dataclass(frozen=True)
class SizePrior:
    """決定株の個数 d に対する事前分布 p(d)"""

    kind: str = "quadratic"
    n: int = 0

    def __post_init__(self):
        if self.kind not in SIZE_PRIORS:
            raise ValueError(f"Unknown size prior: {self.kind}. Available: {list(SIZE_PRIORS)}")
        if self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")

    def log_prob(self, d: int) -> float:
        if d < 0:
            raise ValueError(f"size must be nonnegative, got {d}")
        if self.kind == "uniform":
            if d > self.n:
                return -math.inf
            return -math.log(self.n + 1)
        return log_zeta(d)

    def prob(self, d: int) -> float:
        return math.exp(self.log_prob(d))


def make_size_prior(kind: Optional[str], n: int) -> SizePrior:
    return SizePrior(kind or config.DEFAULT_SIZE_PRIOR, n)


def log_binomial(n: int, k: int) -> float:
    """ln C(n, k)"""
    if not 0 <= k <= n:
        raise ValueError(f"binomial coefficient requires 0 <= k <= n, got n={n}, k={k}")
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def _check_tail_args(kappa: int, m: int) -> None:
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if not 0 <= kappa <= m:
        raise ValueError(f"kappa must lie in [0, m], got kappa={kappa}, m={m}")


def log_binomial_tail(kappa: int, m: int, r: float) -> float:
    """ln Bin(κ, m, r)（対数空間で和を取る）"""
    _check_tail_args(kappa, m)
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if kappa >= m:
        return 0.0
    i = np.arange(kappa + 1, dtype=np.float64)
    log_terms = gammaln(m + 1) - gammaln(i + 1) - gammaln(m - i + 1) + xlogy(i, r) + xlog1py(m - i, -r)
    return float(min(0.0, logsumexp(log_terms)))


def binomial_tail(kappa: int, m: int, r: float) -> float:
    """
    二項分布の下側裾 Bin(κ, m, r) = Σ_{i=0..κ} C(m, i) r^i (1 - r)^(m - i)

    Args:
        kappa: 誤り数の上限
        m: 試行回数
        r: 誤り確率

    Returns:
        裾確率
    """
    return math.exp(log_binomial_tail(kappa, m, r))


def _binomial_tail_inversion_log(kappa: int, m: int, log_delta: float) -> float:
    _check_tail_args(kappa, m)
    if kappa >= m:
        return 1.0
    if log_delta >= 0.0:
        return 0.0

    def excess(r: float) -> float:
        return log_binomial_tail(kappa, m, r) - log_delta

    root = bisect(excess, 0.0, 1.0, xtol=BISECT_XTOL)
    # 返す値で Bin(κ, m, r) <= δ となるよう上側に寄せる
    return min(1.0, root + 2.0 * BISECT_XTOL)


def binomial_tail_inversion(kappa: int, m: int, delta: float) -> float:
    """
    sup { r : Bin(κ, m, r) >= δ }

    Args:
        kappa: 誤り数
        m: 例の数
        delta: 信頼パラメータ (0, 1]

    Returns:
        [0, 1] の値（κ = m なら 1）
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return _binomial_tail_inversion_log(kappa, m, math.log(delta))


def occam_log_prior(n: int, k_size: int, bit_lengths: Sequence[int], size_prior: Optional[SizePrior] = None) -> float:
    """
    ln P_H(h) = -ln C(n,|k|) + ln p(|k|) - |k| ln 2 + Σ (ln ζ(l_i) - l_i ln 2)

    Args:
        n: 属性数
        k_size: 決定株の数
        bit_lengths: 各しきい値の符号長
        size_prior: 決定株の数の事前分布

    Returns:
        事前確率の対数
    """
    if len(bit_lengths) != k_size:
        raise ValueError(f"expected {k_size} bit lengths, got {len(bit_lengths)}")
    if k_size > n:
        raise ValueError(f"k_size={k_size} exceeds n={n}")
    if any(l < 0 for l in bit_lengths):
        raise ValueError("bit lengths must be nonnegative")
    size_prior = size_prior or make_size_prior(None, n)
    log_code = sum(log_zeta(int(l)) - int(l) * math.log(2.0) for l in bit_lengths)
    return -log_binomial(n, k_size) + size_prior.log_prob(k_size) - k_size * math.log(2.0) + log_code


def occam_prior(n: int, k_size: int, bit_lengths: Sequence[int], size_prior: Optional[SizePrior] = None) -> float:
    return math.exp(occam_log_prior(n, k_size, bit_lengths, size_prior))


class BoundReport(BaseModel):
    """上界とそれを構成する各項"""

    regime: str
    bound: float = Field(ge=0.0, le=1.0)
    delta: float = Field(gt=0.0, le=1.0)
    empirical_risk: float = Field(ge=0.0, le=1.0)
    components: Dict[str, float] = Field(default_factory=dict)
    vectors: Dict[str, List[float]] = Field(default_factory=dict)

    def render(self) -> str:
        """key=value 形式のテキスト"""
        lines = [
            f"regime={self.regime}",
            f"bound={format_real(self.bound)}",
            f"delta={format_real(self.delta)}",
            f"empirical_risk={format_real(self.empirical_risk)}",
        ]
        lines.extend(f"{key}={format_real(value)}" for key, value in self.components.items())
        lines.extend(f"{key}={','.join(format_real(v) for v in values)}" for key, values in self.vectors.items())
        return "\n".join(lines)


def occam_bound(
    m: int,
    train_errors: int,
    n: int,
    k_size: int,
    bit_lengths: Sequence[int],
    delta: float = config.DEFAULT_DELTA,
    size_prior: Optional[SizePrior] = None,
) -> BoundReport:
    """
    Occam 上界: Bin^-1(κ, m, P_H(h) δ)

    Returns:
        BoundReport
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    _check_tail_args(train_errors, m)
    log_prior = occam_log_prior(n, k_size, bit_lengths, size_prior)
    log_delta_prime = log_prior + math.log(delta)
    bound = _binomial_tail_inversion_log(train_errors, m, log_delta_prime)
    return BoundReport(
        regime="occam",
        bound=bound,
        delta=delta,
        empirical_risk=train_errors / m,
        components={
            "m": m,
            "n": n,
            "k_size": k_size,
            "errors": train_errors,
            "log_prior": log_prior,
            "log_delta_prime": log_delta_prime,
        },
        vectors={"bit_lengths": [float(l) for l in bit_lengths]},
    )


def sc_message_log_prob(n: int, k_size: int) -> float:
    """ln P_M = -ln C(n, |k|) - |k| ln 2"""
    return -log_binomial(n, k_size) - k_size * math.log(2.0)


def sc_bound(
    m: int,
    compress_size: int,
    outside_errors: int,
    n: int,
    delta: float = config.DEFAULT_DELTA,
) -> BoundReport:
    """
    標本圧縮上界

    ε = 1 - exp(-(ln C(m,|i|) + ln C(m-|i|,|j|) + ln(1/P_M) + ln(1/(ζ(|i|)ζ(|j|)δ))) / (m - |i| - |j|))

    Args:
        m: 訓練例の数
        compress_size: 圧縮集合の大きさ |i|（= 決定株の数）
        outside_errors: 圧縮集合外の誤り数 |j|
        n: 属性数
        delta: 信頼パラメータ

    Returns:
        BoundReport
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if compress_size < 0 or outside_errors < 0:
        raise ValueError("compression set size and errors must be nonnegative")
    if compress_size + outside_errors >= m:
        raise ValueError(
            f"compression set plus errors must be smaller than m: {compress_size} + {outside_errors} >= {m}"
        )
    log_choose_set = log_binomial(m, compress_size)
    log_choose_errors = log_binomial(m - compress_size, outside_errors)
    log_message = sc_message_log_prob(n, compress_size)
    log_zetas = log_zeta(compress_size) + log_zeta(outside_errors)
    numerator = log_choose_set + log_choose_errors - log_message - log_zetas - math.log(delta)
    bound = -math.expm1(-numerator / (m - compress_size - outside_errors))
    return BoundReport(
        regime="sc",
        bound=min(1.0, max(0.0, bound)),
        delta=delta,
        empirical_risk=outside_errors / m,
        components={
            "m": m,
            "n": n,
            "compress_size": compress_size,
            "errors": outside_errors,
            "log_choose_set": log_choose_set,
            "log_choose_errors": log_choose_errors,
            "log_message_prob": log_message,
            "log_zetas": log_zetas,
        },
    )


def kl_bernoulli(q: float, p: float) -> float:
    """
    kl(q || p) = q ln(q/p) + (1 - q) ln((1 - q)/(1 - p))

    p が 0 または 1 で q と一致しない場合は定義されない
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p in (0.0, 1.0):
        if q == p:
            return 0.0
        raise ValueError(f"kl({q} || {p}) is undefined")
    return float(rel_entr(q, p) + rel_entr(1.0 - q, 1.0 - p))


def _kl_upper(q: float, eps: float) -> float:
    if eps >= 1.0:
        return math.inf
    return float(rel_entr(q, eps) + rel_entr(1.0 - q, 1.0 - eps))


def kl_sup_inversion(q: float, psi: float) -> float:
    """
    sup { ε : kl(q || ε) <= ψ }

    Args:
        q: 経験リスク [0, 1]
        psi: KL の上限 (>= 0)

    Returns:
        [q, 1] の値
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if psi < 0.0:
        raise ValueError(f"psi must be nonnegative, got {psi}")
    if psi == 0.0 or q >= 1.0:
        return q

    def excess(eps: float) -> float:
        return _kl_upper(q, eps) - psi

    root = bisect(excess, q, 1.0, xtol=BISECT_XTOL)
    return min(1.0, root + 2.0 * BISECT_XTOL)


def _check_ratios(ratios, k_size: int) -> np.ndarray:
    ratios = np.asarray(ratios, dtype=np.float64).reshape(-1)
    if ratios.size != k_size:
        raise ValueError(f"expected {k_size} margin ratios, got {ratios.size}")
    if np.any(ratios <= 0.0) or np.any(ratios > 1.0):
        raise ValueError("margin ratios must lie in (0, 1]")
    return ratios


def pacbayes_kl(n: int, k_size: int, ratios, size_prior: Optional[SizePrior] = None) -> float:
    """KL(Q || P) = ln(C(n,|k|) 2^|k| / p(|k|)) + Σ ln((B - A)/(b - a))"""
    if k_size > n:
        raise ValueError(f"k_size={k_size} exceeds n={n}")
    ratios = _check_ratios(ratios, k_size)
    size_prior = size_prior or make_size_prior(None, n)
    return log_binomial(n, k_size) + k_size * math.log(2.0) - size_prior.log_prob(k_size) - float(np.sum(np.log(ratios)))


def pacbayes_psi(
    m: int,
    n: int,
    k_size: int,
    ratios,
    delta: float = config.DEFAULT_DELTA,
    size_prior: Optional[SizePrior] = None,
) -> float:
    """ψ = (1/m)[KL(Q || P) + ln((m + 1)/δ)]"""
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    return (pacbayes_kl(n, k_size, ratios, size_prior) + math.log((m + 1) / delta)) / m


def pacbayes_bound(gibbs_train_risk: float, psi: float, delta: float = config.DEFAULT_DELTA) -> BoundReport:
    """
    Gibbs リスクの上界 sup{ε : kl(R_S(G) || ε) <= ψ}

    Bayes 分類器のリスクはその 2 倍で抑えられる
    """
    bound = kl_sup_inversion(gibbs_train_risk, psi)
    return BoundReport(
        regime="pacbayes",
        bound=bound,
        delta=delta,
        empirical_risk=gibbs_train_risk,
        components={"gibbs_risk": gibbs_train_risk, "psi": psi, "bayes_bound": min(1.0, 2.0 * bound)},
    )


def pacbayes_report(
    m: int,
    n: int,
    k_size: int,
    ratios,
    gibbs_train_risk: float,
    delta: float = config.DEFAULT_DELTA,
    size_prior: Optional[SizePrior] = None,
) -> BoundReport:
    """ψ の構成要素を含めた PAC-Bayes 上界"""
    ratios = _check_ratios(ratios, k_size)
    kl = pacbayes_kl(n, k_size, ratios, size_prior)
    psi = pacbayes_psi(m, n, k_size, ratios, delta, size_prior)
    report = pacbayes_bound(gibbs_train_risk, psi, delta)
    report.components.update({"m": m, "n": n, "k_size": k_size, "kl": kl})
    report.vectors["ratios"] = [float(r) for r in ratios]
    return report


def recompute_bound(report: BoundReport) -> float:
    """BoundReport の構成要素から上界を組み立て直す"""
    c = report.components
    if report.regime == "occam":
        return _binomial_tail_inversion_log(int(c["errors"]), int(c["m"]), c["log_prior"] + math.log(report.delta))
    if report.regime == "sc":
        numerator = (
            c["log_choose_set"] + c["log_choose_errors"] - c["log_message_prob"] - c["log_zetas"] - math.log(report.delta)
        )
        return min(1.0, max(0.0, -math.expm1(-numerator / (c["m"] - c["compress_size"] - c["errors"]))))
    if report.regime == "pacbayes":
        if "kl" not in c:
            return kl_sup_inversion(c["gibbs_risk"], c["psi"])
        psi = (c["kl"] + math.log((c["m"] + 1) / report.delta)) / c["m"]
        return kl_sup_inversion(c["gibbs_risk"], psi)
    raise ValueError(f"Unknown regime: {report.regime}")
