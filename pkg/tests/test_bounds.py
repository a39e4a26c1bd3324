"""
リスク上界の数値計算のテスト
"""

import itertools
import math

import numpy as np
import pytest
from scipy.special import comb

from bounds import (
    SizePrior,
    binomial_tail,
    binomial_tail_inversion,
    kl_bernoulli,
    kl_sup_inversion,
    log_binomial,
    occam_bound,
    occam_log_prior,
    occam_prior,
    pacbayes_bound,
    pacbayes_psi,
    pacbayes_report,
    recompute_bound,
    sc_bound,
    zeta,
)

LUNG_N = 918
LUNG_RATIO = 0.12


class TestSpecialFunctions:
    """二項係数・二項裾・ζ"""

    @pytest.mark.parametrize("n,k", [(10, 3), (100, 50), (5000, 17), (10_000, 9_999)])
    def test_log_binomial(self, n, k):
        """対数の和による計算と一致する"""
        expected = sum(math.log(i) for i in range(n - k + 1, n + 1)) - sum(math.log(i) for i in range(1, k + 1))
        assert log_binomial(n, k) == pytest.approx(expected, rel=1e-10)

    def test_binomial_tail_small(self):
        """直接和と一致する"""
        assert binomial_tail(1, 2, 0.5) == pytest.approx(0.75)
        assert binomial_tail(0, 5, 0.0) == 1.0
        assert binomial_tail(2, 5, 1.0) == pytest.approx(0.0)
        expected = sum(comb(12, i) * 0.3**i * 0.7 ** (12 - i) for i in range(4))
        assert binomial_tail(3, 12, 0.3) == pytest.approx(expected, rel=1e-10)

    def test_binomial_tail_full(self):
        """κ = m なら裾確率は 1"""
        assert binomial_tail(7, 7, 0.9) == 1.0

    def test_binomial_tail_invalid(self):
        """範囲外の引数は拒否する"""
        with pytest.raises(ValueError):
            binomial_tail(3, 2, 0.5)
        with pytest.raises(ValueError):
            binomial_tail(1, 2, 1.5)

    def test_zeta_sums_below_one(self):
        """ζ の和は 1 を超えない"""
        assert zeta(0) == pytest.approx(6.0 / math.pi**2)
        assert sum(zeta(a) for a in range(100_000)) < 1.0

    def test_size_priors(self):
        """サイズ事前分布の総和は 1 以下"""
        uniform = SizePrior("uniform", 9)
        assert sum(uniform.prob(d) for d in range(10)) == pytest.approx(1.0)
        assert uniform.prob(10) == 0.0
        assert sum(SizePrior("quadratic", 50).prob(d) for d in range(51)) < 1.0
        with pytest.raises(ValueError):
            SizePrior("cubic", 3)


class TestBinomialTailInversion:
    """二項裾の逆関数"""

    def test_zero_errors_closed_form(self):
        """κ = 0 では 1 - δ^(1/m)"""
        assert binomial_tail_inversion(0, 10, 0.05) == pytest.approx(1 - 0.05 ** (1 / 10), abs=1e-9)
        assert binomial_tail_inversion(0, 10, 0.05) == pytest.approx(0.2589, abs=1e-4)

    def test_edge_cases(self):
        """κ = m なら 1、δ = 1 なら 0"""
        assert binomial_tail_inversion(5, 5, 0.05) == 1.0
        assert binomial_tail_inversion(2, 5, 1.0) == 0.0
        with pytest.raises(ValueError):
            binomial_tail_inversion(0, 5, 0.0)

    @pytest.mark.parametrize(
        "kappa,m,delta",
        [(k, m, d) for m in (5, 20, 200) for k in (0, 1, m // 3, m - 1) for d in (0.01, 0.05, 0.5)],
    )
    def test_round_trip_and_sup(self, kappa, m, delta):
        """内点では Bin(κ, m, r) = δ、少し右では δ 未満"""
        r = binomial_tail_inversion(kappa, m, delta)
        assert 0.0 < r < 1.0
        assert binomial_tail(kappa, m, r) == pytest.approx(delta, abs=1e-7)
        assert binomial_tail(kappa, m, min(1.0, r + 1e-6)) < delta

    def test_inversion_grid(self):
        """m ∈ {10, 100, 1000} と κ・δ の 10×10 格子で Bin(κ, m, r) ∈ [δ - 1e-7, δ]"""
        for m in (10, 100, 1000):
            for kappa in np.unique(np.linspace(0, m - 1, 10).astype(int)):
                for delta in np.geomspace(1e-4, 0.9, 10):
                    r = binomial_tail_inversion(int(kappa), m, float(delta))
                    tail = binomial_tail(int(kappa), m, r)
                    assert delta - 1e-7 <= tail <= delta + 1e-9
                    assert binomial_tail(int(kappa), m, min(1.0, r + 1e-6)) < delta

    def test_monotone_in_errors(self):
        """誤り数が増えると上界も増える"""
        values = [binomial_tail_inversion(k, 50, 0.05) for k in range(10)]
        assert values == sorted(values)


class TestOccamBound:
    """Occam 上界"""

    def test_prior_oracle(self):
        """n=10, |k|=1, l=(2) の事前確率"""
        assert occam_prior(10, 1, [2]) == pytest.approx(1.2833e-4, rel=1e-4)
        assert occam_log_prior(10, 1, [2]) == pytest.approx(-8.961, abs=1e-3)

    def test_prior_sums_below_one(self):
        """n=3, l_i <= 3 の全仮説で事前確率の和は 1 以下"""
        n = 3
        total = 0.0
        for size in range(n + 1):
            for attributes in itertools.combinations(range(n), size):
                for bits in itertools.product(range(4), repeat=size):
                    # 方向 2^|k| と各長さの符号 2^l 通り
                    count = 2**size * math.prod(2**l for l in bits)
                    total += count * occam_prior(n, size, list(bits))
        assert total <= 1.0

    def test_bound_oracle(self):
        """m=20, 誤り 0, n=10, |k|=1, l=(2), δ=0.05"""
        report = occam_bound(20, 0, 10, 1, [2], delta=0.05)
        assert report.regime == "occam"
        assert report.bound == pytest.approx(0.450, abs=1e-3)
        expected = 1 - (occam_prior(10, 1, [2]) * 0.05) ** (1 / 20)
        assert report.bound == pytest.approx(expected, abs=1e-9)

    def test_longer_code_loosens_bound(self):
        """符号長が長いほど上界は大きい"""
        short = occam_bound(40, 2, 10, 2, [1, 1]).bound
        long = occam_bound(40, 2, 10, 2, [6, 6]).bound
        assert short < long

    def test_invalid_inputs(self):
        """符号長の数と決定株の数が一致しなければ拒否する"""
        with pytest.raises(ValueError):
            occam_bound(20, 0, 10, 2, [1])
        with pytest.raises(ValueError):
            occam_bound(20, 0, 10, 1, [1], delta=0.0)


class TestSampleCompressionBound:
    """標本圧縮上界"""

    def test_bound_oracle(self):
        """m=20, |i|=1, |j|=0, n=10, δ=0.05"""
        report = sc_bound(20, 1, 0, 10, 0.05)
        assert report.bound == pytest.approx(0.4503, abs=1e-4)
        assert report.components["compress_size"] == 1

    def test_requires_room(self):
        """|i| + |j| >= m は拒否する"""
        with pytest.raises(ValueError):
            sc_bound(5, 3, 2, 10)

    def test_monotone_in_errors(self):
        """圧縮集合外の誤りが増えると上界も増える"""
        values = [sc_bound(100, 3, j, 50).bound for j in range(10)]
        assert values == sorted(values)

    def test_empty_compression_set(self):
        """空の連言でも計算できる"""
        report = sc_bound(30, 0, 10, 100)
        assert 0.0 < report.bound <= 1.0


class TestKlInversion:
    """Bernoulli KL とその逆関数"""

    def test_kl_oracle(self):
        """kl(0.1 || 0.5)"""
        assert kl_bernoulli(0.1, 0.5) == pytest.approx(0.368064, abs=1e-6)
        assert kl_bernoulli(0.3, 0.3) == 0.0
        assert kl_bernoulli(0.0, 0.0) == 0.0

    def test_kl_undefined(self):
        """p ∈ {0, 1} で q と異なる場合は定義されない"""
        with pytest.raises(ValueError):
            kl_bernoulli(0.2, 0.0)
        with pytest.raises(ValueError):
            kl_bernoulli(0.2, 1.0)

    def test_zero_risk_closed_form(self):
        """q = 0 では 1 - e^(-ψ)"""
        assert kl_sup_inversion(0.0, 0.1) == pytest.approx(1 - math.exp(-0.1), abs=1e-9)

    def test_zero_risk_numpy_scalar(self):
        """q = 0 の numpy スカラーでも 0·ln0 = 0 として反転できる"""
        eps = kl_sup_inversion(np.float64(0.0), np.float64(0.3555))
        assert eps == pytest.approx(1 - math.exp(-0.3555), abs=1e-9)
        assert kl_bernoulli(0.0, eps) == pytest.approx(0.3555, abs=1e-8)

    def test_inversion_grid(self):
        """q と ψ の格子で kl(q || ε) = ψ、少し右では ψ を超える"""
        for q in np.linspace(0.0, 0.5, 10):
            for psi in np.geomspace(1e-3, 1.0, 10):
                eps = kl_sup_inversion(float(q), float(psi))
                assert q <= eps < 1.0
                assert abs(kl_bernoulli(float(q), eps) - psi) <= 1e-7
                assert kl_bernoulli(float(q), min(1.0 - 1e-12, eps + 1e-6)) > psi

    def test_edge_cases(self):
        """ψ = 0 なら q、q = 1 なら 1"""
        assert kl_sup_inversion(0.2, 0.0) == 0.2
        assert kl_sup_inversion(1.0, 0.3) == 1.0
        assert kl_sup_inversion(0.5, 50.0) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("q,psi", [(0.05, 0.1), (0.2, 0.35), (0.4, 0.01), (0.0, 1.0)])
    def test_root_property(self, q, psi):
        """結果 ε は kl(q || ε) = ψ を満たす"""
        eps = kl_sup_inversion(q, psi)
        assert q <= eps < 1.0
        assert kl_bernoulli(q, eps) == pytest.approx(psi, abs=1e-8)


class TestPacBayesBound:
    """PAC-Bayes 上界"""

    def test_psi_oracle(self):
        """m=52, n=918, |k|=1, 比 0.12, δ=0.05"""
        assert pacbayes_psi(52, LUNG_N, 1, [LUNG_RATIO], 0.05) == pytest.approx(0.3555, abs=1e-4)

    def test_bound_oracle(self):
        """リスク 3/52, ψ=0.3555"""
        report = pacbayes_bound(3 / 52, 0.3555)
        assert report.bound == pytest.approx(0.4285, abs=1e-3)
        assert report.components["bayes_bound"] == pytest.approx(min(1.0, 2 * report.bound))

    def test_ratio_range(self):
        """区間の比は (0, 1]"""
        with pytest.raises(ValueError):
            pacbayes_psi(52, 10, 1, [0.0])
        with pytest.raises(ValueError):
            pacbayes_psi(52, 10, 1, [1.5])
        with pytest.raises(ValueError):
            pacbayes_psi(52, 10, 2, [0.5])

    def test_wider_margins_tighten_bound(self):
        """マージンが広いほど KL が小さい"""
        narrow = pacbayes_psi(100, 50, 2, [0.01, 0.01])
        wide = pacbayes_psi(100, 50, 2, [0.5, 0.5])
        assert wide < narrow

    def test_lung_extrapolation(self):
        """m=500 に外挿した Lung の設定で、リスク 0.02〜0.06 の上界はおよそ 9〜16%"""
        bounds = [
            pacbayes_report(500, LUNG_N, 1, [LUNG_RATIO], risk, 0.05).bound for risk in np.linspace(0.02, 0.06, 9)
        ]
        assert all(0.085 <= b <= 0.16 for b in bounds)
        assert pacbayes_report(500, LUNG_N, 1, [LUNG_RATIO], 0.03, 0.05).bound == pytest.approx(0.12, abs=0.02)

    def test_small_sample_bracket(self):
        """m=52 でリスクを 0〜3/52 に動かすと bound × m は 18 をまたぐ"""
        low = pacbayes_report(52, LUNG_N, 1, [LUNG_RATIO], 0.0, 0.05).bound * 52
        high = pacbayes_report(52, LUNG_N, 1, [LUNG_RATIO], 0.0577, 0.05).bound * 52
        assert low < 18 < high


class TestRecomputeBound:
    """BoundReport の構成要素からの再計算"""

    @pytest.mark.parametrize(
        "report",
        [
            occam_bound(60, 4, 30, 3, [2, 5, 0]),
            sc_bound(60, 3, 4, 30),
            pacbayes_report(60, 30, 2, [0.3, 0.05], 0.1),
            pacbayes_bound(0.1, 0.4),
        ],
    )
    def test_self_consistency(self, report):
        """再計算した値は 1e-9 以内で一致する"""
        assert recompute_bound(report) == pytest.approx(report.bound, abs=1e-9)

    def test_render(self):
        """key=value 形式で出力する"""
        text = occam_bound(20, 0, 10, 1, [2]).render()
        assert text.splitlines()[0] == "regime=occam"
        assert "bit_lengths=2" in text


@pytest.mark.slow
class TestStatisticalValidity:
    """上界が確率 1 - δ 以上で真のリスクを上回る"""

    def test_binomial_tail_inversion_coverage(self):
        """固定した仮説の真のリスクを下回る割合は δ 以下"""
        rng = np.random.default_rng(5)
        m, true_risk, delta = 100, 0.2, 0.1
        errors = rng.binomial(m, true_risk, size=5000)
        covered = {k: binomial_tail_inversion(k, m, delta) >= true_risk for k in range(m + 1)}
        violations = sum(not covered[int(k)] for k in errors)
        assert violations / len(errors) <= delta

    def test_occam_bound_coverage(self):
        """固定した仮説の Occam 上界が真のリスクを下回る割合は δ 以下"""
        rng = np.random.default_rng(11)
        m, true_risk, delta, draws = 100, 0.2, 0.05, 1000
        errors = rng.binomial(m, true_risk, size=draws)
        bounds = {int(k): occam_bound(m, int(k), 10, 1, [2], delta=delta).bound for k in np.unique(errors)}
        violations = sum(bounds[int(k)] < true_risk for k in errors)
        assert violations / draws <= delta + 3 * math.sqrt(delta / draws)
