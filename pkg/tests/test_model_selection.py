"""
入れ子交差検証のテスト
"""

import time

import numpy as np
import pytest

from data import Dataset, SynthSpec, synth_generate
from model_io import loads_model
from model_selection import (
    TABLE_COLUMNS,
    TRAINING_SIZE,
    CVPlan,
    default_grid,
    evaluate_outer_fold,
    nested_cv,
    range_scale,
    render_folds,
    render_table,
    resolve_point,
    stratified_kfold,
    validate_grid,
)

SMALL_GRID = {"p": [1.0, 4.0], "v_max": [1, 3]}


@pytest.fixture(scope="module")
def dataset():
    """小さな合成データ"""
    return synth_generate(SynthSpec(n=10, m=40, r=1, noise=0.05, seed=4)).dataset


def small_plan(**overrides):
    values = {"outer_folds": 3, "inner_folds": 2, "permutations": 2, "seed": 7, "grid": SMALL_GRID, "n_jobs": 1}
    values.update(overrides)
    return CVPlan(**values)


class TestStratifiedKFold:
    """層化 k 分割"""

    @pytest.mark.parametrize("m,k,seed", [(40, 5, 0), (23, 3, 9), (62, 5, 2**63)])
    def test_partition_and_balance(self, m, k, seed):
        """分割は [0, m) の分割で、各分割のクラス数は全体の比率から 1 以内"""
        labels = (np.arange(m) % 3 == 0).astype(int)
        folds = stratified_kfold(m, labels, k, seed)
        assert len(folds) == k
        np.testing.assert_array_equal(np.sort(np.concatenate(folds)), np.arange(m))
        for fold in folds:
            for label in (0, 1):
                expected = np.count_nonzero(labels == label) / k
                assert abs(np.count_nonzero(labels[fold] == label) - expected) <= 1

    def test_deterministic(self):
        """同じシードからは同じ分割"""
        labels = np.array([0, 1] * 10)
        first = stratified_kfold(20, labels, 4, 3)
        second = stratified_kfold(20, labels, 4, 3)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_invalid(self):
        """k < 2 や k > m は拒否する"""
        with pytest.raises(ValueError):
            stratified_kfold(10, np.zeros(10), 1, 0)
        with pytest.raises(ValueError):
            stratified_kfold(3, np.zeros(3), 4, 0)
        with pytest.raises(ValueError):
            stratified_kfold(10, np.zeros(9), 2, 0)


class TestGrid:
    """パラメータグリッド"""

    def test_default_grids(self):
        """学習器ごとに適用できるパラメータだけを含む"""
        assert set(default_grid("sc")) == {"p", "v_max"}
        assert set(default_grid("occam")) == {"p", "eta", "v_max"}
        assert set(default_grid("pacbayes")) == {"p", "eta", "v_max"}
        fixed = default_grid("pacbayes-fixed")
        assert set(fixed) == {"p", "gamma_factor", "v_max"}
        assert fixed["gamma_factor"] == [0.05, 0.1, 0.2, 0.4]
        assert TRAINING_SIZE in default_grid("sc")["p"]
        assert default_grid("sc")["v_max"] == list(range(1, 11))
        validate_grid("pacbayes-fixed", fixed)

    def test_resolve_point(self):
        """相対値は訓練集合の m と範囲の尺度で具体化する"""
        point = {"p": TRAINING_SIZE, "gamma_factor": 0.1, "v_max": 2}
        assert resolve_point(point, 40, 2.0) == pytest.approx({"p": 40.0, "gamma": 0.2, "v_max": 2})
        assert resolve_point({"p": 1.0, "v_max": 3}, 40, 2.0) == {"p": 1.0, "v_max": 3}

    def test_range_scale(self):
        """使用可能な属性の範囲幅の中央値"""
        data = Dataset(X=np.zeros((2, 3)), y=[0, 1], ranges=[[0.0, 1.0], [-1.0, 3.0], [0.0, 2.0]])
        assert range_scale(data) == pytest.approx(2.0)

    def test_validate_grid(self):
        """適用できないパラメータや γ のない固定マージンは拒否する"""
        with pytest.raises(ValueError, match="does not apply"):
            validate_grid("sc", {"eta": [0.1]})
        with pytest.raises(ValueError, match="requires gamma"):
            validate_grid("pacbayes-fixed", {"p": [1.0]})
        with pytest.raises(ValueError, match="empty"):
            validate_grid("sc", {"p": []})


class TestNestedCV:
    """入れ子交差検証"""

    def test_single_point_grid(self, dataset):
        """1 点だけのグリッドなら全分割でその点を使う"""
        result = nested_cv(dataset, "sc", small_plan(grid={"p": [2.0], "v_max": [2]}))
        assert len(result.records) == 6
        assert result.failed_folds == 0
        assert all(r.params == {"p": 2.0, "v_max": 2} for r in result.records)
        assert all(r.model_size <= 2 for r in result.records)

    def test_aggregates_recompute_from_records(self, dataset):
        """集計値は各分割の記録から計算し直せる"""
        result = nested_cv(dataset, "pacbayes", small_plan(grid={"p": [1.0], "eta": [0.0, 0.1], "v_max": [2]}))
        per_permutation = [sum(r.test_errors for r in result.records if r.permutation == p) for p in range(2)]
        assert result.errors == pytest.approx((np.mean(per_permutation), np.std(per_permutation)))
        sizes = [r.model_size for r in result.records]
        assert result.model_size == pytest.approx((np.mean(sizes), np.std(sizes)))
        assert result.bound_times_m == pytest.approx(np.mean([r.bound for r in result.records]) * dataset.m)
        for record in result.records:
            assert record.train_size + record.test_size == dataset.m
            assert 0.0 <= record.gibbs_test_errors <= record.test_size

    def test_deterministic(self, dataset):
        """同じシードからは同じ結果"""
        first = nested_cv(dataset, "occam", small_plan(grid={"p": [1.0], "eta": [0.0, 0.5], "v_max": [3]}))
        second = nested_cv(dataset, "occam", small_plan(grid={"p": [1.0], "eta": [0.0, 0.5], "v_max": [3]}))
        assert first.records == second.records

    def test_parallel_matches_serial(self, dataset):
        """並列実行でも結果は変わらない"""
        serial = nested_cv(dataset, "sc", small_plan())
        parallel = nested_cv(dataset, "sc", small_plan(n_jobs=2))
        assert serial.records == parallel.records

    def test_test_fold_does_not_influence_model(self, dataset):
        """テスト分割の値を変えても選ばれるパラメータとモデルは変わらない"""
        folds = stratified_kfold(dataset.m, dataset.y, 4, 1)
        test_idx = folds[0]
        train_idx = np.setdiff1d(np.arange(dataset.m), test_idx)
        X = dataset.X.copy()
        X[test_idx] = 1000.0
        poisoned = Dataset(X=X, y=dataset.y, ranges=np.column_stack([X.min(axis=0), X.max(axis=0)]))
        points = [{"p": 1.0, "v_max": 1}, {"p": 1.0, "v_max": 3}, {"p": 4.0, "v_max": 3}]
        clean = evaluate_outer_fold(dataset, "sc", points, train_idx, test_idx, inner_folds=2, seed=5)
        dirty = evaluate_outer_fold(poisoned, "sc", points, train_idx, test_idx, inner_folds=2, seed=5)
        assert clean.params == dirty.params
        assert clean.train_errors == dirty.train_errors
        assert clean.attributes == dirty.attributes
        assert clean.model_size == dirty.model_size

    def test_test_fold_does_not_influence_default_grid(self, dataset):
        """既定グリッドの γ と p = m は外側の訓練集合から決まり、テスト分割を拡大しても変わらない"""
        plan = small_plan(grid={}, permutations=1, seed=2)
        permutation_seed = int(np.random.SeedSequence(plan.seed).spawn(1)[0].generate_state(1)[0])
        test_idx = stratified_kfold(dataset.m, dataset.y, plan.outer_folds, permutation_seed)[0]
        X = dataset.X.copy()
        X[test_idx] *= 50.0
        poisoned = Dataset(X=X, y=dataset.y, ranges=np.column_stack([X.min(axis=0), X.max(axis=0)]))

        clean = nested_cv(dataset, "pacbayes-fixed", plan).records[0]
        dirty = nested_cv(poisoned, "pacbayes-fixed", plan).records[0]
        assert clean.error is None and dirty.error is None
        assert clean.test_size == len(test_idx)
        assert clean.grid_point == dirty.grid_point
        assert clean.params == pytest.approx(dirty.params)
        assert clean.attributes == dirty.attributes
        assert clean.model_size == dirty.model_size
        assert clean.train_errors == dirty.train_errors

    def test_default_grid_uses_training_size(self, dataset):
        """p = m の候補は外側の訓練集合の例の数になる"""
        result = nested_cv(dataset, "sc", small_plan(grid={}, permutations=1))
        for record in result.records:
            assert record.grid_point["p"] in list(default_grid("sc")["p"])
            if record.grid_point["p"] == TRAINING_SIZE:
                assert record.params["p"] == float(record.train_size)
            else:
                assert record.params["p"] == record.grid_point["p"]

    def test_failed_folds_are_recorded(self, dataset):
        """全グリッド点が失敗した分割はエラーとして記録する"""
        result = nested_cv(dataset, "pacbayes-fixed", small_plan(grid={"gamma": [10.0], "v_max": [2]}))
        assert result.failed_folds == len(result.records)
        assert all("every grid point failed" in r.error for r in result.records)
        assert np.isnan(result.errors[0])

    def test_final_model(self, dataset):
        """最頻のパラメータで全データから最終モデルを学習する"""
        result = nested_cv(dataset, "sc", small_plan(fit_final=True))
        assert result.final_params == result.modal_params
        model, metadata = loads_model(result.final_model)
        assert model.kind == "sc"
        assert metadata["n"] == str(dataset.n)

    def test_unlabeled_dataset(self):
        """ラベルのないデータは拒否する"""
        unlabeled = Dataset(X=np.zeros((4, 1)), y=None, ranges=[[0.0, 1.0]])
        with pytest.raises(ValueError):
            nested_cv(unlabeled, "sc", small_plan())

    @pytest.mark.slow
    def test_recovers_planted_attributes(self):
        """ノイズなしの埋め込み連言の属性を最頻の属性集合に含む"""
        result_data = synth_generate(SynthSpec(n=50, m=100, r=2, seed=12))
        plan = CVPlan(outer_folds=5, inner_folds=3, permutations=2, seed=1, grid={"p": [100.0], "v_max": [10]})
        result = nested_cv(result_data.dataset, "sc", plan)
        assert set(result_data.planted.attributes) <= set(result.modal_attributes)
        assert result.errors[0] <= 0.1 * result_data.dataset.m

    @pytest.mark.slow
    def test_pacbayes_default_grid_on_planted_data(self):
        """PAC-Bayes と既定グリッドの 5 × 5 入れ子 CV は小さく正確なモデルを 10 分以内に選ぶ"""
        result_data = synth_generate(SynthSpec(n=500, m=60, r=2, noise=0.05, seed=1))
        plan = CVPlan(outer_folds=5, inner_folds=5, permutations=5, seed=0, n_jobs=-1)
        start = time.perf_counter()
        result = nested_cv(result_data.dataset, "pacbayes", plan)
        elapsed = time.perf_counter() - start
        assert result.failed_folds == 0
        assert result.model_size[0] <= 4
        assert result.errors[0] / result_data.dataset.m <= 0.20
        assert elapsed < 600


class TestRendering:
    """結果の表示"""

    @pytest.mark.parametrize(
        "kind,grid",
        [
            ("sc", SMALL_GRID),
            ("occam", {"p": [1.0], "eta": [0.1], "v_max": [2]}),
            ("pacbayes", {"p": [1.0], "eta": [0.1], "v_max": [2]}),
            ("pacbayes-fixed", {"p": [1.0], "gamma_factor": [0.1], "v_max": [2]}),
        ],
    )
    def test_table_header(self, dataset, kind, grid):
        """見出し行は学習器ごとに決まった列"""
        result = nested_cv(dataset, kind, small_plan(grid=grid), name="synth")
        header, row = render_table(result).splitlines()
        assert header.split("\t") == TABLE_COLUMNS[kind]
        cells = row.split("\t")
        assert cells[:3] == ["synth", "40", "10"]
        assert "±" in cells[3]

    def test_golden_headers(self):
        """見出しの集合"""
        assert "\t".join(TABLE_COLUMNS["sc"]) == "Name\tex\tGenes\tErrs\tS"
        assert "\t".join(TABLE_COLUMNS["pacbayes"]) == "Name\tex\tGenes\tErrs\tS\tRatio\tG-errs\tB-errs\tBound"
        assert "\t".join(TABLE_COLUMNS["pacbayes-fixed"]) == "Name\tex\tGenes\tErrs\tS\tBound"

    def test_fold_blocks(self, dataset):
        """分割ごとに [fold] ブロックを出力する"""
        result = nested_cv(dataset, "sc", small_plan())
        text = render_folds(result)
        assert text.count("[fold]") == len(result.records)
        assert "params.p=" in text
        assert "test_errors=" in text
