"""
コマンドラインインターフェースのテスト
"""

import pytest

from cli import main, parse_bound_inputs, parse_grid
from learning_service import LearningService


@pytest.fixture
def service(tmp_path):
    """テスト用の学習サービスインスタンス"""
    return LearningService(model_dir=str(tmp_path / "models"))


def _values(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture
def data_path(service, tmp_path, capsys):
    """synth コマンドで作った合成データ"""
    path = tmp_path / "synth.csv"
    assert main(["synth", "--n", "12", "--m", "40", "--r", "2", "--seed", "5", "--out", str(path)], service) == 0
    capsys.readouterr()
    return str(path)


class TestParsing:
    """入力の解析"""

    def test_bound_inputs(self):
        """name=value と 1 つの掃引"""
        values, sweep = parse_bound_inputs(["m=52", "ratio=0.1,0.2", "prior=uniform", "gibbs-risk-sweep=0:0.02:0.01"])
        assert values == {"m": 52.0, "ratio": [0.1, 0.2], "prior": "uniform"}
        assert sweep[0] == "gibbs-risk"
        assert sweep[1] == pytest.approx([0.0, 0.01, 0.02])

    def test_two_sweeps(self):
        """掃引は 1 つまで"""
        with pytest.raises(ValueError):
            parse_bound_inputs(["m-sweep=1,2", "n-sweep=1,2"])
        with pytest.raises(ValueError):
            parse_bound_inputs(["m52"])

    def test_grid(self):
        """--grid name=values"""
        assert parse_grid(["p=1,2", "v-max=1:3:1"]) == {"p": [1.0, 2.0], "v_max": [1.0, 2.0, 3.0]}
        with pytest.raises(ValueError):
            parse_grid(["lambda=1"])


class TestBoundCommand:
    """bound コマンド"""

    def test_occam(self, service, capsys):
        """Occam 上界"""
        assert main(["bound", "occam", "m=20", "errors=0", "n=10", "k=1", "bits=2", "delta=0.05"], service) == 0
        values = _values(capsys.readouterr().out)
        assert values["regime"] == "occam"
        assert float(values["bound"]) == pytest.approx(0.450, abs=1e-3)

    def test_sc(self, service, capsys):
        """標本圧縮上界"""
        assert main(["bound", "sc", "m=20", "i=1", "j=0", "n=10", "delta=0.05"], service) == 0
        assert float(_values(capsys.readouterr().out)["bound"]) == pytest.approx(0.4503, abs=1e-4)

    def test_pacbayes_sweep(self, service, capsys):
        """掃引の表は 18 をまたぐ"""
        argv = ["bound", "pacbayes", "m=52", "n=918", "k=1", "ratio=0.12", "gibbs-risk-sweep=0:0.12:0.01", "delta=0.05"]
        assert main(argv, service) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "gibbs-risk\tbound\tbound_times_m\tbayes_bound"
        rows = [line.split("\t") for line in lines[1:]]
        assert len(rows) == 13
        products = [float(row[2]) for row in rows]
        assert products == sorted(products)
        assert products[0] < 18 < products[-1]

    def test_error_exit_code(self, service, capsys):
        """エラーは終了コード 1 と stderr のメッセージ"""
        assert main(["bound", "sc", "m=5", "i=3", "j=2", "n=10"], service) == 1
        captured = capsys.readouterr()
        assert "error: " in captured.err
        assert captured.out == ""

    def test_two_sweeps_exit_code(self, service, capsys):
        """2 つの掃引は終了コード 1"""
        assert main(["bound", "sc", "m-sweep=20,30", "i-sweep=1,2", "j=0", "n=10"], service) == 1
        assert "only one input" in capsys.readouterr().err

    def test_unknown_regime(self, service):
        """未知の方式は引数エラー"""
        with pytest.raises(SystemExit):
            main(["bound", "svm", "m=5"], service)


class TestTrainPredictCommands:
    """train / predict / synth コマンド"""

    def test_train_then_predict(self, service, data_path, tmp_path, capsys):
        """学習したモデルで予測すると訓練誤りと同じ誤り数"""
        model = tmp_path / "model.txt"
        argv = ["train", "--data", data_path, "--learner", "occam", "--eta", "0.01", "--model-out", str(model)]
        assert main(argv, service) == 0
        trained = _values(capsys.readouterr().out)
        assert trained["learner"] == "occam"
        assert "bound.log_prior" in trained
        assert "bound.bit_lengths" in trained

        assert main(["predict", "--model", str(model), "--data", data_path, "--label-column", "label"], service) == 0
        predicted = _values(capsys.readouterr().out)
        assert predicted["errors"] == trained["train_errors"]

    def test_pacbayes_fixed_requires_gamma(self, service, data_path, capsys):
        """固定マージンは γ が必要"""
        assert main(["train", "--data", data_path, "--learner", "pacbayes-fixed"], service) == 1
        assert "gamma" in capsys.readouterr().err

    def test_inapplicable_parameter(self, service, data_path, capsys):
        """学習器に適用できないパラメータは終了コード 1"""
        assert main(["train", "--data", data_path, "--learner", "sc", "--gamma", "0.1"], service) == 1
        assert "do not apply" in capsys.readouterr().err

    def test_synth_is_deterministic(self, service, tmp_path, capsys):
        """同じシードの synth は同じファイルを書く"""
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (first, second):
            argv = ["synth", "--n", "20", "--m", "30", "--r", "2", "--noise", "0.1", "--seed", "8", "--out", str(path)]
            assert main(argv, service) == 0
        assert first.read_text() == second.read_text()
        assert "planted.0=" in capsys.readouterr().out

    def test_invalid_synth(self, service, tmp_path, capsys):
        """r > n は終了コード 1"""
        assert main(["synth", "--n", "2", "--m", "30", "--r", "3", "--out", str(tmp_path / "x.csv")], service) == 1


class TestCvCommand:
    """cv コマンド"""

    def test_table_header(self, service, data_path, capsys):
        """出力の先頭は表の見出し"""
        argv = [
            "cv",
            "--data",
            data_path,
            "--learner",
            "sc",
            "--outer-folds",
            "3",
            "--inner-folds",
            "2",
            "--permutations",
            "1",
            "--grid",
            "p=1,2",
            "--grid",
            "v_max=2",
            "--name",
            "synth",
        ]
        assert main(argv, service) == 0
        out = capsys.readouterr().out
        assert out.startswith("Name\tex\tGenes\tErrs\tS\nsynth\t40\t12\t")
        assert out.count("[fold]") == 3

    def test_deterministic(self, service, data_path, capsys):
        """同じシードなら同じ出力"""
        argv = ["cv", "--data", data_path, "--learner", "occam", "--outer-folds", "3", "--inner-folds", "2"]
        argv += ["--permutations", "2", "--seed", "11", "--grid", "eta=0,0.1", "--grid", "v_max=2"]
        assert main(argv, service) == 0
        first = capsys.readouterr().out
        assert main(argv, service) == 0
        assert capsys.readouterr().out == first

    def test_inapplicable_grid(self, service, data_path, capsys):
        """適用できないグリッドは終了コード 1"""
        argv = ["cv", "--data", data_path, "--learner", "sc", "--grid", "gamma=0.1"]
        assert main(argv, service) == 1
        assert "do not apply" in capsys.readouterr().err
