"""
コマンドラインインターフェース

    python cli.py synth --n 500 --m 60 --r 2 --seed 7 --out synth.csv
    python cli.py train --data synth.csv --learner pacbayes --p 2 --eta 0.1
    python cli.py predict --model models/pacbayes-conjunction.model --data synth.csv --label-column label
    python cli.py bound pacbayes m=52 n=918 k=1 ratio=0.12 gibbs-risk-sweep=0:0.12:0.01 delta=0.05
    python cli.py cv --data synth.csv --learner sc --permutations 1 --grid p=1 --grid v_max=3
"""

import argparse
import logging
import sys
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, Field, model_validator

import config
from learning_service import LearningService, sweep_values
from stumps import format_real

logger = logging.getLogger(__name__)

LEARNER_PARAMS = ("p", "eta", "v_max", "gamma")


class RunConfig(BaseModel):
    """検証済みのコマンド設定"""

    command: Literal["train", "predict", "bound", "cv", "synth"]
    learner: Optional[str] = None
    target: Literal["conjunction", "disjunction"] = "conjunction"
    params: Dict[str, float] = Field(default_factory=dict)
    grid: Dict[str, List[float]] = Field(default_factory=dict)
    delta: float = Field(default=config.DEFAULT_DELTA, gt=0.0, le=1.0)
    size_prior: Literal["quadratic", "uniform"] = config.DEFAULT_SIZE_PRIOR  # type: ignore[assignment]
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)

    @model_validator(mode="after")
    def check_learner_params(self):
        if self.learner is None:
            return self
        applicable = config.get_learner_params(self.learner)
        rejected = sorted((set(self.params) | set(self.grid)) - set(applicable))
        if rejected:
            raise ValueError(f"parameters {rejected} do not apply to learner {self.learner}")
        return self


def _format(value: Any) -> str:
    if isinstance(value, float):
        return format_real(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


def _add_data_arguments(parser: argparse.ArgumentParser, label_default: Optional[str] = "label") -> None:
    parser.add_argument("--data", required=True, help="区切りテキストのデータ")
    parser.add_argument("--label-column", default=label_default, help="ラベル列の名前または番号")
    parser.add_argument("--delimiter", default=config.DATA_CONFIG["delimiter"])
    parser.add_argument("--positive-label", default=None, help="1 に対応させるラベル")
    parser.add_argument("--ranges", default=None, help="属性の範囲ファイル (名前 A B)")


def _add_bound_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--delta", type=float, default=config.DEFAULT_DELTA)
    parser.add_argument("--size-prior", choices=["quadratic", "uniform"], default=config.DEFAULT_SIZE_PRIOR)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stumps", description="決定株の連言の学習とリスク上界")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="学習してモデルと上界を出力")
    _add_data_arguments(train)
    train.add_argument("--learner", choices=list(config.AVAILABLE_LEARNERS), default="sc")
    train.add_argument("--target", choices=["conjunction", "disjunction"], default="conjunction")
    train.add_argument("--p", type=float, default=None)
    train.add_argument("--eta", type=float, default=None)
    train.add_argument("--v-max", dest="v_max", type=int, default=None)
    train.add_argument("--gamma", type=float, default=None)
    train.add_argument("--model-out", default=None)
    _add_bound_arguments(train)

    predict = commands.add_parser("predict", help="モデルで予測")
    predict.add_argument("--model", required=True)
    _add_data_arguments(predict, label_default=None)

    bound = commands.add_parser("bound", help="カウントから上界を計算")
    bound.add_argument("regime", choices=["occam", "sc", "pacbayes"])
    bound.add_argument("inputs", nargs="*", help="name=value（name-sweep=start:stop:step で掃引）")

    cv = commands.add_parser("cv", help="入れ子交差検証")
    _add_data_arguments(cv)
    cv.add_argument("--learner", choices=list(config.AVAILABLE_LEARNERS), default="sc")
    cv.add_argument("--target", choices=["conjunction", "disjunction"], default="conjunction")
    cv.add_argument("--outer-folds", type=int, default=config.CV_CONFIG["outer_folds"])
    cv.add_argument("--inner-folds", type=int, default=config.CV_CONFIG["inner_folds"])
    cv.add_argument("--permutations", type=int, default=config.CV_CONFIG["permutations"])
    cv.add_argument("--seed", type=int, default=config.CV_CONFIG["seed"])
    cv.add_argument("--n-jobs", type=int, default=config.CV_CONFIG["n_jobs"])
    cv.add_argument("--grid", action="append", default=[], help="name=v1,v2,...（繰り返し指定可）")
    cv.add_argument("--range-scope", choices=["train", "full", "external"], default="train")
    cv.add_argument("--name", default=None, help="表に載せるデータセット名")
    cv.add_argument("--final-model-out", default=None)
    _add_bound_arguments(cv)

    synth = commands.add_parser("synth", help="合成データを生成")
    synth.add_argument("--n", type=int, required=True)
    synth.add_argument("--m", type=int, required=True)
    synth.add_argument("--r", type=int, required=True)
    synth.add_argument("--noise", type=float, default=0.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.add_argument("--manifest", default=None)

    return parser


def parse_bound_inputs(tokens: Sequence[str]) -> Tuple[Dict[str, Any], Optional[Tuple[str, List[float]]]]:
    """name=value の並びを入力と掃引に分ける"""
    values: Dict[str, Any] = {}
    sweep = None
    for token in tokens:
        name, sep, text = token.partition("=")
        if not sep or not name:
            raise ValueError(f"expected name=value, got {token!r}")
        if name.endswith("-sweep"):
            if sweep is not None:
                raise ValueError("only one input can be swept")
            sweep = (name[: -len("-sweep")], sweep_values(text))
        elif name == "prior":
            values[name] = text
        elif "," in text:
            values[name] = [float(v) for v in text.split(",") if v]
        else:
            values[name] = float(text)
    return values, sweep


def parse_grid(entries: Sequence[str]) -> Dict[str, List[float]]:
    grid: Dict[str, List[float]] = {}
    for entry in entries:
        name, sep, text = entry.partition("=")
        name = name.replace("-", "_")
        if not sep or name not in LEARNER_PARAMS:
            raise ValueError(f"invalid grid entry {entry!r}")
        grid[name] = sweep_values(text)
    return grid


def render_train(result: Dict) -> str:
    lines = [f"{key}={_format(result[key])}" for key in ("model_path", "learner", "target", "m", "n", "size")]
    lines.append(f"attributes={_format(result['attributes'])}")
    lines.append(f"train_errors={result['train_errors']}")
    lines.append(f"train_error_rate={_format(result['train_error_rate'])}")
    for key in ("gibbs_train_risk", "bayes_train_errors", "psi", "bayes_bound"):
        if key in result:
            lines.append(f"{key}={_format(result[key])}")
    for i, stump in enumerate(result["stumps"]):
        lines.append(f"stump.{i}=" + " ".join(f"{key}:{_format(value)}" for key, value in stump.items()))
    bound = result["bound"]
    lines.append(f"bound={_format(bound['bound'])}")
    lines.append(f"delta={_format(bound['delta'])}")
    lines.extend(f"bound.{key}={_format(value)}" for key, value in bound["components"].items())
    lines.extend(f"bound.{key}={_format(value)}" for key, value in bound["vectors"].items())
    return "\n".join(lines) + "\n"


def render_predict(result: Dict) -> str:
    lines = list(result["predictions"])
    if "errors" in result:
        lines.append(f"errors={result['errors']}")
        lines.append(f"error_rate={_format(result['error_rate'])}")
    return "\n".join(lines) + "\n"


def render_bound(result: Dict) -> str:
    rows = result["rows"]
    if result["sweep"] is None:
        row = rows[0]
        lines = [f"{key}={_format(row[key])}" for key in ("regime", "bound", "delta", "empirical_risk", "bound_times_m")]
        lines.extend(f"{key}={_format(value)}" for key, value in row["components"].items())
        lines.extend(f"{key}={_format(value)}" for key, value in row["vectors"].items())
        return "\n".join(lines) + "\n"

    extra = ["bayes_bound"] if result["regime"] == "pacbayes" else []
    header = [result["sweep"], "bound", "bound_times_m"] + extra
    lines = ["\t".join(header)]
    for row in rows:
        cells = [_format(row["sweep"]), _format(row["bound"]), _format(row["bound_times_m"])]
        cells.extend(_format(row["components"][key]) for key in extra)
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def render_synth(result: Dict) -> str:
    lines = [f"{key}={_format(result[key])}" for key in ("data_path", "manifest_path", "m", "n", "positives")]
    for i, stump in enumerate(result["planted"]):
        lines.append(f"planted.{i}=k:{stump['k']} d:{stump['d']} t:{_format(stump['t'])}")
    lines.append(f"planted_errors={result['planted_errors']}")
    return "\n".join(lines) + "\n"


def cmd_train(args: argparse.Namespace, service: LearningService) -> Tuple[Dict, str]:
    """学習してモデルを保存し、訓練誤りと上界を出力する"""
    params = {name: getattr(args, name) for name in LEARNER_PARAMS if getattr(args, name) is not None}
    run_config = RunConfig(
        command="train",
        learner=args.learner,
        target=args.target,
        params=params,
        delta=args.delta,
        size_prior=args.size_prior,
    )
    result = service.train(
        args.data,
        learner=args.learner,
        target=run_config.target,
        params=run_config.params,
        label_column=args.label_column,
        delimiter=args.delimiter,
        positive_label=args.positive_label,
        ranges_path=args.ranges,
        model_path=args.model_out,
        delta=run_config.delta,
        size_prior=run_config.size_prior,
    )
    return result, "" if "error" in result else render_train(result)


def cmd_predict(args: argparse.Namespace, service: LearningService) -> Tuple[Dict, str]:
    result = service.predict(args.model, args.data, label_column=args.label_column, delimiter=args.delimiter)
    return result, "" if "error" in result else render_predict(result)


def cmd_bound(args: argparse.Namespace, service: LearningService) -> Tuple[Dict, str]:
    """カウントから上界を計算する（1 つの入力を掃引できる）"""
    values, sweep = parse_bound_inputs(args.inputs)
    result = service.bound(args.regime, values, sweep)
    return result, "" if "error" in result else render_bound(result)


def cmd_cv(args: argparse.Namespace, service: LearningService) -> Tuple[Dict, str]:
    """入れ子交差検証の表と分割ごとの記録を出力する"""
    run_config = RunConfig(
        command="cv",
        learner=args.learner,
        target=args.target,
        grid=parse_grid(args.grid),
        delta=args.delta,
        size_prior=args.size_prior,
        seed=args.seed,
    )
    plan = {
        "outer_folds": args.outer_folds,
        "inner_folds": args.inner_folds,
        "permutations": args.permutations,
        "seed": run_config.seed,
        "n_jobs": args.n_jobs,
        "grid": run_config.grid,
        "range_scope": args.range_scope,
    }
    result = service.cross_validate(
        args.data,
        args.learner,
        plan,
        target=run_config.target,
        label_column=args.label_column,
        delimiter=args.delimiter,
        positive_label=args.positive_label,
        ranges_path=args.ranges,
        name=args.name,
        delta=run_config.delta,
        size_prior=run_config.size_prior,
        final_model_path=args.final_model_out,
    )
    return result, "" if "error" in result else result["table"] + "\n" + result["folds"]


def cmd_synth(args: argparse.Namespace, service: LearningService) -> Tuple[Dict, str]:
    spec = {"n": args.n, "m": args.m, "r": args.r, "noise": args.noise, "seed": args.seed}
    result = service.synth(spec, args.out, args.manifest)
    return result, "" if "error" in result else render_synth(result)


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "bound": cmd_bound,
    "cv": cmd_cv,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None, service: Optional[LearningService] = None) -> int:
    """
    エントリーポイント

    Returns:
        終了コード（エラーがなければ 0）
    """
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(args.log_level)
    service = service or LearningService()
    try:
        result, output = COMMANDS[args.command](args, service)
    except ValueError as e:
        result, output = {"error": str(e)}, ""

    if "error" in result:
        sys.stderr.write(f"error: {result['error']}\n")
        return 1
    sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(main())
