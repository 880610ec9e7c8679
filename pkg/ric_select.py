# -*- coding: utf-8 -*-
"""
コマンドライン：fit / select / simulate / verify / oracle

標準出力にはレポート文書（JSON、--pretty なら表）だけを書く。進捗は標準エラーへ。
終了コード：0 成功、1 使い方・設定エラー、2 データ・モデルのエラー
"""
from __future__ import annotations

import sys
import time
import logging
import argparse

from criteria import ALL_CRITERIA, CriterionKind, criterion_values, logdet_scaling_report
from errors import RicSelectError, UsageError
from fitting import profile_reml
from model_core import FAMILIES, IDENTITY, CandidateModel, CorrelationSpec
from oracle import LIKELIHOOD, RESIDUAL, population_selection
from report_io import (
    INTERCEPT_NAME,
    ReportDocument,
    file_digest,
    read_dataset,
    render_pretty,
    resolve_columns,
    text_digest,
    with_intercept,
    write_report,
)
from selection import enumerate_candidates, select
from settings import DEFAULT_SEED, worker_count
from simulate import ExperimentConfig, run_experiment, verify_identities

logger = logging.getLogger("ric_select")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _split(text: str | None) -> list[str]:
    if not text:
        return []
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="乱数シード（64bit 符号なし整数）")
    common.add_argument("--family", choices=FAMILIES, default=IDENTITY, help="相関行列の族")
    common.add_argument("--force-intercept", action="store_true", help="切片列を追加して全候補に含める")
    common.add_argument("--pretty", action="store_true", help="JSON の代わりに表で表示")
    common.add_argument("--out", default=None, help="レポートをファイルにも書き出す")
    common.add_argument("--workers", type=int, default=None, help="ワーカー数（既定は RIC_SELECT_THREADS か 1）")
    common.add_argument("--verbose", action="store_true")

    parser = _Parser(prog="ric-select", description="Residual-likelihood information criteria for variable selection")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p_fit = sub.add_parser("fit", parents=[common], help="1 つのモデルを当てはめる")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--response", required=True)
    p_fit.add_argument("--active", default="", help="説明変数の列名（カンマ区切り、空なら null モデル）")
    p_fit.add_argument("--criteria", default=",".join(k.value.lower() for k in ALL_CRITERIA))

    p_sel = sub.add_parser("select", parents=[common], help="全候補から規準ごとに選ぶ")
    p_sel.add_argument("--data", required=True)
    p_sel.add_argument("--response", required=True)
    p_sel.add_argument("--criteria", default=",".join(k.value.lower() for k in ALL_CRITERIA))
    p_sel.add_argument("--max-k", type=int, default=None)
    p_sel.add_argument("--force", default="", help="必ず含める列名（カンマ区切り）")

    p_sim = sub.add_parser("simulate", parents=[common], help="選択率のモンテカルロ実験")
    p_sim.add_argument("--config", default=None, help="実験設定の JSON")
    p_sim.add_argument("--reps", type=int, default=None, help="設定ファイルの replications を上書き")

    p_ver = sub.add_parser("verify", parents=[common], help="モーメント恒等式と分布の検証")
    p_ver.add_argument("--n", type=int, default=20)
    p_ver.add_argument("--k", type=int, default=2)
    p_ver.add_argument("--reps", type=int, default=100_000)
    p_ver.add_argument("--sigma0-sq", type=float, default=1.0)
    p_ver.add_argument("--theta", type=float, default=None, help="W₀ の θ（--family が ar1 / exchangeable のとき）")

    p_orc = sub.add_parser("oracle", parents=[common], help="母集団レベルの選択（残差尤度 vs 尤度）")
    p_orc.add_argument("--config", default=None, help="実験設定の JSON")

    return parser


# ==============================
# サブコマンド
# ==============================

def _load_data(args):
    print(f"📥 {args.data} を読み込み中…", file=sys.stderr)
    data = read_dataset(args.data, args.response)
    if args.force_intercept:
        data = with_intercept(data)
    return data


def _intercept_index(data) -> list[int]:
    """--force-intercept のときの切片列（1 始まり、既存の列ならその位置）"""
    return [data.names.index(INTERCEPT_NAME) + 1] if INTERCEPT_NAME in data.names else []


def cmd_fit(args) -> tuple[dict, str]:
    data = _load_data(args)
    active = resolve_columns(data, _split(args.active))
    if args.force_intercept:
        active += _intercept_index(data)
    model = CandidateModel.of(active, p=data.p)
    kinds = CriterionKind.parse_list(args.criteria)

    fit = profile_reml(data, model, args.family)
    values, reasons = criterion_values(fit, kinds, data.n)
    payload = {
        "label": model.label(data.names),
        "names": list(data.names),
        "n": data.n,
        "fit": fit.summary(),
        "criteria": {kind.value: values.get(kind) for kind in kinds},
        "undefined": {kind.value: reason for kind, reason in reasons.items()},
        "logdet_scaling": logdet_scaling_report(fit, data.n),
    }
    return payload, file_digest(args.data)


def cmd_select(args) -> tuple[dict, str]:
    data = _load_data(args)
    kinds = CriterionKind.parse_list(args.criteria)
    forced = resolve_columns(data, _split(args.force))
    if args.force_intercept:
        intercept = _intercept_index(data)
        forced = intercept + [j for j in forced if j not in intercept]

    candidates = enumerate_candidates(data.p, forced, args.max_k)
    print(f"🔎 {len(candidates)} 個の候補モデルを当てはめ中…", file=sys.stderr)
    report = select(data, args.family, candidates, kinds, workers=worker_count(args.workers))
    return report.to_dict(), file_digest(args.data)


def _experiment_config(args) -> tuple[ExperimentConfig, str]:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
        digest = file_digest(args.config)
    else:
        config = ExperimentConfig()
        digest = None

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        overrides["replications"] = args.reps
    if overrides:
        raw = config.to_dict()
        raw.update(overrides)
        config = ExperimentConfig.from_dict(raw)
    if digest is None or overrides:
        digest = text_digest(config.to_dict())
    return config, digest


def cmd_simulate(args) -> tuple[dict, str]:
    config, digest = _experiment_config(args)
    workers = worker_count(args.workers)
    print(f"🎲 n={list(config.n_values)} × {config.replications} 回（ワーカー {workers}）", file=sys.stderr)
    summary = run_experiment(config, workers=workers)
    return summary.to_dict(), digest


def cmd_verify(args) -> tuple[dict, str]:
    if args.family == IDENTITY:
        correlation = CorrelationSpec(IDENTITY)
    else:
        if args.theta is None:
            raise UsageError(f"--theta is required with --family {args.family}")
        correlation = CorrelationSpec(args.family, (args.theta,))

    raw = {
        "beta0": [1.0] * args.k,
        "sigma0_sq": args.sigma0_sq,
        "correlation": correlation.to_dict(),
        "n_values": [args.n],
        "replications": args.reps,
        "fit_family": args.family,
        "seed": DEFAULT_SEED if args.seed is None else args.seed,
        "max_k": args.k,
    }
    config = ExperimentConfig.from_dict(raw)
    print(f"🧮 n={args.n}, k={args.k}, {args.reps} 回で恒等式を検証中…", file=sys.stderr)
    summary = verify_identities(config)
    return summary.to_dict(), text_digest(config.to_dict())


def cmd_oracle(args) -> tuple[dict, str]:
    config, digest = _experiment_config(args)
    candidates = config.candidates()
    populations = []
    for n in config.n_values:
        truth = config.truth(n)
        populations.append({
            "n": n,
            RESIDUAL: population_selection(truth, candidates, RESIDUAL).to_dict(),
            LIKELIHOOD: population_selection(truth, candidates, LIKELIHOOD).to_dict(),
        })
    return {"config": config.to_dict(), "populations": populations}, digest


COMMANDS = {
    "fit": cmd_fit,
    "select": cmd_select,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "oracle": cmd_oracle,
}


def run_command(argv) -> int:
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        # --help
        return int(e.code or 0)

    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    started = time.perf_counter()
    try:
        payload, digest = COMMANDS[args.command](args)
    except RicSelectError as e:
        print(f"🚨 {type(e).__name__}: {e}", file=sys.stderr)
        if isinstance(e, UsageError):
            parser.print_usage(sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"🚨 {e}", file=sys.stderr)
        return 2

    document = ReportDocument(
        command=argv,
        input_digest=digest,
        payload=payload,
        timing_ms=round((time.perf_counter() - started) * 1000.0, 3),
    )
    logger.info("%s finished in %.1f ms", args.command, document.timing_ms)
    text = document.serialize()
    write_report(text, args.out)
    print(render_pretty(document, args.command) if args.pretty else text)
    print("✅ 完了", file=sys.stderr)
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
