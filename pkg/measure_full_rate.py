# -*- coding: utf-8 -*-
"""
RIC* が全モデルを選ぶ率をデフォルト実験で測り、CSV に記録する

記録した率は settings.RIC_STAR_FULL_RATE_FLOORS の根拠。
"""
import os
import sys

import pandas as pd

from criteria import CriterionKind
from report_io import ensure_parent_dir
from settings import worker_count
from simulate import ExperimentConfig, run_experiment

# =========================
# ★設定（ここだけ触ればOK）
# =========================

REPLICATIONS = 300
MEASURED_N = (50, 200)

OUTPUT_CSV = os.path.join(os.path.dirname(os.path.abspath(__file__)), "oracle_runs", "ric_star_full_rate.csv")


def measure_full_rate(replications: int = REPLICATIONS, workers: int | None = None) -> pd.DataFrame:
    """デフォルトの真のモデル（β₀=(3, 1.5, 0, 0, 2, 0)', σ₀²=1, W₀=I）で n ごとの RIC* 全モデル選択率"""
    config = ExperimentConfig(replications=replications, criteria=(CriterionKind.RIC_STAR,))
    rates = run_experiment(config, workers=workers).rates
    rates = rates[rates["n"].isin(MEASURED_N)]

    df = rates[["n", "replications", "full_rate"]].rename(columns={"full_rate": "ric_star_full_rate"})
    df.insert(2, "seed", config.seed)
    return df.reset_index(drop=True)


def main():
    workers = worker_count()
    print(f"🎲 RIC* の全モデル選択率を測定中…（{REPLICATIONS} 回、ワーカー {workers}）", file=sys.stderr)
    df = measure_full_rate(workers=workers)

    ensure_parent_dir(OUTPUT_CSV)
    df.to_csv(OUTPUT_CSV, index=False, float_format="%.3f")
    print(df.to_string(index=False))
    print(f"✅ 保存しました: {OUTPUT_CSV}", file=sys.stderr)


if __name__ == "__main__":
    main()
