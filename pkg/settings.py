# -*- coding: utf-8 -*-
import os

from errors import ConfigError

# =========================
# ★設定（ここだけ触ればOK）
# =========================

SCHEMA_VERSION = "ric-select/1"
THREADS_ENV = "RIC_SELECT_THREADS"

# 線形代数の許容誤差
SPD_PIVOT_RTOL = 1e-12     # ピボット ≤ 1e-12 × 最大対角 → SPD でない
SYMMETRY_RTOL = 1e-10
PERFECT_FIT_RTOL = 1e-24   # q ≤ 1e-24 × y'W⁻¹y なら完全当てはめ扱い

# θ のプロファイル（黄金分割探索）
GOLDEN_TOL = 1e-8
GOLDEN_MAX_ITER = 200
PROFILE_GRID_POINTS = 21   # 黄金分割の前に粗いグリッドで括弧を作る
AR1_BOUNDS = (-0.99, 0.99)
EXCHANGEABLE_MARGIN = 0.01
EXCHANGEABLE_UPPER = 0.99
BOUNDARY_TOL = 1e-6

# 全探索の上限
MAX_EXHAUSTIVE_P = 25

# デフォルト実験（β₀=(3, 1.5, 0, 0, 2, 0)', σ₀²=1, W₀=I）
DEFAULT_BETA0 = (3.0, 1.5, 0.0, 0.0, 2.0, 0.0)
DEFAULT_SIGMA0_SQ = 1.0
DEFAULT_N_VALUES = (50, 200, 800)
DEFAULT_REPLICATIONS = 1000
DEFAULT_SEED = 20240101
DEFAULT_DESIGN_SEED = 11
DEFAULT_CRITERIA = ("ric", "ric_star", "ricc", "aic", "aicc", "bic")

# RIC* の全モデル選択率の下限（デフォルト実験）
# 測定値は oracle_runs/ric_star_full_rate.csv（measure_full_rate.py、300 回）：n=50 → 0.627, n=200 → 0.767
RIC_STAR_FULL_RATE_FLOORS = {50: 0.55, 200: 0.68}


def worker_count(explicit: int | None = None) -> int:
    """
    ワーカー数を決める：引数 → 環境変数 RIC_SELECT_THREADS → 1
    """
    if explicit is not None:
        if explicit < 1:
            raise ConfigError(f"worker count must be a positive integer, got {explicit}")
        return explicit

    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value
