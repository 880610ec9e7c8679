# -*- coding: utf-8 -*-
"""
情報量規準（RIC, RIC*, RICc, AIC, AICc, BIC）と罰則項の分解

定数 n+2 と (n−k)log 2π は落とした形。小さいほど良い。
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from errors import ConfigError, DimensionError, UndefinedCriterionError
from fitting import FittedModel


class CriterionKind(enum.Enum):
    RIC = "RIC"
    RIC_STAR = "RIC_STAR"
    RICC = "RICC"
    AIC = "AIC"
    AICC = "AICC"
    BIC = "BIC"

    @classmethod
    def parse(cls, text: str) -> "CriterionKind":
        key = text.strip().upper().replace("*", "_STAR").replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            raise ConfigError(f"unknown criterion {text!r}, expected one of {[k.value.lower() for k in cls]}") from None

    @classmethod
    def parse_list(cls, text) -> list["CriterionKind"]:
        items = text.split(",") if isinstance(text, str) else list(text)
        return [cls.parse(t) for t in items if str(t).strip()]

    @property
    def needs_small_sample_term(self) -> bool:
        # 4/(n−k−2) などを含む規準
        return self in (CriterionKind.RIC, CriterionKind.RIC_STAR, CriterionKind.RICC, CriterionKind.AICC)

    def __str__(self) -> str:
        return self.value


ALL_CRITERIA = tuple(CriterionKind)


def check_defined(kind: CriterionKind, n: int, k: int) -> None:
    if kind.needs_small_sample_term:
        if n - k - 2 <= 0:
            raise UndefinedCriterionError(kind, k, n)
    elif n - k < 1:
        raise UndefinedCriterionError(kind, k, n)


def evaluate_criterion(fit: FittedModel, kind: CriterionKind, n: int | None = None) -> float:
    n = fit.n if n is None else n
    k = fit.k
    check_defined(kind, n, k)

    logdet_w = fit.pieces.logdet_w

    if kind in (CriterionKind.RIC, CriterionKind.RIC_STAR):
        ric_star = (n - k) * math.log(fit.sigma2_reml) + logdet_w - k + 4.0 / (n - k - 2)
        if kind == CriterionKind.RIC_STAR:
            return ric_star
        return ric_star + k * math.log(n)

    if kind == CriterionKind.RICC:
        return n * math.log(fit.sigma2_reml) + logdet_w + k + 4.0 * (k + 1) / (n - k - 2)

    goodness = n * math.log(fit.sigma2_mle) + logdet_w
    if kind == CriterionKind.AIC:
        return goodness + 2.0 * k
    if kind == CriterionKind.AICC:
        return goodness + 2.0 * n * (k + 1) / (n - k - 2)
    return goodness + k * math.log(n)


def criterion_values(fit: FittedModel, kinds, n: int | None = None) -> tuple[dict, dict]:
    """
    (値, 未定義の理由) を規準ごとに返す
    """
    values, reasons = {}, {}
    for kind in kinds:
        try:
            values[kind] = evaluate_criterion(fit, kind, n)
        except UndefinedCriterionError as e:
            reasons[kind] = str(e)
    return values, reasons


# ==============================
# 罰則項の分解
# ==============================

@dataclass(frozen=True)
class PenaltyTable:
    """
    規準 = n·log(RSS) + penalty（W = I のとき）
    """
    n: int
    k: int
    penalties: dict = field(default_factory=dict)

    def penalty(self, kind: CriterionKind) -> float:
        return self.penalties[kind]

    def decompose(self, rss: float) -> dict:
        goodness = self.n * math.log(rss)
        return {
            kind: {"goodness": goodness, "penalty": pen, "value": goodness + pen}
            for kind, pen in self.penalties.items()
        }

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "penalties": {kind.value: pen for kind, pen in self.penalties.items()}}


def penalty_decomposition(n: int, k: int) -> PenaltyTable:
    if k < 0 or n < 1:
        raise DimensionError(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    if n - k - 2 <= 0:
        raise UndefinedCriterionError(CriterionKind.RICC, k, n)

    log_n = math.log(n)
    penalties = {
        CriterionKind.RICC: -n * math.log(n - k) + k + 4.0 * (k + 1) / (n - k - 2),
        CriterionKind.AIC: -n * log_n + 2.0 * k,
        CriterionKind.AICC: -n * log_n + 2.0 * n * (k + 1) / (n - k - 2),
        CriterionKind.BIC: -n * log_n + k * log_n,
    }
    return PenaltyTable(n=n, k=k, penalties=penalties)


def logdet_scaling_report(fit: FittedModel, n: int | None = None) -> dict:
    """log|X'Ŵ⁻¹X|, log|X'X| と k·log n の比較"""
    n = fit.n if n is None else n
    k_log_n = fit.k * math.log(n)
    return {
        "k_log_n": k_log_n,
        "logdet_xwx": fit.pieces.logdet_xwx,
        "logdet_xx": fit.pieces.logdet_xx,
        "gap_xwx": fit.pieces.logdet_xwx - k_log_n,
        "gap_xx": fit.pieces.logdet_xx - k_log_n,
    }
