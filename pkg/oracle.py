# -*- coding: utf-8 -*-
"""
真のモデルの下での期待値（母集団レベル）の計算

- E₀[−2L]（残差尤度・通常の尤度）を定数込みで厳密に計算
- KL ダイバージェンス、推定値を代入したダイバージェンス
- χ²・F のモーメント恒等式
- 母集団レベルでの選択（残差尤度は常にフルモデルを選ぶ）
"""
from __future__ import annotations

import math
import logging
from dataclasses import dataclass, field

import numpy as np

from errors import DimensionError, DomainError, NotSpdError, UndefinedCriterionError
from fitting import LOG_2PI, FittedModel, correlation_matrix_or_none
from model_core import (
    CandidateModel,
    CorrelationSpec,
    Dataset,
    GlsProjector,
    TrueModelSpec,
    build_correlation,
    logdet_gram,
    whiten_dataset,
)

logger = logging.getLogger(__name__)

COMPONENT_NAMES = (
    "dimension_constant",
    "logdet_xx_term",
    "log_sigma2_term",
    "logdet_w_term",
    "logdet_xwx_term",
    "expected_quadratic_term",
    "bias_term",
)

RESIDUAL = "residual"
LIKELIHOOD = "likelihood"


@dataclass(frozen=True)
class PopulationScore:
    value: float
    components: dict = field(default_factory=dict)

    @classmethod
    def from_components(cls, **components) -> "PopulationScore":
        full = {name: float(components.get(name, 0.0)) for name in COMPONENT_NAMES}
        return cls(value=math.fsum(full.values()), components=full)

    def without_logdet_xx(self) -> float:
        """log|X_𝒜'X_𝒜| を落とした値（落とすと k·log n 型の罰則が現れる）"""
        return self.value - self.components["logdet_xx_term"]

    def to_dict(self) -> dict:
        return {"value": self.value, "components": dict(self.components)}


@dataclass(frozen=True)
class ExpectationIdentities:
    chi2_ratio_mean: float
    quadform_mean: float


# ==============================
# 共通部品
# ==============================

def _check_sigma2(sigma2: float) -> None:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")


def _mean_dataset(truth: TrueModelSpec, beta=None) -> Dataset:
    beta = truth.beta0 if beta is None else beta
    return Dataset(y=truth.design @ np.asarray(beta, dtype=float), X=truth.design)


def _whitened_truth_cov(wd, truth: TrueModelSpec, spec: CorrelationSpec):
    """
    S = L⁻¹W₀L⁻ᵀ（W = LL'）。W = W₀ なら None（S = I）
    """
    if spec == truth.correlation or (spec.is_identity and truth.correlation.is_identity):
        return None
    W0 = build_correlation(truth.correlation, truth.n)
    return wd.whiten(wd.whiten(W0).T)


def residual_operator_terms(truth: TrueModelSpec, model: CandidateModel, spec: CorrelationSpec) -> dict:
    """
    (Xβ₀)'(W⁻¹ − H_𝒜)(Xβ₀) と tr{(W⁻¹ − H_𝒜)W₀} ほか
    """
    n = truth.n
    model.check_range(truth.p)
    if n - model.k < 1:
        raise DimensionError(f"model {model} has k={model.k} but n={n}: need n - k >= 1")

    wd = whiten_dataset(_mean_dataset(truth), correlation_matrix_or_none(spec, n))
    proj = GlsProjector(wd, model)

    resid = proj.residualize(wd.y)
    S = _whitened_truth_cov(wd, truth, spec)
    if S is None:
        trace = float(n - model.k)
    else:
        trace = float(np.trace(proj.residualize(S)))

    return {
        "bias": float(resid @ resid),
        "trace": trace,
        "logdet_w": wd.logdet_w,
        "logdet_xwx": proj.logdet_xwx,
        "logdet_xx": logdet_gram(wd, model),
        "projector": proj,
        "whitened": wd,
    }


# ==============================
# E₀[−2L]
# ==============================

def population_neg2_residual_loglik(
    truth: TrueModelSpec, model: CandidateModel, spec: CorrelationSpec, sigma2: float
) -> PopulationScore:
    _check_sigma2(sigma2)
    t = residual_operator_terms(truth, model, spec)
    dof = truth.n - model.k
    return PopulationScore.from_components(
        dimension_constant=dof * LOG_2PI,
        logdet_xx_term=-t["logdet_xx"],
        log_sigma2_term=dof * math.log(sigma2),
        logdet_w_term=t["logdet_w"],
        logdet_xwx_term=t["logdet_xwx"],
        expected_quadratic_term=truth.sigma0_sq * t["trace"] / sigma2,
        bias_term=t["bias"] / sigma2,
    )


def population_neg2_loglik(truth: TrueModelSpec, beta, spec: CorrelationSpec, sigma2: float) -> PopulationScore:
    _check_sigma2(sigma2)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (truth.p,):
        raise DimensionError(f"beta must have length p={truth.p}, got shape {beta.shape}")

    n = truth.n
    diff = Dataset(y=truth.design @ (beta - truth.beta0), X=truth.design)
    wd = whiten_dataset(diff, correlation_matrix_or_none(spec, n))

    S = _whitened_truth_cov(wd, truth, spec)
    trace = float(n) if S is None else float(np.trace(S))

    return PopulationScore.from_components(
        dimension_constant=n * LOG_2PI,
        log_sigma2_term=n * math.log(sigma2),
        logdet_w_term=wd.logdet_w,
        expected_quadratic_term=truth.sigma0_sq * trace / sigma2,
        bias_term=float(wd.y @ wd.y) / sigma2,
    )


# ==============================
# KL ダイバージェンス
# ==============================

def kl_residual(truth: TrueModelSpec, model: CandidateModel, spec: CorrelationSpec, sigma2: float) -> float:
    """
    上位集合では負になりうる（残差尤度の病理であってバグではない）
    """
    candidate = population_neg2_residual_loglik(truth, model, spec, sigma2)
    reference = population_neg2_residual_loglik(truth, truth.active_set, truth.correlation, truth.sigma0_sq)
    return candidate.value - reference.value


def kl_likelihood(truth: TrueModelSpec, beta, spec: CorrelationSpec, sigma2: float) -> float:
    candidate = population_neg2_loglik(truth, beta, spec, sigma2)
    reference = population_neg2_loglik(truth, truth.beta0, truth.correlation, truth.sigma0_sq)
    return candidate.value - reference.value


def estimated_divergence_terms(truth: TrueModelSpec, fit: FittedModel) -> dict:
    """推定値 θ̂, σ̂² を代入したダイバージェンスの各項"""
    if fit.n != truth.n:
        raise DimensionError(f"fit has n={fit.n} but truth design has n={truth.n}")
    t = residual_operator_terms(truth, fit.model, fit.correlation)
    s2 = fit.sigma2_reml
    return {
        "log_sigma2_term": (truth.n - fit.k) * math.log(s2),
        "logdet_w_term": t["logdet_w"],
        "logdet_xwx_term": t["logdet_xwx"],
        "bias_term": t["bias"] / s2,
        "trace_term": t["trace"] * truth.sigma0_sq / s2,
    }


def estimated_divergence(truth: TrueModelSpec, fit: FittedModel) -> float:
    return math.fsum(estimated_divergence_terms(truth, fit).values())


def expectation_identities(n: int, k: int) -> ExpectationIdentities:
    """
    E₀[(n−k)σ₀²/σ̂²] = (n−k)²/(n−k−2)、F(k, n−k) の k 倍の期待値 = k(n−k)/(n−k−2)
    """
    if n - k - 2 <= 0:
        raise UndefinedCriterionError("expectation_identities", k, n)
    dof = n - k
    return ExpectationIdentities(chi2_ratio_mean=dof * dof / (dof - 2), quadform_mean=k * dof / (dof - 2))


# ==============================
# 母集団レベルでの選択
# ==============================

def residual_sigma2_minimizer(truth: TrueModelSpec, model: CandidateModel, spec: CorrelationSpec) -> float:
    """E₀[−2L] を最小にする σ² = E₀[q]/(n−k)"""
    t = residual_operator_terms(truth, model, spec)
    return (t["bias"] + truth.sigma0_sq * t["trace"]) / (truth.n - model.k)


def best_approximating_beta(truth: TrueModelSpec, model: CandidateModel) -> np.ndarray:
    """W₀ 計量での Xβ₀ の X_𝒜 への射影係数（長さ p、𝒜 の外は 0）"""
    wd = whiten_dataset(_mean_dataset(truth), correlation_matrix_or_none(truth.correlation, truth.n))
    proj = GlsProjector(wd, model)
    beta = np.zeros(truth.p)
    if model.k:
        beta[model.columns] = proj.coefficients(wd.y)
    return beta


@dataclass(frozen=True)
class PopulationSelection:
    target: str
    rows: list
    winner: CandidateModel | None

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "winner": None if self.winner is None else list(self.winner.active),
            "rows": self.rows,
        }


def population_selection(
    truth: TrueModelSpec, candidates, target: str = RESIDUAL, tie_rtol: float = 1e-9
) -> PopulationSelection:
    """
    W = W₀ のときの母集団版の規準を候補ごとに計算して最小を選ぶ。
    値の差が tie_rtol 以下なら k の小さい方（候補の並び順）を優先。
    """
    if target not in (RESIDUAL, LIKELIHOOD):
        raise DomainError(f"target must be {RESIDUAL!r} or {LIKELIHOOD!r}, got {target!r}")

    rows = []
    for model in sorted(candidates, key=CandidateModel.sort_key):
        row = {"active": list(model.active), "k": model.k}
        try:
            if target == RESIDUAL:
                sigma2 = residual_sigma2_minimizer(truth, model, truth.correlation)
                value = kl_residual(truth, model, truth.correlation, sigma2)
            else:
                beta = best_approximating_beta(truth, model)
                bias = residual_operator_terms(truth, model, truth.correlation)["bias"]
                sigma2 = truth.sigma0_sq + bias / truth.n
                value = kl_likelihood(truth, beta, truth.correlation, sigma2)
        except (NotSpdError, DimensionError) as e:
            logger.warning("population score skipped for %s: %s", model, e)
            row["reason"] = str(e)
            rows.append(row)
            continue
        row["sigma2"] = sigma2
        row["value"] = value
        rows.append(row)

    scored = [r for r in rows if "value" in r]
    winner = None
    if scored:
        best = min(r["value"] for r in scored)
        cutoff = best + tie_rtol * max(1.0, abs(best))
        first = next(r for r in scored if r["value"] <= cutoff)
        winner = CandidateModel(tuple(first["active"]))
    return PopulationSelection(target=target, rows=rows, winner=winner)
