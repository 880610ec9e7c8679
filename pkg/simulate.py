# -*- coding: utf-8 -*-
"""
データ生成とモンテカルロ実験

乱数は (seed, 反復番号, ストリーム番号) をキーにしたカウンタ型生成器（Philox）なので、
反復 r の結果は直列でも並列でも同じになる。
"""
from __future__ import annotations

import json
import math
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from criteria import CriterionKind
from errors import ConfigError, DimensionError, ExperimentError, RicSelectError
from fitting import LOG_2PI, correlation_matrix_or_none
from model_core import (
    FAMILIES,
    IDENTITY,
    CandidateModel,
    CorrelationSpec,
    Dataset,
    GlsProjector,
    TrueModelSpec,
    build_correlation,
    logdet_gram,
    spd_factorize,
    whiten_dataset,
)
from oracle import expectation_identities
from rate_table import RECORD_COLUMNS, get_selection_rates, rates_to_records
from selection import enumerate_candidates, select
from settings import (
    DEFAULT_BETA0,
    DEFAULT_CRITERIA,
    DEFAULT_DESIGN_SEED,
    DEFAULT_N_VALUES,
    DEFAULT_REPLICATIONS,
    DEFAULT_SEED,
    DEFAULT_SIGMA0_SQ,
    worker_count,
)

logger = logging.getLogger(__name__)

NOISE_STREAM = 0
DESIGN_STREAM = 1
SEED_MAX = 2 ** 64 - 1
BLOCK_SIZE = 25          # 並列時に 1 タスクで回す反復数
BATCH_SIZE = 10_000      # ベクトル化する反復数
KS_ALPHA = 0.01


# ==============================
# 乱数
# ==============================

def replication_rng(seed: int, replication: int, stream: int = NOISE_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(replication, stream))))


def generate_design(n: int, p: int, design_seed: int, intercept: bool = False) -> np.ndarray:
    """iid 標準正規の計画行列（intercept=True なら 1 列目は 1）"""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(design_seed, spawn_key=(DESIGN_STREAM,))))
    X = rng.standard_normal((n, p))
    if intercept:
        X[:, 0] = 1.0
    return X


@lru_cache(maxsize=32)
def _noise_factor(spec: CorrelationSpec, n: int):
    if spec.is_identity:
        spec.check_valid(n)
        return None
    return spd_factorize(build_correlation(spec, n)).lower


def _draw_noise(truth: TrueModelSpec, n: int, seed: int, replication: int) -> np.ndarray:
    z = replication_rng(seed, replication).standard_normal(n)
    lower = _noise_factor(truth.correlation, n)
    if lower is not None:
        z = lower @ z
    return math.sqrt(truth.sigma0_sq) * z


def sample_dgp(truth: TrueModelSpec, n: int, seed: int, replication: int) -> Dataset:
    """y = Xβ₀ + σ₀ L z"""
    truth_n = truth.truncated(n)
    y = truth_n.mean + _draw_noise(truth_n, n, seed, replication)
    return Dataset(y=y, X=truth_n.design)


def _response_batch(truth: TrueModelSpec, seed: int, start: int, stop: int) -> np.ndarray:
    n = truth.n
    mean = truth.mean
    return np.vstack([mean + _draw_noise(truth, n, seed, r) for r in range(start, stop)])


# ==============================
# 実験設定
# ==============================

@dataclass(frozen=True)
class ExperimentConfig:
    beta0: tuple = DEFAULT_BETA0
    sigma0_sq: float = DEFAULT_SIGMA0_SQ
    correlation: CorrelationSpec = field(default_factory=CorrelationSpec)
    n_values: tuple = DEFAULT_N_VALUES
    replications: int = DEFAULT_REPLICATIONS
    criteria: tuple = tuple(CriterionKind.parse(c) for c in DEFAULT_CRITERIA)
    fit_family: str = IDENTITY
    seed: int = DEFAULT_SEED
    design_seed: int = DEFAULT_DESIGN_SEED
    intercept: bool = False
    forced: tuple = ()
    max_k: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "forced", tuple(int(j) for j in self.forced))
        object.__setattr__(self, "criteria", tuple(
            c if isinstance(c, CriterionKind) else CriterionKind.parse(c) for c in self.criteria
        ))

        if self.replications < 1:
            raise ConfigError(f"replications must be >= 1, got {self.replications}")
        if not (0 <= self.seed <= SEED_MAX) or not (0 <= self.design_seed <= SEED_MAX):
            raise ConfigError("seed and design_seed must be 64-bit unsigned integers")
        if not self.sigma0_sq > 0:
            raise ConfigError(f"sigma0_sq must be > 0, got {self.sigma0_sq}")
        if not self.beta0:
            raise ConfigError("beta0 must have at least one entry")
        if not self.n_values:
            raise ConfigError("n_values must not be empty")
        if not self.criteria:
            raise ConfigError("at least one criterion is required")
        if self.fit_family not in FAMILIES:
            raise ConfigError(f"fit_family must be one of {FAMILIES}, got {self.fit_family!r}")
        if self.max_k is not None and not (0 <= self.max_k <= self.p):
            raise ConfigError(f"max_k must be in [0, {self.p}], got {self.max_k}")
        if any(not (1 <= j <= self.p) for j in self.forced):
            raise ConfigError(f"forced indices must lie in [1, {self.p}], got {self.forced}")
        for n in self.n_values:
            if n - self.effective_max_k - 2 <= 0:
                raise ConfigError(f"n={n} is too small for max_k={self.effective_max_k} (needs n - max_k - 2 > 0)")
            try:
                self.correlation.check_valid(n)
            except RicSelectError as e:
                raise ConfigError(str(e)) from None

    @property
    def p(self) -> int:
        return len(self.beta0)

    @property
    def effective_max_k(self) -> int:
        return self.p if self.max_k is None else self.max_k

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {
            "beta0", "sigma0_sq", "correlation", "n_values", "replications", "criteria",
            "fit_family", "seed", "design_seed", "intercept", "forced", "max_k",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")

        kwargs = dict(raw)
        try:
            if "correlation" in kwargs:
                corr = kwargs["correlation"]
                kwargs["correlation"] = CorrelationSpec(corr.get("family", IDENTITY), tuple(corr.get("theta", ())))
            if "criteria" in kwargs:
                kwargs["criteria"] = tuple(CriterionKind.parse_list(kwargs["criteria"]))
            for key in ("replications", "seed", "design_seed"):
                if key in kwargs:
                    kwargs[key] = _as_int(kwargs[key], key)
            return cls(**kwargs)
        except RicSelectError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from None
        except (TypeError, AttributeError, ValueError) as e:
            raise ConfigError(f"invalid experiment config: {e}") from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "beta0": list(self.beta0),
            "sigma0_sq": self.sigma0_sq,
            "correlation": self.correlation.to_dict(),
            "n_values": list(self.n_values),
            "replications": self.replications,
            "criteria": [c.value for c in self.criteria],
            "fit_family": self.fit_family,
            "seed": self.seed,
            "design_seed": self.design_seed,
            "intercept": self.intercept,
            "forced": list(self.forced),
            "max_k": self.max_k,
        }

    def truth(self, n: int | None = None) -> TrueModelSpec:
        """最大の n で計画行列を作り、n 行に切り詰める（n 間で入れ子の計画）"""
        n_max = max(self.n_values) if n is None else max(max(self.n_values), n)
        design = generate_design(n_max, self.p, self.design_seed, self.intercept)
        truth = TrueModelSpec(np.array(self.beta0), self.sigma0_sq, self.correlation, design)
        return truth if n is None else truth.truncated(n)

    def candidates(self) -> list[CandidateModel]:
        return enumerate_candidates(self.p, self.forced, self.effective_max_k)


def _as_int(value, key: str) -> int:
    if isinstance(value, bool) or not float(value).is_integer():
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return int(value)


# ==============================
# 結果
# ==============================

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    n: int
    k: int
    target: float
    mean: float
    standard_error: float
    replications: int

    @property
    def flagged(self) -> bool:
        return abs(self.mean - self.target) > 3.0 * self.standard_error

    @property
    def relative_error(self) -> float:
        """target が 0 のとき（k=0 の quadform_mean）は絶対誤差"""
        gap = abs(self.mean - self.target)
        return gap if self.target == 0.0 else gap / abs(self.target)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "target": self.target,
            "mean": self.mean,
            "standard_error": self.standard_error,
            "replications": self.replications,
            "relative_error": self.relative_error,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class DistributionCheck:
    name: str
    n: int
    k: int
    distribution: str
    statistic: float
    pvalue: float
    replications: int

    @property
    def passed(self) -> bool:
        return self.pvalue > KS_ALPHA

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "k": self.k,
            "distribution": self.distribution,
            "ks_statistic": self.statistic,
            "pvalue": self.pvalue,
            "replications": self.replications,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ExperimentSummary:
    config: ExperimentConfig
    rates: pd.DataFrame | None = None
    identities: tuple = ()
    distributions: tuple = ()

    def rate(self, n: int, kind: CriterionKind, column: str) -> float:
        row = self.rates[(self.rates["n"] == n) & (self.rates["criterion"] == kind.value)]
        return float(row[column].iloc[0])

    def to_dict(self) -> dict:
        out = {"config": self.config.to_dict()}
        if self.rates is not None:
            out["rates"] = rates_to_records(self.rates)
        if self.identities:
            out["identities"] = [c.to_dict() for c in self.identities]
        if self.distributions:
            out["distributions"] = [c.to_dict() for c in self.distributions]
        return out


# ==============================
# 選択率の実験
# ==============================

def _classify(model: CandidateModel | None, truth_set: CandidateModel, p: int) -> dict:
    if model is None:
        return {"k": np.nan, "true": 0.0, "full": 0.0, "overfit": 0.0, "underfit": 0.0, "infeasible": 1.0}
    covers = model.contains(truth_set)
    return {
        "k": float(model.k),
        "true": float(model == truth_set),
        "full": float(model.k == p),
        "overfit": float(covers and model != truth_set),
        "underfit": float(not covers),
        "infeasible": 0.0,
    }


def _run_block(config: ExperimentConfig, truth: TrueModelSpec, candidates, start: int, stop: int) -> list[dict]:
    n = truth.n
    records = []
    for rep in range(start, stop):
        try:
            data = sample_dgp(truth, n, config.seed, rep)
            report = select(data, config.fit_family, candidates, config.criteria, strict=False)
        except RicSelectError as e:
            raise ExperimentError(f"replication {rep} (n={n}) aborted: {e}", replication=rep) from None
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            raise ExperimentError(f"replication {rep} (n={n}) aborted: {e}", replication=rep) from None

        for kind in config.criteria:
            w = report.winner(kind)
            rec = {"n": n, "criterion": kind.value, "replication": rep}
            rec.update(_classify(None if w is None else w.model, truth.active_set, truth.p))
            records.append(rec)
    return records


def run_experiment(config: ExperimentConfig, workers: int | None = None) -> ExperimentSummary:
    workers = worker_count(workers)
    candidates = config.candidates()
    truth_max = config.truth()

    blocks = []
    for n in config.n_values:
        truth_n = truth_max.truncated(n)
        for start in range(0, config.replications, BLOCK_SIZE):
            blocks.append((truth_n, start, min(start + BLOCK_SIZE, config.replications)))

    logger.info("experiment: %d n-values x %d replications, %d candidates, %d worker(s)",
                len(config.n_values), config.replications, len(candidates), workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_block, config, t, candidates, a, b) for t, a, b in blocks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [_run_block(config, t, candidates, a, b) for t, a, b in blocks]

    # 提出順に並べてから集計（ワーカー数に依らず同じ表になる）
    records = [rec for chunk in chunks for rec in chunk]
    df = pd.DataFrame.from_records(records, columns=RECORD_COLUMNS)
    return ExperimentSummary(config=config, rates=get_selection_rates(df))


# ==============================
# 恒等式・分布の検証
# ==============================

def _mean_and_se(values: np.ndarray) -> tuple[float, float]:
    m = values.shape[0]
    sd = float(np.std(values, ddof=1)) if m > 1 else 0.0
    return float(np.mean(values)), sd / math.sqrt(m)


def known_w_statistics(truth: TrueModelSpec, model: CandidateModel, seed: int, replications: int) -> dict:
    """
    W = W₀ を既知として model を当てはめたときの反復ごとの統計量

    - chi2: (n−k)σ̂²/σ₀²
    - trace_term: tr{(W⁻¹ − H)W₀}σ₀²/σ̂² = (n−k)σ₀²/σ̂²
    - quadform: (Xβ̂ − Xβ₀)'W⁻¹(Xβ̂ − Xβ₀)/σ̂²
    """
    if not model.contains(truth.active_set):
        raise DimensionError(f"model {model} must contain the true active set {truth.active_set}")
    n, k = truth.n, model.k
    dof = n - k
    base = Dataset(y=truth.mean, X=truth.design)
    wd = whiten_dataset(base, correlation_matrix_or_none(truth.correlation, n))
    proj = GlsProjector(wd, model)
    mean_w = wd.y

    chi2, trace_term, quadform = [], [], []
    for start in range(0, replications, BATCH_SIZE):
        stop = min(start + BATCH_SIZE, replications)
        Y = _response_batch(truth, seed, start, stop)
        Yw = wd.whiten(Y.T)                     # n × m
        resid = proj.residualize(Yw)
        q = np.sum(resid * resid, axis=0)
        s2 = q / dof
        fitted_minus_truth = (Yw - resid) - mean_w[:, None]
        chi2.append(q / truth.sigma0_sq)
        trace_term.append(dof * truth.sigma0_sq / s2)
        quadform.append(np.sum(fitted_minus_truth ** 2, axis=0) / s2)

    return {
        "chi2": np.concatenate(chi2),
        "trace_term": np.concatenate(trace_term),
        "quadform": np.concatenate(quadform),
    }


def verify_identities(config: ExperimentConfig, model: CandidateModel | None = None) -> ExperimentSummary:
    """
    フル（または指定の）モデル ⊇ 𝒜₀、W = W₀ 既知でのモーメント恒等式と KS 検定
    """
    identities, distributions = [], []
    for n in config.n_values:
        truth = config.truth(n)
        fit_model = model or CandidateModel(tuple(range(1, truth.p + 1)))
        fit_model.check_range(truth.p)
        k = fit_model.k
        targets = expectation_identities(n, k)

        try:
            s = known_w_statistics(truth, fit_model, config.seed, config.replications)
        except RicSelectError as e:
            raise ExperimentError(f"identity verification failed at n={n}: {e}") from None

        for name, target in (("chi2_ratio_mean", targets.chi2_ratio_mean), ("quadform_mean", targets.quadform_mean)):
            values = s["trace_term"] if name == "chi2_ratio_mean" else s["quadform"]
            mean, se = _mean_and_se(values)
            check = IdentityCheck(name, n, k, target, mean, se, config.replications)
            if check.flagged:
                logger.warning("identity %s at n=%d, k=%d: target %.6g outside mean %.6g +/- 3 SE", name, n, k, target, mean)
            identities.append(check)

        dof = n - k
        ks_chi2 = stats.kstest(s["chi2"], stats.chi2(dof).cdf)
        distributions.append(
            DistributionCheck("chi2_scaled_variance", n, k, f"chi2({dof})", float(ks_chi2.statistic), float(ks_chi2.pvalue), config.replications)
        )
        if k > 0:
            ks_f = stats.kstest(s["quadform"] / k, stats.f(k, dof).cdf)
            distributions.append(
                DistributionCheck("f_statistic", n, k, f"F({k},{dof})", float(ks_f.statistic), float(ks_f.pvalue), config.replications)
            )

    return ExperimentSummary(config=config, identities=tuple(identities), distributions=tuple(distributions))


@dataclass(frozen=True)
class MonteCarloScore:
    mean: float
    standard_error: float
    replications: int

    def agrees_with(self, value: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - value) <= n_se * self.standard_error


def residual_score_samples(
    truth: TrueModelSpec, model: CandidateModel, spec: CorrelationSpec, sigma2: float, replications: int, seed: int
) -> np.ndarray:
    """反復ごとの −2·residual_loglik（反復 r のデータは sample_dgp(truth, n, seed, r) と同じ）"""
    n, k = truth.n, model.k
    base = Dataset(y=truth.mean, X=truth.design)
    wd = whiten_dataset(base, correlation_matrix_or_none(spec, n))
    proj = GlsProjector(wd, model)
    constant = (n - k) * (LOG_2PI + math.log(sigma2)) - logdet_gram(wd, model) + wd.logdet_w + proj.logdet_xwx

    scores = []
    for start in range(0, replications, BATCH_SIZE):
        stop = min(start + BATCH_SIZE, replications)
        Yw = wd.whiten(_response_batch(truth, seed, start, stop).T)
        resid = proj.residualize(Yw)
        scores.append(constant + np.sum(resid * resid, axis=0) / sigma2)
    return np.concatenate(scores)


def monte_carlo_residual_score(
    truth: TrueModelSpec, model: CandidateModel, spec: CorrelationSpec, sigma2: float, replications: int, seed: int
) -> MonteCarloScore:
    """−2·residual_loglik の標本平均と標準誤差"""
    mean, se = _mean_and_se(residual_score_samples(truth, model, spec, sigma2, replications, seed))
    return MonteCarloScore(mean=mean, standard_error=se, replications=replications)
