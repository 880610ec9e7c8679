# -*- coding: utf-8 -*-
"""
GLS 推定・残差（制限）対数尤度・通常の対数尤度・θ のプロファイル REML
"""
from __future__ import annotations

import math
import logging
from dataclasses import dataclass

import numpy as np

from errors import DimensionError, DomainError, InvalidCorrelationError, NotSpdError, PerfectFitError
from model_core import (
    AR1,
    EXCHANGEABLE,
    IDENTITY,
    CandidateModel,
    CorrelationSpec,
    Dataset,
    WhitenedData,
    build_correlation,
    gls_solve,
    whiten_dataset,
)
from settings import (
    AR1_BOUNDS,
    BOUNDARY_TOL,
    EXCHANGEABLE_MARGIN,
    EXCHANGEABLE_UPPER,
    GOLDEN_MAX_ITER,
    GOLDEN_TOL,
    PERFECT_FIT_RTOL,
    PROFILE_GRID_POINTS,
)

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FitPieces:
    q: float
    logdet_w: float
    logdet_xwx: float
    logdet_xx: float


@dataclass(frozen=True)
class GlsResult:
    beta_hat: np.ndarray
    sigma2_reml: float
    sigma2_mle: float
    pieces: FitPieces


@dataclass(frozen=True)
class FittedModel:
    model: CandidateModel
    correlation: CorrelationSpec
    n: int
    beta_hat: np.ndarray
    sigma2_reml: float
    sigma2_mle: float
    pieces: FitPieces
    resid_loglik: float
    boundary_hit: bool = False
    warnings: tuple[str, ...] = ()

    @property
    def k(self) -> int:
        return self.model.k

    @property
    def theta_hat(self) -> np.ndarray:
        return np.array(self.correlation.theta, dtype=float)

    def summary(self) -> dict:
        return {
            "active": list(self.model.active),
            "k": self.k,
            "family": self.correlation.family,
            "theta_hat": list(self.correlation.theta),
            "beta_hat": [float(b) for b in self.beta_hat],
            "sigma2_reml": self.sigma2_reml,
            "sigma2_mle": self.sigma2_mle,
            "q": self.pieces.q,
            "logdet_w": self.pieces.logdet_w,
            "logdet_xwx": self.pieces.logdet_xwx,
            "logdet_xx": self.pieces.logdet_xx,
            "resid_loglik": self.resid_loglik,
            "boundary_hit": self.boundary_hit,
            "warnings": list(self.warnings),
        }


# ==============================
# 便利関数
# ==============================

def correlation_matrix_or_none(spec: CorrelationSpec, n: int):
    """単位行列なら None（白色化をスキップ）"""
    if spec.is_identity:
        spec.check_valid(n)
        return None
    return build_correlation(spec, n)


def whiten_for(data: Dataset, spec: CorrelationSpec) -> WhitenedData:
    return whiten_dataset(data, correlation_matrix_or_none(spec, data.n))


def _check_dof(n: int, model: CandidateModel, minimum: int = 1) -> None:
    if n - model.k < minimum:
        raise DimensionError(f"model {model} has k={model.k} but n={n}: need n - k >= {minimum}")


def residual_loglik_from_pieces(n: int, k: int, pieces: FitPieces, sigma2: float) -> float:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    dof = n - k
    return -0.5 * (
        dof * LOG_2PI
        - pieces.logdet_xx
        + dof * math.log(sigma2)
        + pieces.logdet_w
        + pieces.logdet_xwx
        + pieces.q / sigma2
    )


def _fit_pieces(wd: WhitenedData, model: CandidateModel) -> tuple[FitPieces, np.ndarray]:
    pieces, beta = gls_solve(wd, model)
    return FitPieces(q=pieces.q, logdet_w=wd.logdet_w, logdet_xwx=pieces.logdet_xwx, logdet_xx=pieces.logdet_xx), beta


def _gls_fit_whitened(wd: WhitenedData, model: CandidateModel) -> GlsResult:
    _check_dof(wd.n, model)
    pieces, beta = _fit_pieces(wd, model)

    yy = float(wd.y @ wd.y)
    if pieces.q <= PERFECT_FIT_RTOL * yy:
        raise PerfectFitError(f"model {model} fits the response exactly (q={pieces.q:.3g}); criteria are undefined")

    n = wd.n
    return GlsResult(
        beta_hat=beta,
        sigma2_reml=pieces.q / (n - model.k),
        sigma2_mle=pieces.q / n,
        pieces=pieces,
    )


# ==============================
# 推定
# ==============================

def gls_fit(data: Dataset, model: CandidateModel, W=None) -> GlsResult:
    """W=None は単位行列"""
    model.check_range(data.p)
    return _gls_fit_whitened(whiten_dataset(data, W), model)


def residual_loglik(data: Dataset, model: CandidateModel, spec: CorrelationSpec, sigma2: float) -> float:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    model.check_range(data.p)
    _check_dof(data.n, model)
    pieces, _ = _fit_pieces(whiten_for(data, spec), model)
    return residual_loglik_from_pieces(data.n, model.k, pieces, sigma2)


def full_loglik(data: Dataset, beta, spec: CorrelationSpec, sigma2: float) -> float:
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.p,):
        raise DimensionError(f"beta must have length p={data.p}, got shape {beta.shape}")

    wd = whiten_for(data, spec)
    resid = wd.whiten(data.y - data.X @ beta)
    n = data.n
    return -0.5 * (n * (LOG_2PI + math.log(sigma2)) + wd.logdet_w + float(resid @ resid) / sigma2)


def fit_with_correlation(
    data: Dataset,
    model: CandidateModel,
    spec: CorrelationSpec,
    boundary_hit: bool = False,
    warnings: tuple[str, ...] = (),
) -> FittedModel:
    """θ を固定した（既知の W での）当てはめ"""
    model.check_range(data.p)
    res = _gls_fit_whitened(whiten_for(data, spec), model)
    return FittedModel(
        model=model,
        correlation=spec,
        n=data.n,
        beta_hat=res.beta_hat,
        sigma2_reml=res.sigma2_reml,
        sigma2_mle=res.sigma2_mle,
        pieces=res.pieces,
        resid_loglik=residual_loglik_from_pieces(data.n, model.k, res.pieces, res.sigma2_reml),
        boundary_hit=boundary_hit,
        warnings=warnings,
    )


# ==============================
# θ のプロファイル
# ==============================

@dataclass(frozen=True)
class GoldenResult:
    argmin: float
    minimum: float
    iterations: int
    converged: bool


def golden_section_minimize(f, lo: float, hi: float, tol: float = GOLDEN_TOL, max_iter: int = GOLDEN_MAX_ITER) -> GoldenResult:
    """
    [lo, hi] 上の単峰関数 f の最小点。区間幅 ≤ tol で停止。
    端点の方が小さければ端点を返す。
    """
    a0, b0 = min(lo, hi), max(lo, hi)
    a, b = a0, b0
    fa, fb = f(a), f(b)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)

    iteration = 0
    while iteration < max_iter and (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        iteration += 1

    x, fx = (c, fc) if fc < fd else (d, fd)
    converged = (b - a) <= tol and math.isfinite(fx)
    for edge, fedge in ((a0, fa), (b0, fb)):
        if fedge < fx:
            x, fx = edge, fedge
    return GoldenResult(argmin=x, minimum=fx, iterations=iteration, converged=converged)


def profile_bounds(family: str, n: int) -> tuple[float, float]:
    if family == AR1:
        return AR1_BOUNDS
    if family == EXCHANGEABLE:
        lo, hi = -1.0 / (n - 1) + EXCHANGEABLE_MARGIN, EXCHANGEABLE_UPPER
        if lo >= hi:
            raise InvalidCorrelationError(f"exchangeable search interval is empty for n={n}")
        return lo, hi
    raise InvalidCorrelationError(f"family {family!r} has no parameter to profile")


def profiled_neg2_residual_loglik(data: Dataset, model: CandidateModel, family: str, theta: float) -> float:
    """σ² = q(θ)/(n−k) を代入した −2L（θ に依らない定数込み）"""
    spec = CorrelationSpec(family, (theta,))
    try:
        pieces, _ = _fit_pieces(whiten_for(data, spec), model)
    except NotSpdError:
        return math.inf
    dof = data.n - model.k
    if pieces.q <= 0:
        return math.inf
    return -2.0 * residual_loglik_from_pieces(data.n, model.k, pieces, pieces.q / dof)


def profile_reml(data: Dataset, model: CandidateModel, family: str = IDENTITY) -> FittedModel:
    model.check_range(data.p)
    _check_dof(data.n, model, minimum=3)

    if family == IDENTITY:
        return fit_with_correlation(data, model, CorrelationSpec(IDENTITY))

    lo, hi = profile_bounds(family, data.n)

    def objective(theta: float) -> float:
        return profiled_neg2_residual_loglik(data, model, family, theta)

    # 粗いグリッドで括弧を作ってから黄金分割（多峰のときの取りこぼし防止）
    grid = np.linspace(lo, hi, PROFILE_GRID_POINTS)
    values = np.array([objective(t) for t in grid])
    i = int(np.argmin(values))
    left, right = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = golden_section_minimize(objective, left, right)

    theta_hat, best = res.argmin, res.minimum
    if values[i] < best:
        theta_hat, best = float(grid[i]), float(values[i])

    warnings: list[str] = []
    if not res.converged:
        warnings.append(f"golden-section search did not converge in {res.iterations} iterations")
    boundary_hit = (theta_hat - lo) <= BOUNDARY_TOL or (hi - theta_hat) <= BOUNDARY_TOL
    if boundary_hit:
        warnings.append(f"theta_hat={theta_hat:.6g} is at the search boundary [{lo:.6g}, {hi:.6g}]")
    for w in warnings:
        logger.warning("model %s (%s): %s", model, family, w)

    return fit_with_correlation(
        data, model, CorrelationSpec(family, (theta_hat,)), boundary_hit=boundary_hit, warnings=tuple(warnings)
    )
