# -*- coding: utf-8 -*-
"""
ドメイン型と線形代数（相関行列・コレスキー分解・GLS 射影の二次形式）

他のモジュールはすべてここを経由して W(θ), log|W|, q = y'(W⁻¹ − H_𝒜)y を得る。
添字は 1 始まり（𝒜 ⊆ {1..p}）で持ち、配列アクセス時だけ 0 始まりに直す。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from errors import DimensionError, InvalidCorrelationError, NotSpdError
from settings import SPD_PIVOT_RTOL, SYMMETRY_RTOL

logger = logging.getLogger(__name__)

IDENTITY = "identity"
AR1 = "ar1"
EXCHANGEABLE = "exchangeable"
FAMILIES = (IDENTITY, AR1, EXCHANGEABLE)


def _frozen_array(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise DimensionError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# ==============================
# ドメイン型
# ==============================

@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    X: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        y = _frozen_array(self.y, 1, "y")
        X = _frozen_array(self.X, 2, "X")
        if y.shape[0] < 1 or X.shape[1] < 1:
            raise DimensionError(f"need n >= 1 and p >= 1, got n={y.shape[0]}, p={X.shape[1]}")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise DimensionError("y and X must contain only finite values")

        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(1, X.shape[1] + 1))
        if len(names) != X.shape[1]:
            raise DimensionError(f"{len(names)} column names for {X.shape[1]} columns")

        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_response(self, y) -> "Dataset":
        return Dataset(y=y, X=self.X, names=self.names)

    def with_design(self, X) -> "Dataset":
        return Dataset(y=self.y, X=X, names=tuple(f"x{j}" for j in range(1, np.shape(X)[1] + 1)))


@dataclass(frozen=True, order=True)
class CandidateModel:
    """有効な説明変数の添字集合 𝒜（1 始まり、昇順、重複なし）。空集合は null モデル"""
    active: tuple[int, ...] = ()

    def __post_init__(self):
        active = tuple(int(j) for j in self.active)
        if any(j < 1 for j in active):
            raise DimensionError(f"indices must be >= 1, got {active}")
        if list(active) != sorted(set(active)):
            raise DimensionError(f"active set must be sorted and duplicate-free, got {active}")
        object.__setattr__(self, "active", active)

    @classmethod
    def of(cls, indices, p: int | None = None) -> "CandidateModel":
        model = cls(tuple(sorted(set(int(j) for j in indices))))
        if p is not None:
            model.check_range(p)
        return model

    @property
    def k(self) -> int:
        return len(self.active)

    @property
    def columns(self) -> list[int]:
        return [j - 1 for j in self.active]

    def check_range(self, p: int) -> None:
        if self.active and self.active[-1] > p:
            raise DimensionError(f"model {self} has index > p={p}")

    def contains(self, other: "CandidateModel") -> bool:
        return set(other.active).issubset(self.active)

    def sort_key(self) -> tuple:
        return (self.k, self.active)

    def label(self, names=None) -> str:
        if not self.active:
            return "{}"
        if names is None:
            return "{" + ",".join(str(j) for j in self.active) + "}"
        return "{" + ",".join(names[j - 1] for j in self.active) + "}"

    def __str__(self) -> str:
        return self.label()


@dataclass(frozen=True)
class CorrelationSpec:
    family: str = IDENTITY
    theta: tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidCorrelationError(f"unknown correlation family {self.family!r}, expected one of {FAMILIES}")
        theta = tuple(float(t) for t in np.atleast_1d(self.theta)) if np.size(self.theta) else ()
        expected = 0 if self.family == IDENTITY else 1
        if len(theta) != expected:
            raise InvalidCorrelationError(f"{self.family} takes {expected} parameter(s), got {len(theta)}")
        object.__setattr__(self, "theta", theta)

    @property
    def m(self) -> int:
        return len(self.theta)

    @property
    def is_identity(self) -> bool:
        # θ=0 の AR(1) / exchangeable も単位行列
        return self.family == IDENTITY or self.theta[0] == 0.0

    def validity_region(self, n: int) -> tuple[float, float]:
        """θ の開区間"""
        if self.family == AR1:
            return (-1.0, 1.0)
        if self.family == EXCHANGEABLE:
            return (-1.0 / (n - 1), 1.0)
        return (0.0, 0.0)

    def check_valid(self, n: int) -> None:
        if self.family == IDENTITY:
            return
        if n < 2:
            raise DimensionError(f"{self.family} correlation needs n >= 2, got n={n}")
        lo, hi = self.validity_region(n)
        theta = self.theta[0]
        if not (lo < theta < hi):
            raise InvalidCorrelationError(f"{self.family} theta={theta} outside ({lo:.6g}, {hi:.6g}) for n={n}")

    def to_dict(self) -> dict:
        return {"family": self.family, "theta": list(self.theta)}


@dataclass(frozen=True)
class SpdFactor:
    lower: np.ndarray
    logdet: float

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def solve(self, B) -> np.ndarray:
        """M⁻¹B"""
        B = np.asarray(B, dtype=float)
        if self.size == 0:
            return np.zeros_like(B)
        return sla.cho_solve((self.lower, True), B, check_finite=False)

    def whiten(self, B) -> np.ndarray:
        """L⁻¹B（M = LL'）"""
        B = np.asarray(B, dtype=float)
        if self.size == 0:
            return np.zeros_like(B)
        return sla.solve_triangular(self.lower, B, lower=True, check_finite=False)

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


@dataclass(frozen=True)
class TrueModelSpec:
    beta0: np.ndarray
    sigma0_sq: float
    correlation: CorrelationSpec
    design: np.ndarray

    def __post_init__(self):
        beta0 = _frozen_array(self.beta0, 1, "beta0")
        design = _frozen_array(self.design, 2, "design")
        if not self.sigma0_sq > 0:
            raise DimensionError(f"sigma0_sq must be > 0, got {self.sigma0_sq}")
        if design.shape[1] != beta0.shape[0]:
            raise DimensionError(f"design has {design.shape[1]} columns but beta0 has {beta0.shape[0]} entries")
        object.__setattr__(self, "beta0", beta0)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "sigma0_sq", float(self.sigma0_sq))
        self.correlation.check_valid(design.shape[0])

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.beta0.shape[0]

    @property
    def active_set(self) -> CandidateModel:
        return CandidateModel(tuple(int(j) + 1 for j in np.flatnonzero(self.beta0)))

    @property
    def k0(self) -> int:
        return self.active_set.k

    @property
    def mean(self) -> np.ndarray:
        return self.design @ self.beta0

    def truncated(self, n: int) -> "TrueModelSpec":
        """先頭 n 行の計画行列に切り詰める"""
        if n > self.n:
            raise DimensionError(f"truth design has {self.n} rows, cannot serve n={n}")
        if n == self.n:
            return self
        return TrueModelSpec(self.beta0, self.sigma0_sq, self.correlation, self.design[:n])


# ==============================
# 相関行列・分解
# ==============================

def build_correlation(spec: CorrelationSpec, n: int) -> np.ndarray:
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    spec.check_valid(n)

    if spec.family == IDENTITY:
        return np.eye(n)

    theta = spec.theta[0]
    if spec.family == AR1:
        return sla.toeplitz(theta ** np.arange(n))

    # exchangeable：対角 1、非対角 θ
    return (1.0 - theta) * np.eye(n) + theta * np.ones((n, n))


def spd_factorize(M) -> SpdFactor:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        # 0×0 の行列式は 1（log は 0）
        return SpdFactor(lower=np.zeros((0, 0)), logdet=0.0)

    scale = np.max(np.abs(M))
    if np.max(np.abs(M - M.T)) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise NotSpdError("matrix is not symmetric")

    max_diag = float(np.max(np.diag(M)))
    if not max_diag > 0:
        raise NotSpdError("matrix is not positive definite (non-positive diagonal)")

    try:
        lower = sla.cholesky(M, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NotSpdError(f"matrix is not positive definite: {e}") from None

    pivots = np.diag(lower) ** 2
    if np.min(pivots) <= SPD_PIVOT_RTOL * max_diag:
        raise NotSpdError(
            f"matrix is not positive definite (pivot {np.min(pivots):.3g} <= {SPD_PIVOT_RTOL:g} x max diagonal)"
        )

    logdet = 2.0 * float(np.sum(np.log(np.diag(lower))))
    lower.setflags(write=False)
    return SpdFactor(lower=lower, logdet=logdet)


# ==============================
# 白色化と GLS 射影
# ==============================

@dataclass(frozen=True)
class ProjectorPieces:
    q: float
    logdet_xwx: float
    logdet_xx: float


@dataclass(frozen=True)
class WhitenedData:
    """
    W = LL' として ỹ = L⁻¹y, X̃ = L⁻¹X を保持する。
    q = ||ỹ − X̃_𝒜 β̂||² なので候補モデルごとの計算は n×k で済む。
    """
    y: np.ndarray
    X: np.ndarray
    gram_xx: np.ndarray
    logdet_w: float
    factor: SpdFactor | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def whiten(self, B) -> np.ndarray:
        if self.factor is None:
            return np.asarray(B, dtype=float)
        return self.factor.whiten(B)


def whiten_dataset(data: Dataset, W=None) -> WhitenedData:
    """W=None は単位行列（分解をスキップ）"""
    gram_xx = data.X.T @ data.X
    if W is None:
        return WhitenedData(y=data.y, X=data.X, gram_xx=gram_xx, logdet_w=0.0)

    W = np.asarray(W, dtype=float)
    if W.shape != (data.n, data.n):
        raise DimensionError(f"W must be {data.n}x{data.n}, got {W.shape}")
    factor = spd_factorize(W)
    return WhitenedData(
        y=factor.whiten(data.y),
        X=factor.whiten(data.X),
        gram_xx=gram_xx,
        logdet_w=factor.logdet,
        factor=factor,
    )


class GlsProjector:
    """白色化した空間での X̃_𝒜 への直交射影（元の空間では W⁻¹ − H_𝒜）"""

    def __init__(self, wd: WhitenedData, model: CandidateModel):
        model.check_range(wd.X.shape[1])
        self.model = model
        self.Xa = wd.X[:, model.columns]
        try:
            self.factor = spd_factorize(self.Xa.T @ self.Xa)
        except NotSpdError as e:
            raise NotSpdError(f"active design of model {model} is rank deficient under W: {e}") from None

    @property
    def logdet_xwx(self) -> float:
        return self.factor.logdet

    def coefficients(self, v) -> np.ndarray:
        """(X̃'X̃)⁻¹X̃'v"""
        return self.factor.solve(self.Xa.T @ v)

    def residualize(self, V) -> np.ndarray:
        """(I − P̃)V"""
        V = np.asarray(V, dtype=float)
        if self.model.k == 0:
            return V.copy()
        return V - self.Xa @ self.coefficients(V)


def logdet_gram(wd: WhitenedData, model: CandidateModel) -> float:
    """log|X_𝒜'X_𝒜|"""
    cols = model.columns
    try:
        return spd_factorize(wd.gram_xx[np.ix_(cols, cols)]).logdet
    except NotSpdError as e:
        raise NotSpdError(f"active design of model {model} is rank deficient: {e}") from None


def gls_solve(wd: WhitenedData, model: CandidateModel) -> tuple[ProjectorPieces, np.ndarray]:
    proj = GlsProjector(wd, model)
    beta = proj.coefficients(wd.y)
    resid = wd.y - proj.Xa @ beta if model.k else wd.y
    q = float(resid @ resid)
    pieces = ProjectorPieces(q=q, logdet_xwx=proj.logdet_xwx, logdet_xx=logdet_gram(wd, model))
    logger.debug("model %s: q=%.6g logdet_xwx=%.6g", model, q, pieces.logdet_xwx)
    return pieces, beta


def projector_pieces(data: Dataset, model: CandidateModel, W=None) -> ProjectorPieces:
    if W is not None and np.array_equal(np.asarray(W), np.eye(data.n)):
        W = None
    pieces, _ = gls_solve(whiten_dataset(data, W), model)
    return pieces
