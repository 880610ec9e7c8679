import math

import numpy as np
import pytest

from model_core import CorrelationSpec, Dataset, TrueModelSpec, spd_factorize


@pytest.fixture
def tiny_data():
    """y=(1,2,3)', X = 1 列の 1"""
    return Dataset(y=[1.0, 2.0, 3.0], X=np.ones((3, 1)))


@pytest.fixture
def random_data():
    rng = np.random.default_rng(2024)
    X = rng.standard_normal((30, 4))
    y = X @ np.array([1.0, -0.5, 0.0, 2.0]) + rng.standard_normal(30)
    return Dataset(y=y, X=X)


@pytest.fixture
def sparse_truth():
    """β₀=(3, 1.5, 0, 0, 2, 0)', σ₀²=1, W₀=I, n=50"""
    rng = np.random.default_rng(11)
    design = rng.standard_normal((50, 6))
    return TrueModelSpec(np.array([3.0, 1.5, 0.0, 0.0, 2.0, 0.0]), 1.0, CorrelationSpec(), design)


@pytest.fixture
def write_csv(tmp_path):
    def _write(text: str, name: str = "data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path
    return _write


# ==============================
# 照合用の閉形式
# ==============================

@pytest.fixture
def ols_coefficients():
    """正規方程式 (X'X)β = X'y を直接解く（W=I の照合用）"""
    def _solve(data, model):
        Xa = data.X[:, model.columns]
        return spd_factorize(Xa.T @ Xa).solve(Xa.T @ data.y)
    return _solve


@pytest.fixture
def ar1_logdet():
    """AR(1) の det W = (1 − θ²)^(n−1)"""
    def _logdet(theta: float, n: int) -> float:
        return (n - 1) * math.log1p(-theta * theta)
    return _logdet
