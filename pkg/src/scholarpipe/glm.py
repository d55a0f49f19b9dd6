"""Quasi-Poisson regression via IRLS with a log link.

The estimator follows the scikit-learn convention (fit/predict,
get_params/set_params) so it composes with the wider ecosystem. The
quasi-Poisson family shares the Poisson maximum-likelihood coefficients;
only the dispersion and the coefficient covariance differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import RankDeficient, UnknownLevel


@dataclass(frozen=True)
class Factor:
    name: str
    levels: tuple[str, ...]  # first level is the reference
    catchall: Optional[str] = None  # unknown values map here if set

    def level_of(self, value: str) -> str:
        if value in self.levels:
            return value
        if self.catchall is not None:
            return self.catchall
        raise UnknownLevel(f"{self.name}={value!r}")


PUBLICATION_TYPE = Factor("publication_type", ("article", "book", "dissertation", "preprint"))
YEAR_BIN = Factor("year_bin", ("[2000,2005)", "[2005,2010)", "[2010,2015)", "[2015,2020)", "[2020,2025]"))
LANGUAGE = Factor(
    "language",
    ("English", "German", "Spanish", "French", "Indonesian", "Portuguese", "Other"),
    catchall="Other",
)
METHOD_LABEL = Factor("method_label", ("NoMethods", "NonAIMethods", "AIMethods"))

DEFAULT_FACTORS = (PUBLICATION_TYPE, YEAR_BIN, LANGUAGE, METHOD_LABEL)


@dataclass(frozen=True)
class DesignSpec:
    response: str
    factors: tuple[Factor, ...] = DEFAULT_FACTORS

    @property
    def column_names(self) -> tuple[str, ...]:
        names = ["intercept"]
        for factor in self.factors:
            names.extend(f"{factor.name}={level}" for level in factor.levels[1:])
        return tuple(names)


def year_bin_of(year: int) -> str:
    for level in YEAR_BIN.levels:
        lo = int(level[1:5])
        hi = int(level[6:10])
        if lo <= year < hi or (level.endswith("]") and year == hi):
            return level
    raise UnknownLevel(f"year {year} outside the binned range")


def encode_design(
    records: Sequence[Mapping[str, str]],
    spec: DesignSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Intercept plus dummy columns for non-reference levels.

    Column order is deterministic: factors in spec order, levels in their
    declared order.
    """
    n = len(records)
    p = len(spec.column_names)
    X = np.zeros((n, p))
    X[:, 0] = 1.0
    y = np.zeros(n)
    offsets = {}
    col = 1
    for factor in spec.factors:
        for level in factor.levels[1:]:
            offsets[(factor.name, level)] = col
            col += 1
    for i, record in enumerate(records):
        y[i] = float(record[spec.response])
        for factor in spec.factors:
            level = factor.level_of(str(record[factor.name]))
            if level != factor.levels[0]:
                X[i, offsets[(factor.name, level)]] = 1.0
    return X, y


@dataclass
class QuasiPoissonFit:
    coefficients: np.ndarray
    column_names: tuple[str, ...]
    dispersion: float
    covariance: np.ndarray
    deviance: float
    deviance_path: list[float]
    converged: bool
    n_iter: int

    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))


def poisson_deviance(y: np.ndarray, mu: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(y > 0, y * np.log(np.where(y > 0, y / mu, 1.0)), 0.0)
    return float(2.0 * np.sum(term - (y - mu)))


class QuasiPoissonRegressor:
    """Log-link GLM fitted by iteratively reweighted least squares.

    Parameters
    ----------
    tol : convergence tolerance on the max absolute coefficient change.
    max_iter : IRLS iteration cap; hitting it flags the fit unconverged.
    """

    def __init__(self, tol: float = 1e-8, max_iter: int = 100):
        self.tol = tol
        self.max_iter = max_iter

    def get_params(self, deep: bool = True) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter}

    def set_params(self, **params) -> "QuasiPoissonRegressor":
        for key, value in params.items():
            if key not in ("tol", "max_iter"):
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        offset: Optional[np.ndarray] = None,
    ) -> "QuasiPoissonRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        if np.any(y < 0):
            raise ValueError("response must be non-negative")
        if np.linalg.matrix_rank(X) < p:
            raise RankDeficient(f"design has rank < {p}")
        offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)

        mu = (y + np.mean(y) + 0.1) / 2.0
        eta = np.log(mu)
        beta = np.zeros(p)
        deviances: list[float] = []
        converged = False
        iteration = 0
        for iteration in range(1, self.max_iter + 1):
            w = mu
            z = (eta - offset) + (y - mu) / mu
            sw = np.sqrt(w)
            Q, R = np.linalg.qr(X * sw[:, None])
            new_beta = np.linalg.solve(R, Q.T @ (z * sw))
            eta = X @ new_beta + offset
            # Guard against divergence under (quasi-)separation.
            mu = np.exp(np.clip(eta, -30.0, 30.0))
            deviances.append(poisson_deviance(y, mu))
            if np.max(np.abs(new_beta - beta)) < self.tol:
                beta = new_beta
                converged = True
                break
            beta = new_beta

        pearson = float(np.sum((y - mu) ** 2 / mu))
        dof = max(n - p, 1)
        dispersion = pearson / dof
        w = mu
        xtwx = X.T @ (X * w[:, None])
        covariance = dispersion * np.linalg.inv(xtwx)
        self.fit_ = QuasiPoissonFit(
            coefficients=beta,
            column_names=tuple(f"x{i}" for i in range(p)),
            dispersion=dispersion,
            covariance=covariance,
            deviance=deviances[-1],
            deviance_path=deviances,
            converged=converged,
            n_iter=iteration,
        )
        self.coef_ = beta
        return self

    def predict(self, X: np.ndarray, offset: Optional[np.ndarray] = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        eta = X @ self.coef_
        if offset is not None:
            eta = eta + np.asarray(offset, dtype=float)
        return np.exp(eta)


def fit_quasipoisson(
    X: np.ndarray,
    y: np.ndarray,
    offset: Optional[np.ndarray] = None,
    column_names: Optional[Sequence[str]] = None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> QuasiPoissonFit:
    model = QuasiPoissonRegressor(tol=tol, max_iter=max_iter).fit(X, y, offset=offset)
    fit = model.fit_
    if column_names is not None:
        fit.column_names = tuple(column_names)
    return fit


PREDICTION_SCALES = {"response": 1.0, "per-1000": 1000.0, "percentage": 100.0}


def predict_adjusted(
    fit: QuasiPoissonFit,
    profile: Mapping[str, str],
    spec: DesignSpec,
    scale: str = "response",
) -> float:
    """Fitted mean for one covariate profile, on the requested scale."""
    if scale not in PREDICTION_SCALES:
        raise ValueError(f"unknown scale {scale!r}")
    row = {factor.name: profile[factor.name] for factor in spec.factors}
    row[spec.response] = 0
    X, _ = encode_design([row], spec)
    return float(math.exp(X[0] @ fit.coefficients)) * PREDICTION_SCALES[scale]
