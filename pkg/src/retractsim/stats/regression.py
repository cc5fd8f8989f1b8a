from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import t_sf_two_sided
from .inference import StatsError


class RankDeficient(StatsError):
    pass


class InsufficientObservations(StatsError):
    pass


@dataclass
class RegressionFit:
    names: list[str]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    n_obs: int
    r_squared: float
    residuals: np.ndarray
    sigma2: float

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "coef": float(self.coefficients[i]),
            "se": float(self.std_errors[i]),
            "t": float(self.t_values[i]),
            "p": float(self.p_values[i]),
        }

    def to_dict(self) -> dict:
        return {
            "n_obs": self.n_obs,
            "r_squared": self.r_squared,
            "sigma2": self.sigma2,
            "terms": {name: self.row(name) for name in self.names},
        }


def ols(
    y: Sequence[float], X: np.ndarray, names: Sequence[str] | None = None
) -> RegressionFit:
    """Least squares through a Householder QR of the design.

    Classical (homoskedastic) standard errors, sigma^2 = RSS / (n - k), and
    two-sided t p-values on n - k degrees of freedom.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError("y and design row counts differ")
    if n <= k:
        raise InsufficientObservations(f"need more than {k} observations, got {n}")
    if names is None:
        names = [f"x{i}" for i in range(k)]
    names = list(names)

    q, r = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(r))
    scale = max(1.0, float(np.abs(X).max()))
    if diag.min() <= n * np.finfo(float).eps * scale * max(1.0, diag.max()):
        raise RankDeficient("design matrix does not have full column rank")

    beta = np.linalg.solve(r, q.T @ y)
    resid = y - X @ beta
    dof = n - k
    rss = float(resid @ resid)
    sigma2 = rss / dof
    r_inv = np.linalg.solve(r, np.eye(k))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, beta / se, np.copysign(np.inf, beta))
    p = np.array([t_sf_two_sided(float(tv), dof) if math.isfinite(tv) else 0.0 for tv in t])

    has_intercept = bool(np.any(np.all(X == 1.0, axis=0)))
    centre = y.mean() if has_intercept else 0.0
    tss = float(((y - centre) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    return RegressionFit(names, beta, se, t, p, n, r2, resid, sigma2)
