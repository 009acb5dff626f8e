"""Tobit regression left-censored at zero.

The likelihood is optimized in Olsen's parametrization ``gamma = beta / sigma``,
``theta = 1 / sigma``, where the negative log-likelihood is convex:

    censored (y == 0):   -log Phi(-x'gamma)
    uncensored (y > 0):  -log theta + log(2 pi) / 2 + (theta y - x'gamma)^2 / 2

Estimates and standard errors are reported for ``(beta, sigma)``.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .errors import (ComparisonError, DataError, DegenerateDataError, DomainError,
                     NumericalError, RankDeficiencyError, ShapeError)

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DesignMatrix:
    matrix: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise ShapeError("design matrix must be two-dimensional")
        names = tuple(str(c) for c in self.column_names)
        if len(names) != m.shape[1]:
            raise ShapeError(f"{len(names)} column names for {m.shape[1]} columns")
        if len(set(names)) != len(names):
            raise ShapeError(f"duplicate column names in {names}")
        if not np.isfinite(m).all():
            bad = sorted({names[j] for j in np.nonzero(~np.isfinite(m))[1]})
            raise DataError(f"design matrix has missing or non-finite entries in {bad}")
        n, p = m.shape
        if n <= p:
            raise DataError(f"need more rows than columns, got n={n}, p={p}")
        for j in range(p):
            for k in range(j):
                if np.array_equal(m[:, j], m[:, k]):
                    raise RankDeficiencyError([names[k], names[j]], f"columns {names[k]!r} and {names[j]!r} are identical")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "column_names", names)

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence[float]], intercept: bool = True) -> "DesignMatrix":
        names = list(columns)
        cols = [np.asarray(columns[k], dtype=float) for k in names]
        if intercept:
            n = len(cols[0]) if cols else 0
            names.insert(0, "(Intercept)")
            cols.insert(0, np.ones(n))
        return cls(np.column_stack(cols) if cols else np.empty((0, 0)), tuple(names))

    @property
    def shape(self):
        return self.matrix.shape

    def take(self, rows) -> "DesignMatrix":
        return DesignMatrix(self.matrix[rows], self.column_names)


def _as_design(X) -> DesignMatrix:
    if isinstance(X, DesignMatrix):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return DesignMatrix(X, tuple(f"x{j}" for j in range(X.shape[1])))


def _check_response(y, n) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise ShapeError(f"response has shape {y.shape}, expected ({n},)")
    if not np.isfinite(y).all():
        raise DataError("response has non-finite values")
    if (y < 0).any():
        raise DomainError("response must be non-negative (censored at zero)")
    return y


def _parts(gamma, theta, X, y):
    if not theta > 0:
        raise DomainError("theta must be positive")
    xg = X @ gamma
    cens = y <= 0
    return xg, cens


def tobit_negative_log_likelihood(gamma, theta, X, y) -> float:
    """Olsen-parametrized negative log-likelihood, summed over rows."""
    X = np.asarray(X.matrix if isinstance(X, DesignMatrix) else X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite rows in likelihood input")
    xg, cens = _parts(np.asarray(gamma, dtype=float), theta, X, y)
    nll = -special.log_ndtr(-xg[cens]).sum()
    r = theta * y[~cens] - xg[~cens]
    nll += (~cens).sum() * (HALF_LOG_2PI - math.log(theta)) + 0.5 * (r @ r)
    return float(nll)


def _mills(a):
    """phi(a) / Phi(a), stable for large negative ``a``."""
    return np.exp(-0.5 * a * a - HALF_LOG_2PI - special.log_ndtr(a))


def tobit_gradient(gamma, theta, X, y) -> np.ndarray:
    """Gradient of the negative log-likelihood in ``(gamma, theta)``."""
    X = np.asarray(X.matrix if isinstance(X, DesignMatrix) else X, dtype=float)
    y = np.asarray(y, dtype=float)
    xg, cens = _parts(np.asarray(gamma, dtype=float), theta, X, y)
    lam = _mills(-xg[cens])
    r = theta * y[~cens] - xg[~cens]
    g_gamma = X[cens].T @ lam - X[~cens].T @ r
    g_theta = -(~cens).sum() / theta + r @ y[~cens]
    return np.append(g_gamma, g_theta)


def tobit_hessian(gamma, theta, X, y) -> np.ndarray:
    """Hessian of the negative log-likelihood in ``(gamma, theta)``."""
    X = np.asarray(X.matrix if isinstance(X, DesignMatrix) else X, dtype=float)
    y = np.asarray(y, dtype=float)
    xg, cens = _parts(np.asarray(gamma, dtype=float), theta, X, y)
    a = -xg[cens]
    lam = _mills(a)
    w = lam * (a + lam)
    p = X.shape[1]
    H = np.empty((p + 1, p + 1))
    Xc, Xu, yu = X[cens], X[~cens], y[~cens]
    H[:p, :p] = (Xc * w[:, None]).T @ Xc + Xu.T @ Xu
    H[:p, p] = H[p, :p] = -(Xu.T @ yu)
    H[p, p] = (~cens).sum() / theta ** 2 + yu @ yu
    return H


def _independent_columns(X: np.ndarray, names, tol=1e-10):
    """Greedy column scan; returns names of columns spanned by earlier ones."""
    bad = []
    kept = np.empty((X.shape[0], 0))
    scale = np.linalg.norm(X, axis=0)
    for j in range(X.shape[1]):
        if scale[j] == 0:
            bad.append(names[j])
            continue
        trial = np.column_stack([kept, X[:, j] / scale[j]])
        s = np.linalg.svd(trial, compute_uv=False)
        if s[-1] <= tol * s[0]:
            bad.append(names[j])
        else:
            kept = trial
    return bad


def _bfgs(f, grad, x0, H0inv, gtol, max_iter):
    """BFGS with backtracking; steps whose decrease is below roundoff are
    accepted when they shrink the gradient."""
    x = x0.copy()
    fx = f(x)
    g = grad(x)
    Hinv = H0inv.copy()
    it = 0
    while it < max_iter:
        if np.linalg.norm(g) <= gtol:
            return x, fx, g, it, True
        it += 1
        d = -Hinv @ g
        slope = g @ d
        if slope >= 0:
            Hinv = H0inv.copy()
            d = -Hinv @ g
            slope = g @ d
        step = 1.0
        fuzz = 1e-13 * max(1.0, abs(fx))
        while True:
            xn = x + step * d
            try:
                fn = f(xn)
            except DomainError:
                fn = math.inf
            if fn <= fx + 1e-4 * step * slope:
                gn = grad(xn)
                break
            if math.isfinite(fn) and fn <= fx + fuzz:
                gn = grad(xn)
                if np.linalg.norm(gn) < np.linalg.norm(g):
                    break
            step *= 0.5
            if step < 1e-16:
                return x, fx, g, it, False
        s = xn - x
        yv = gn - g
        sy = s @ yv
        if sy > 1e-300:
            rho = 1.0 / sy
            Hy = Hinv @ yv
            Hinv = Hinv + (rho * rho * (yv @ Hy) + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        x, fx, g = xn, fn, gn
    return x, fx, g, it, bool(np.linalg.norm(g) <= gtol)


@dataclass(frozen=True)
class TobitFit:
    beta: np.ndarray
    sigma: float
    std_errors: np.ndarray          # length p + 1, the last entry is for sigma
    covariance: np.ndarray          # (p + 1) x (p + 1) over (beta, sigma)
    log_likelihood: float
    n_obs: int
    n_censored: int
    bic: float
    converged: bool
    iterations: int
    column_names: tuple[str, ...]
    name: str = ""
    sample_key: str = field(default="", repr=False)

    @property
    def n_params(self) -> int:
        return len(self.beta) + 1

    @property
    def z_values(self) -> np.ndarray:
        return self.beta / self.std_errors[:-1]

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.z_values))

    def coefficient(self, name: str) -> float:
        return float(self.beta[self.column_names.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.std_errors[self.column_names.index(name)])

    def to_dict(self) -> dict:
        rows = [{"name": n, "Estimate": float(b), "Standard Error": float(se), "z_value": float(z),
                 "approx P>|z|": float(p)}
                for n, b, se, z, p in zip(self.column_names, self.beta, self.std_errors, self.z_values,
                                          self.p_values)]
        return {"name": self.name, "coefficients": rows, "sigma": float(self.sigma),
                "sigma_std_error": float(self.std_errors[-1]), "log_likelihood": float(self.log_likelihood),
                "bic": float(self.bic), "n_obs": self.n_obs, "n_censored": self.n_censored,
                "converged": self.converged, "iterations": self.iterations}

    @classmethod
    def from_dict(cls, d: dict) -> "TobitFit":
        """Rebuild a fit for scoring; the covariance keeps only its diagonal."""
        coefs = d["coefficients"]
        se = np.array([c["Standard Error"] for c in coefs] + [d["sigma_std_error"]], dtype=float)
        return cls(beta=np.array([c["Estimate"] for c in coefs], dtype=float), sigma=float(d["sigma"]),
                   std_errors=se, covariance=np.diag(se ** 2), log_likelihood=float(d["log_likelihood"]),
                   n_obs=int(d["n_obs"]), n_censored=int(d["n_censored"]), bic=float(d["bic"]),
                   converged=bool(d["converged"]), iterations=int(d["iterations"]),
                   column_names=tuple(c["name"] for c in coefs), name=d.get("name", ""))


def sample_key(y) -> str:
    return hashlib.sha256(np.ascontiguousarray(y, dtype=float).tobytes()).hexdigest()[:16]


def fit_tobit(X, y, gtol: float = 1e-8, max_iter: int = 500, name: str = "") -> TobitFit:
    """Maximum-likelihood Tobit fit with left censoring at zero."""
    X = _as_design(X)
    Xm = X.matrix
    n, p = Xm.shape
    y = _check_response(y, n)
    cens = y <= 0
    if cens.all():
        raise DegenerateDataError("every observation is censored; the scale is not identified")
    bad = _independent_columns(Xm, X.column_names)
    if bad:
        raise RankDeficiencyError(bad)

    # start from OLS on the uncensored rows when they identify beta
    Xu, yu = Xm[~cens], y[~cens]
    if len(yu) > p and not _independent_columns(Xu, X.column_names):
        b0, *_ = np.linalg.lstsq(Xu, yu, rcond=None)
        s0 = float(np.sqrt(np.mean((yu - Xu @ b0) ** 2)))
    else:
        b0 = np.zeros(p)
        b0[0] = yu.mean() if np.allclose(Xm[:, 0], 1.0) else 0.0
        s0 = float(yu.std())
    if not s0 > 0:
        s0 = max(float(np.std(y)), 1e-3)
    x0 = np.append(b0 / s0, 1.0 / s0)

    f = lambda v: tobit_negative_log_likelihood(v[:p], v[p], Xm, y)
    g = lambda v: tobit_gradient(v[:p], v[p], Xm, y)
    try:
        H0inv = np.linalg.inv(tobit_hessian(x0[:p], x0[p], Xm, y))
        if not np.all(np.linalg.eigvalsh(0.5 * (H0inv + H0inv.T)) > 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        H0inv = np.eye(p + 1) / max(1.0, n)
    v, nll, _, iters, converged = _bfgs(f, g, x0, H0inv, gtol, max_iter)
    gamma, theta = v[:p], float(v[p])

    H = tobit_hessian(gamma, theta, Xm, y)
    try:
        np.linalg.cholesky(H)
        info_inv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise RankDeficiencyError(_independent_columns(Xm[~cens], X.column_names) or list(X.column_names),
                                  "observed information matrix is singular") from None
    J = np.zeros((p + 1, p + 1))
    J[:p, :p] = np.eye(p) / theta
    J[:p, p] = -gamma / theta ** 2
    J[p, p] = -1.0 / theta ** 2
    cov = J @ info_inv @ J.T
    se = np.sqrt(np.diag(cov))
    if not np.isfinite(se).all():
        raise NumericalError("standard errors are not finite")
    ll = -nll
    return TobitFit(beta=gamma / theta, sigma=1.0 / theta, std_errors=se, covariance=cov, log_likelihood=ll,
                    n_obs=n, n_censored=int(cens.sum()), bic=-2.0 * ll + (p + 1) * math.log(n),
                    converged=converged, iterations=iters, column_names=X.column_names, name=name,
                    sample_key=sample_key(y))


def predict_censored_mean(fit: TobitFit, x, form: str = "textbook"):
    """Expected value of ``max(y, 0)`` at covariates ``x`` (one row or a matrix).

    ``form="textbook"`` gives ``Phi(mu/sigma) mu + sigma phi(mu/sigma)``.
    ``form="unscaled"`` evaluates both ``Phi`` and ``phi`` at ``mu`` itself,
    which only agrees with the textbook value when ``sigma == 1``.
    """
    x = np.asarray(x, dtype=float)
    p = len(fit.beta)
    if x.shape[-1] != p or x.ndim > 2:
        raise ShapeError(f"expected {p} covariates, got shape {x.shape}")
    mu = x @ fit.beta
    return censored_mean(mu, fit.sigma, form)


def censored_mean(mu, sigma, form: str = "textbook"):
    mu = np.asarray(mu, dtype=float)
    if form == "textbook":
        z = mu / sigma
    elif form == "unscaled":
        z = mu
    else:
        raise ValueError(f"unknown form {form!r}")
    out = special.ndtr(z) * mu + sigma * np.exp(-0.5 * z * z - HALF_LOG_2PI)
    return float(out) if out.ndim == 0 else out


def rank_by_bic(fits: Sequence[TobitFit]) -> list[TobitFit]:
    """Sort by BIC; ties go to fewer parameters, then to name."""
    fits = list(fits)
    if fits:
        key0 = (fits[0].n_obs, fits[0].sample_key)
        for f in fits[1:]:
            if (f.n_obs, f.sample_key) != key0:
                raise ComparisonError(f"fit {f.name!r} was estimated on a different sample")
    return sorted(fits, key=lambda f: (f.bic, f.n_params, f.name))
