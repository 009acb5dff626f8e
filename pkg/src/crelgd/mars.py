"""Multivariate adaptive regression splines.

A forward pass grows the basis with mirrored hinge pairs
``parent * max(0, x - t)`` and ``parent * max(0, t - x)``; a backward pass
removes terms one at a time and keeps the subset with the lowest generalized
cross-validation score

    GCV = (RSS / n) / (1 - C / n)^2,   C = trace(hat) + d * (number of knots).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateDataError, ShapeError

HINGE_UP = 1      # max(0, x - t)
HINGE_DOWN = -1   # max(0, t - x)
LINEAR = 0        # x


@dataclass(frozen=True, order=True)
class Factor:
    variable: int
    direction: int
    knot: float = 0.0

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        x = X[:, self.variable]
        if self.direction == HINGE_UP:
            return np.maximum(0.0, x - self.knot)
        if self.direction == HINGE_DOWN:
            return np.maximum(0.0, self.knot - x)
        return x

    def formula(self, names: Sequence[str]) -> str:
        name = names[self.variable]
        if self.direction == HINGE_UP:
            sign = "-" if self.knot >= 0 else "+"
            return f"max(0, {name} {sign} {abs(self.knot):.4f})"
        if self.direction == HINGE_DOWN:
            return f"max(0, {self.knot:.4f} - {name})"
        return name


@dataclass(frozen=True)
class BasisFunction:
    factors: tuple[Factor, ...] = ()

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def is_intercept(self) -> bool:
        return not self.factors

    def variables(self) -> tuple[int, ...]:
        return tuple(f.variable for f in self.factors)

    def knots(self) -> set[tuple[int, float]]:
        return {(f.variable, f.knot) for f in self.factors if f.direction != LINEAR}

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        out = np.ones(X.shape[0])
        for f in self.factors:
            out = out * f.evaluate(X)
        return out

    def formula(self, names: Sequence[str]) -> str:
        return "(Intercept)" if self.is_intercept else " * ".join(f.formula(names) for f in self.factors)


@dataclass(frozen=True)
class MarsOptions:
    max_terms: int | None = None      # includes the intercept; default min(21, n - 1)
    max_degree: int = 1
    penalty: float = 3.0
    minspan: int | None = None        # default ceil(n / 50)
    allow_self_product: bool = False
    linear_terms: bool = False
    tol: float = 1e-4                 # stop when a step explains less than tol of the total sum of squares


@dataclass(frozen=True)
class MarsModel:
    basis: tuple[BasisFunction, ...]
    coefficients: np.ndarray
    gcv: float
    rss: float
    n_obs: int
    max_degree: int
    penalty: float
    variable_names: tuple[str, ...]
    rss_path: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if len(self.coefficients) != len(self.basis):
            raise ShapeError("one coefficient per basis function is required")

    @property
    def n_features(self) -> int:
        return len(self.variable_names)

    def basis_matrix(self, X) -> np.ndarray:
        X = _check_X(X, self.n_features)
        return np.column_stack([b.evaluate(X) for b in self.basis])

    def predict(self, X) -> np.ndarray:
        return self.basis_matrix(X) @ self.coefficients

    def knots(self) -> list[tuple[str, float]]:
        ks = set().union(*(b.knots() for b in self.basis)) if self.basis else set()
        return sorted((self.variable_names[v], t) for v, t in ks)

    def uses_variable(self, index: int) -> bool:
        return any(index in b.variables() for b in self.basis)

    def to_dict(self) -> dict:
        return {"terms": [{"formula": b.formula(self.variable_names), "coefficient": float(c),
                           "factors": [[f.variable, f.direction, f.knot] for f in b.factors]}
                          for b, c in zip(self.basis, self.coefficients)],
                "gcv": float(self.gcv), "rss": float(self.rss), "n_obs": self.n_obs,
                "max_degree": self.max_degree, "penalty": self.penalty,
                "variables": list(self.variable_names)}

    @classmethod
    def from_dict(cls, d: dict) -> "MarsModel":
        basis = tuple(BasisFunction(tuple(Factor(int(v), int(s), float(t)) for v, s, t in term["factors"]))
                      for term in d["terms"])
        coef = np.array([term["coefficient"] for term in d["terms"]], dtype=float)
        return cls(basis, coef, float(d["gcv"]), float(d["rss"]), int(d["n_obs"]), int(d["max_degree"]),
                   float(d["penalty"]), tuple(d["variables"]))


def _check_X(X, p=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if p is not None and X.shape[0] == p and p > 1 else X[:, None]
    if X.ndim != 2:
        raise ShapeError("X must be two-dimensional")
    if p is not None and X.shape[1] != p:
        raise ShapeError(f"expected {p} columns, got {X.shape[1]}")
    if not np.isfinite(X).all():
        raise DataError("X has non-finite entries")
    return X


def gcv(rss: float, n: int, n_effective: float, n_knots: int, penalty: float) -> float:
    c = n_effective + penalty * n_knots
    if c >= n:
        return math.inf
    return (rss / n) / (1.0 - c / n) ** 2


def _n_knots(basis: Sequence[BasisFunction]) -> int:
    return len(set().union(*(b.knots() for b in basis))) if basis else 0


def _lstsq(B, y):
    coef, _, rank, _ = np.linalg.lstsq(B, y, rcond=None)
    r = y - B @ coef
    return coef, float(r @ r), int(rank)


def candidate_knots(x: np.ndarray, active: np.ndarray, minspan: int) -> np.ndarray:
    """Knots tried for one variable under one parent.

    Distinct values of ``x`` among rows where the parent is nonzero, thinned
    to every ``minspan``-th value from the smallest, with the largest dropped
    (its upward hinge would vanish).
    """
    u = np.unique(x[active])
    if len(u) < 2:
        return u[:0]
    return u[:-1][::max(1, minspan)]


def _pair_scores(Q, r, parent, x, knots, tol):
    """RSS reduction for the hinge pair and each single hinge at every knot."""
    up = parent[:, None] * np.maximum(0.0, x[:, None] - knots[None, :])
    dn = parent[:, None] * np.maximum(0.0, knots[None, :] - x[:, None])
    cols = []
    for C in (up, dn):
        norm0 = np.einsum("ij,ij->j", C, C)
        U = C - Q @ (Q.T @ C)
        uu = np.einsum("ij,ij->j", U, U)
        ok = uu > tol * np.maximum(norm0, 1e-300)
        cols.append((U, uu, ok))
    (U, uu, oku), (V, vv, okv) = cols
    a, b = U.T @ r, V.T @ r
    uv = np.einsum("ij,ij->j", U, V)
    single_u = np.where(oku, a * a / np.where(oku, uu, 1.0), -np.inf)
    single_v = np.where(okv, b * b / np.where(okv, vv, 1.0), -np.inf)
    det = uu * vv - uv * uv
    both = oku & okv & (det > tol * uu * vv)
    safe = np.where(both, det, 1.0)
    pair = np.where(both, (vv * a * a - 2 * uv * a * b + uu * b * b) / safe, -np.inf)
    pair = np.maximum(pair, np.maximum(single_u, single_v))
    return pair, single_u, single_v, oku, okv


def forward_pass(X, y, max_terms: int | None = None, max_degree: int | None = None,
                 options: MarsOptions | None = None, variable_names: Sequence[str] | None = None) -> MarsModel:
    """Greedy basis growth; returns the unpruned model.

    ``max_terms`` and ``max_degree`` override the matching fields of ``options``.
    """
    opts = options or MarsOptions()
    max_terms = max_terms if max_terms is not None else opts.max_terms
    max_degree = max_degree if max_degree is not None else opts.max_degree
    X = _check_X(X)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise ShapeError(f"response has shape {y.shape}, expected ({n},)")
    names = tuple(variable_names) if variable_names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise ShapeError("one name per column is required")
    if max_terms is None:
        max_terms = max(1, min(21, n - 1))
    if max_terms < 1:
        raise DataError("max_terms must be >= 1")
    if n <= max_terms:
        raise DataError(f"need more rows than max_terms, got n={n}, max_terms={max_terms}")
    tss = float(((y - y.mean()) ** 2).sum())
    if not tss > 1e-300 * max(1.0, float(y @ y)) or np.ptp(y) == 0:
        raise DegenerateDataError("response is constant")
    minspan = opts.minspan or math.ceil(n / 50)

    basis = [BasisFunction()]
    cols = [np.ones(n)]
    Q = np.ones((n, 1)) / math.sqrt(n)
    r = y - Q @ (Q.T @ y)
    rss = float(r @ r)
    path = [rss]
    tiny = 1e-12

    while len(basis) < max_terms and rss > 1e-12 * tss:
        slots = max_terms - len(basis)
        best = None   # (-reduction, variable, knot, parent index, kind)
        for m, parent_bf in enumerate(basis):
            if parent_bf.degree >= max_degree:
                continue
            parent = cols[m]
            active = parent != 0
            for v in range(p):
                if v in parent_bf.variables() and not opts.allow_self_product:
                    continue
                x = X[:, v]
                if opts.linear_terms:
                    c = parent * x
                    u = c - Q @ (Q.T @ c)
                    uu = float(u @ u)
                    if uu > tiny * max(float(c @ c), 1e-300):
                        red = float(u @ r) ** 2 / uu
                        cand = (-red, v, -math.inf, m, "linear")
                        if _better(cand, best, rss):
                            best = cand
                knots = candidate_knots(x, active, minspan)
                if len(knots) == 0:
                    continue
                pair, su, sv, _, _ = _pair_scores(Q, r, parent, x, knots, tiny)
                score = pair if slots >= 2 else np.maximum(su, sv)
                j = int(np.argmax(score))
                top = score[j]
                if not np.isfinite(top):
                    continue
                # smallest knot among numerical ties
                ties = np.nonzero(score >= top - 1e-12 * max(abs(top), rss))[0]
                j = int(ties[0])
                kind = "pair" if slots >= 2 else ("up" if su[j] >= sv[j] else "down")
                cand = (-float(score[j]), v, float(knots[j]), m, kind)
                if _better(cand, best, rss):
                    best = cand
        if best is None or -best[0] < opts.tol * tss:
            break
        _, v, t, m, kind = best
        parent_bf, parent = basis[m], cols[m]
        if kind == "linear":
            new = [BasisFunction(parent_bf.factors + (Factor(v, LINEAR),))]
        else:
            dirs = {"pair": (HINGE_UP, HINGE_DOWN), "up": (HINGE_UP,), "down": (HINGE_DOWN,)}[kind]
            new = [BasisFunction(parent_bf.factors + (Factor(v, d, t),)) for d in dirs]
        added = 0
        for bf in new:
            c = bf.evaluate(X)
            u = c - Q @ (Q.T @ c)
            nu = float(np.linalg.norm(u))
            if nu <= math.sqrt(tiny) * max(float(np.linalg.norm(c)), 1e-300):
                continue   # collinear with the current basis
            # re-orthogonalize once for stability
            u = u - Q @ (Q.T @ u)
            Q = np.column_stack([Q, u / np.linalg.norm(u)])
            basis.append(bf)
            cols.append(c)
            added += 1
        if not added:
            break
        r = y - Q @ (Q.T @ y)
        rss = float(r @ r)
        path.append(rss)

    B = np.column_stack(cols)
    coef, rss_fit, rank = _lstsq(B, y)
    score = gcv(rss_fit, n, rank, _n_knots(basis), opts.penalty)
    return MarsModel(tuple(basis), coef, score, rss_fit, n, max_degree, opts.penalty, names, tuple(path))


def _better(cand, best, rss) -> bool:
    """Order candidates by reduction, then variable index, then knot."""
    if best is None:
        return True
    tol = 1e-12 * max(abs(best[0]), rss)
    if cand[0] < best[0] - tol:
        return True
    if cand[0] > best[0] + tol:
        return False
    return (cand[1], cand[2]) < (best[1], best[2])


def backward_prune(model: MarsModel, X, y, penalty: float | None = None) -> MarsModel:
    """Drop terms one at a time (never the intercept) and keep the subset with lowest GCV."""
    X = _check_X(X, model.n_features)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    d = model.penalty if penalty is None else penalty
    B = model.basis_matrix(X)
    current = list(range(len(model.basis)))

    def score(idx):
        coef, rss, rank = _lstsq(B[:, idx], y)
        return gcv(rss, n, rank, _n_knots([model.basis[i] for i in idx]), d), coef, rss

    best_gcv, best_coef, best_rss = score(current)
    best_idx = list(current)
    while len(current) > 1:
        trial = None
        for i in current:
            if model.basis[i].is_intercept:
                continue
            idx = [j for j in current if j != i]
            g, coef, rss = score(idx)
            if trial is None or g < trial[0]:
                trial = (g, idx, coef, rss)
        if trial is None:
            break
        g, current, coef, rss = trial
        if g < best_gcv:
            best_gcv, best_idx, best_coef, best_rss = g, list(current), coef, rss
    return MarsModel(tuple(model.basis[i] for i in best_idx), best_coef, best_gcv, best_rss, n,
                     model.max_degree, d, model.variable_names, model.rss_path)


def mars_fit(X, y, options: MarsOptions | None = None, variable_names: Sequence[str] | None = None) -> MarsModel:
    opts = options or MarsOptions()
    model = forward_pass(X, y, options=opts, variable_names=variable_names)
    return backward_prune(model, X, y, opts.penalty)


def mars_predict(model: MarsModel, x) -> float | np.ndarray:
    """Prediction for one row (returns a float) or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != model.n_features:
            raise ShapeError(f"expected {model.n_features} values, got {x.shape[0]}")
        return float(model.predict(x[None, :])[0])
    return model.predict(_check_X(x, model.n_features))
