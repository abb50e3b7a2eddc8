"""Linear epsilon-SVR, Spearman's rho and the complexity grid search.

The SVR minimises ``0.5 |w|^2 + C sum_i max(0, |w.x_i + b - y_i| - eps)``
on z-scored features with an unregularised bias. It is solved in the dual
with sequential minimal optimisation (second-order working-set selection),
which keeps the bias exact instead of folding it into ``w``. When the bias
is not unique the centre of its optimal interval is used.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

DEFAULT_C_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_EPSILON = 0.1


class UndefinedCorrelation(ValueError):
    """Spearman's rho of a constant vector."""


# ---------------------------------------------------------------------------
# Spearman


def average_ranks(a) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank span."""
    return rankdata(np.asarray(a, dtype=np.float64), method="average")


def spearman_rho(a, b) -> float:
    """Pearson correlation of average ranks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"need two vectors of equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise ValueError("need at least two observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite values")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise UndefinedCorrelation("Spearman's rho is undefined for a constant vector")
    ra = average_ranks(a)
    rb = average_ranks(b)
    ra -= ra.mean()
    rb -= rb.mean()
    rho = float(ra @ rb / math.sqrt(float(ra @ ra) * float(rb @ rb)))
    return min(1.0, max(-1.0, rho))


# ---------------------------------------------------------------------------
# SVR


@dataclass
class SvrModel:
    w: np.ndarray
    b: float
    C: float
    epsilon: float
    mean: np.ndarray
    std: np.ndarray
    n_iter: int = 0

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.w.shape[0]:
            raise ValueError(f"expected (n, {self.w.shape[0]}) features, got {X.shape}")
        return (X - self.mean) / self.std

    def predict(self, X) -> np.ndarray:
        return self.standardize(X) @ self.w + self.b


def fit_standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[~(std > 0)] = 1.0
    return mean, std


def primal_objective(w, b, Xs, y, C, epsilon) -> float:
    resid = np.abs(Xs @ w + b - y)
    return float(0.5 * w @ w + C * np.maximum(0.0, resid - epsilon).sum())


def _smo(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float, max_iter: int):
    """Dual SMO over 2n variables ``[a_up; a_low]`` with signs ``z = [+1; -1]``.

    Minimises ``0.5 a'Qa + p'a`` s.t. ``z'a = 0``, ``0 <= a <= C`` with
    ``Q_st = z_s z_t K_st`` and ``p = [eps - y; eps + y]``.
    """
    n = y.size
    z = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    idx = np.concatenate([np.arange(n), np.arange(n)])
    diag = np.diag(K)[idx]
    a = np.zeros(2 * n)
    G = p.copy()
    tau = 1e-12
    it = 0
    for it in range(1, max_iter + 1):
        up = np.where(z > 0, a < C, a > 0)
        low = np.where(z > 0, a > 0, a < C)
        minus_zG = -z * G
        cand = np.where(up, minus_zG, -np.inf)
        i = int(np.argmax(cand))
        gmax = cand[i]
        low_vals = np.where(low, minus_zG, np.inf)
        if gmax - low_vals.min() < tol:
            break
        Ki = K[idx[i], idx]
        grad_diff = gmax + z * G
        quad = diag[i] + diag - 2.0 * Ki
        quad = np.where(quad > 0, quad, tau)
        obj = np.where(low & (grad_diff > 0), -(grad_diff ** 2) / quad, np.inf)
        j = int(np.argmin(obj))
        if not np.isfinite(obj[j]):
            break
        Qi = z * z[i] * Ki
        Qj = z * z[j] * K[idx[j], idx]
        ai, aj = a[i], a[j]
        if z[i] != z[j]:
            q = diag[i] + diag[j] + 2 * Qi[j]
            delta = (-G[i] - G[j]) / (q if q > 0 else tau)
            diff = ai - aj
            ni, nj = ai + delta, aj + delta
            if diff > 0:
                if nj < 0:
                    nj, ni = 0.0, diff
            elif ni < 0:
                ni, nj = 0.0, -diff
            if diff > 0:
                if ni > C:
                    ni, nj = C, C - diff
            elif nj > C:
                nj, ni = C, C + diff
        else:
            q = diag[i] + diag[j] - 2 * Qi[j]
            delta = (G[i] - G[j]) / (q if q > 0 else tau)
            total = ai + aj
            ni, nj = ai - delta, aj + delta
            if total > C:
                if ni > C:
                    ni, nj = C, total - C
            elif nj < 0:
                nj, ni = 0.0, total
            if total > C:
                if nj > C:
                    nj, ni = C, total - C
            elif ni < 0:
                ni, nj = 0.0, total
        G += Qi * (ni - ai) + Qj * (nj - aj)
        a[i], a[j] = ni, nj

    return a[:n] - a[n:], it


def optimal_bias_interval(residual: np.ndarray, epsilon: float) -> tuple[float, float]:
    """Minimisers of ``g(b) = sum_i max(0, |r_i + b| - eps)`` for ``r = Xw - y``.

    ``g`` is convex and piecewise linear with kinks at ``-r_i -+ eps``; its
    minimiser set is the closed interval between the first kink where the
    right slope turns non-negative and the last kink where the left slope
    is still non-positive.
    """
    lo_kinks = np.sort(-residual - epsilon)
    hi_kinks = np.sort(-residual + epsilon)
    n = residual.size
    cand = np.concatenate([lo_kinks, hi_kinks])
    # right slope: terms rising (b >= hi kink) minus terms falling (b < lo kink)
    right = np.searchsorted(hi_kinks, cand, "right") - (n - np.searchsorted(lo_kinks, cand, "right"))
    # left slope: terms rising (b > hi kink) minus terms falling (b <= lo kink)
    left = np.searchsorted(hi_kinks, cand, "left") - (n - np.searchsorted(lo_kinks, cand, "left"))
    return float(cand[right >= 0].min()), float(cand[left <= 0].max())


def svr_fit(X, y, C: float, epsilon: float = DEFAULT_EPSILON, *, tol: float = 1e-10,
            max_iter: int = 1_000_000) -> SvrModel:
    """Fit a linear epsilon-SVR on standardised features."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"X must be (n, d) and y (n,), got {X.shape} and {y.shape}")
    if X.shape[0] < 2:
        raise ValueError("need at least two training instances")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    if not C > 0 or epsilon < 0:
        raise ValueError("C must be positive and epsilon non-negative")
    mean, std = fit_standardizer(X)
    Xs = (X - mean) / std
    beta, it = _smo(Xs @ Xs.T, y, float(C), float(epsilon), tol, max_iter)
    w = Xs.T @ beta
    # the bias is optimal anywhere in an interval; take its centre so the
    # fitted model is unique
    lo, hi = optimal_bias_interval(Xs @ w - y, float(epsilon))
    return SvrModel(w, 0.5 * (lo + hi), float(C), float(epsilon), mean, std, it)


def svr_predict(model: SvrModel, X) -> np.ndarray:
    return model.predict(X)


# ---------------------------------------------------------------------------
# complexity search


def _rho_or_nan(y, pred) -> float:
    try:
        return spearman_rho(y, pred)
    except UndefinedCorrelation:
        return float("nan")


def grid_search_C(X_train, X_devel, y_train, y_devel, grid: Sequence[float] = DEFAULT_C_GRID,
                  epsilon: float = DEFAULT_EPSILON) -> tuple[float, float, dict[float, float]]:
    """Best complexity by devel Spearman's rho (ties go to the smaller C).

    Returns ``(best_C, best_rho, {C: rho_devel})``. A C whose predictions are
    constant gets rho NaN and is never chosen unless every C does.
    """
    if len(grid) == 0:
        raise ValueError("empty C grid")
    scores = {}
    for C in grid:
        model = svr_fit(X_train, y_train, C, epsilon)
        scores[float(C)] = _rho_or_nan(y_devel, model.predict(X_devel))
    best = _argmax_c(scores)
    return best, scores[best], scores


def _argmax_c(scores: Mapping[float, float]) -> float:
    valid = {c: r for c, r in scores.items() if not math.isnan(r)}
    if not valid:
        return min(scores)
    top = max(valid.values())
    return min(c for c, r in valid.items() if r == top)


@dataclass
class EvalReport:
    rows: list[tuple[str, float, float, float]] = field(default_factory=list)
    chosen: dict[str, float] = field(default_factory=dict)

    def best(self, feature_set: str) -> tuple[float, float, float]:
        C = self.chosen[feature_set]
        for name, c, rd, rt in self.rows:
            if name == feature_set and c == C:
                return c, rd, rt
        raise KeyError(feature_set)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature_set", "C", "rho_devel", "rho_test"])
            for name, C, rd, rt in self.rows:
                writer.writerow([name, repr(C), repr(rd), repr(rt)])
        return path

    @classmethod
    def from_csv(cls, path) -> "EvalReport":
        report = cls()
        with Path(path).open(newline="") as fh:
            for rec in csv.DictReader(fh):
                report.rows.append((rec["feature_set"], float(rec["C"]),
                                    float(rec["rho_devel"]), float(rec["rho_test"])))
        for name in dict.fromkeys(r[0] for r in report.rows):
            report.chosen[name] = _argmax_c({c: rd for n, c, rd, _ in report.rows if n == name})
        return report


def evaluate_feature_set(name: str, X_train, y_train, X_devel, y_devel, X_test, y_test,
                         grid: Sequence[float] = DEFAULT_C_GRID, epsilon: float = DEFAULT_EPSILON,
                         report: EvalReport | None = None) -> EvalReport:
    """Grid search on devel, with test rho recorded for every C."""
    report = report or EvalReport()
    devel = {}
    for C in grid:
        model = svr_fit(X_train, y_train, C, epsilon)
        rd = _rho_or_nan(y_devel, model.predict(X_devel))
        rt = _rho_or_nan(y_test, model.predict(X_test))
        devel[float(C)] = rd
        report.rows.append((name, float(C), rd, rt))
    report.chosen[name] = _argmax_c(devel)
    return report
