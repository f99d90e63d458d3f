"""L1 pre-selection of candidate terms before exact subset selection."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path_gram
from sklearn.utils.validation import check_is_fitted

from .validation import as_matrix, as_vector, check_same_rows


class LassoConvergenceError(RuntimeError):
    def __init__(self, n_iter, change):
        self.n_iter = n_iter
        self.change = change
        super().__init__(f"lasso did not converge in {n_iter} sweeps (last max change {change:.3e})")


class EmptyScreenError(ValueError):
    pass


@dataclass(frozen=True)
class ScreeningConfig:
    lambda1: float = 1e-6
    eps: float = 0.0
    s_max: int = 100
    p_max: int = 100
    tol: float = 1e-9
    max_sweeps: int = 100_000

    def __post_init__(self):
        if not self.lambda1 > 0:
            raise ValueError("lambda1 must be positive")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.s_max < 1:
            raise ValueError("s_max must be >= 1")


@dataclass
class ScreenResult:
    indices: np.ndarray
    coef: np.ndarray
    bypassed: bool = False

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def to_json(self) -> dict:
        return {
            "indices": [int(i) for i in self.indices],
            "magnitudes": [float(abs(self.coef[i])) for i in self.indices],
            "bypassed": self.bypassed,
        }


def lasso_objective(gram, xty, yty, xi, lambda1):
    return float(yty - 2.0 * xty @ xi + xi @ gram @ xi + lambda1 * np.abs(xi).sum())


def lasso_gram(gram, xty, lambda1, tol=1e-9, max_sweeps=100_000, trace=None):
    """Minimize ``||y - X xi||^2 + lambda1 ||xi||_1`` given ``X^T X`` and ``X^T y``.

    The LARS homotopy supplies the sign pattern, which is then solved exactly
    and checked against the optimality conditions. If that check fails (or a
    ``trace`` of iterates is requested) coordinate descent is used instead.
    """
    gram = np.asarray(gram, dtype=float)
    xty = np.asarray(xty, dtype=float)
    if trace is None:
        exact = _lars_solution(gram, xty, 0.5 * lambda1)
        if exact is not None:
            return exact
    return _coordinate_descent(gram, xty, lambda1, tol, max_sweeps, trace)


def _lars_solution(gram, xty, thr):
    if not np.any(xty):
        return np.zeros_like(xty)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)  # the result is verified below
            _, _, coefs = lars_path_gram(xty, gram, n_samples=1, alpha_min=thr, method="lasso",
                                         max_iter=100 * xty.size)
    except (ValueError, np.linalg.LinAlgError):
        return None
    return _feature_sign(gram, xty, coefs[:, -1], thr)


def _feature_sign(gram, xty, x, thr, slack=1e-9, max_steps=None):
    """Feature-sign search started from ``x``; returns None if it stalls."""
    P = xty.size
    x = x.copy()
    tol = thr * slack + slack * np.abs(xty).max()

    def f(v):
        return float(v @ gram @ v - 2.0 * xty @ v + 2.0 * thr * np.abs(v).sum())

    for _ in range(max_steps or 20 * P + 20):
        g = xty - gram @ x
        inactive = np.flatnonzero(x == 0)
        viol = np.abs(g[inactive]) - thr
        A = np.flatnonzero(x)
        theta = np.sign(x)
        if A.size:
            active_ok = np.all(np.abs(g[A] - thr * theta[A]) <= tol + 1e-9 * np.abs(gram[np.ix_(A, A)] @ x[A]).max())
        else:
            active_ok = True
        if active_ok:
            if inactive.size == 0 or viol.max() <= tol:
                return x
            i = inactive[int(np.argmax(viol))]
            theta[i] = np.sign(g[i])
            A = np.sort(np.append(A, i))
        try:
            z = np.linalg.solve(gram[np.ix_(A, A)], xty[A] - thr * theta[A])
        except np.linalg.LinAlgError:
            return None
        new = np.zeros(P)
        new[A] = z
        # candidate points: the full step and every sign change along the segment
        old = x[A]
        best, best_val = new, f(new)
        cross = np.flatnonzero((old != 0) & (np.sign(z) != np.sign(old)))
        for j in cross:
            t = old[j] / (old[j] - z[j])
            cand = np.zeros(P)
            cand[A] = old + t * (z - old)
            cand[A[j]] = 0.0
            val = f(cand)
            if val < best_val:
                best, best_val = cand, val
        # drop coordinates whose sign disagrees with the pattern
        bad = np.flatnonzero(best[A] * theta[A] < 0)
        best[A[bad]] = 0.0
        if np.array_equal(best, x):
            return None
        x = best
    return None


def _coordinate_descent(gram, xty, lambda1, tol, max_sweeps, trace):
    """Cyclic coordinate descent.

    Alternates full sweeps with sweeps restricted to the active set. Stops
    when a full sweep moves no coordinate by more than ``tol`` (scaled by the
    largest coefficient), or when solving the optimality conditions exactly on
    the current sign pattern gives a point that satisfies them everywhere.
    """
    P = xty.shape[0]
    xi = np.zeros(P)
    q = np.zeros(P)  # gram @ xi
    diag = np.diag(gram).copy()
    thr = 0.5 * lambda1
    usable = diag > 0

    def sweep(idx):
        biggest = 0.0
        for j in idx:
            rho = xty[j] - q[j] + diag[j] * xi[j]
            new = np.sign(rho) * max(abs(rho) - thr, 0.0) / diag[j]
            d = new - xi[j]
            if d != 0.0:
                q[:] += d * gram[:, j]
                xi[j] = new
                biggest = max(biggest, abs(d))
        return biggest

    all_idx = np.flatnonzero(usable)
    sweeps = 0
    change = np.inf
    while sweeps < max_sweeps:
        change = sweep(all_idx)
        sweeps += 1
        if trace is not None:
            trace.append(xi.copy())
        if change <= tol * max(1.0, np.max(np.abs(xi))):
            return xi
        active = np.flatnonzero(xi != 0)
        while sweeps < max_sweeps:
            c = sweep(active)
            sweeps += 1
            if trace is not None:
                trace.append(xi.copy())
            if c <= tol * max(1.0, np.max(np.abs(xi))):
                break
    raise LassoConvergenceError(sweeps, change)


def lasso_solve(design, target, lambda1, tol=1e-9, max_sweeps=100_000):
    X = as_matrix(design, "design")
    y = as_vector(target, "target")
    check_same_rows(X, y)
    if not lambda1 > 0:
        raise ValueError("lambda1 must be positive")
    return lasso_gram(X.T @ X, X.T @ y, lambda1, tol, max_sweeps)


def screen_gram(gram, xty, n_rows, cfg: ScreeningConfig, candidates=None) -> ScreenResult:
    P = xty.shape[0]
    cand = np.arange(P) if candidates is None else np.asarray(candidates, dtype=int)
    if cand.size <= cfg.p_max:
        return ScreenResult(indices=cand.copy(), coef=np.zeros(P), bypassed=True)
    sub = np.ix_(cand, cand)
    xi_c = lasso_gram(gram[sub], xty[cand], cfg.lambda1, cfg.tol, cfg.max_sweeps)
    xi = np.zeros(P)
    xi[cand] = xi_c
    mag = np.abs(xi_c)
    keep = np.flatnonzero((mag > 0) & (mag >= cfg.eps))
    if keep.size == 0:
        raise EmptyScreenError(f"no coefficient reached eps={cfg.eps}; use a smaller eps or lambda1")
    if keep.size > cfg.s_max:
        order = np.lexsort((keep, -mag[keep]))
        keep = keep[order[: cfg.s_max]]
    return ScreenResult(indices=np.sort(cand[keep]), coef=xi)


def screen(design, target, cfg: ScreeningConfig, candidates=None) -> ScreenResult:
    """Reduce the columns of ``design`` to the ones the L1 fit keeps.

    Bypassed (all candidates kept) when there are at most ``cfg.p_max`` of
    them. Otherwise the nonzero coefficients with magnitude at least
    ``cfg.eps`` are kept, capped at the ``cfg.s_max`` largest magnitudes.
    """
    X = as_matrix(design, "design")
    y = as_vector(target, "target")
    check_same_rows(X, y)
    return screen_gram(X.T @ X, X.T @ y, X.shape[0], cfg, candidates)


class L1Screen(TransformerMixin, BaseEstimator):
    """Column selector keeping the terms surviving the L1 screen."""

    def __init__(self, lambda1=1e-6, eps=0.0, s_max=100, p_max=100):
        self.lambda1 = lambda1
        self.eps = eps
        self.s_max = s_max
        self.p_max = p_max

    def fit(self, X, y):
        cfg = ScreeningConfig(self.lambda1, self.eps, self.s_max, self.p_max)
        self.result_ = screen(X, y, cfg)
        self.support_ = self.result_.indices
        self.n_features_in_ = as_matrix(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "support_")
        return as_matrix(X)[:, self.support_]
