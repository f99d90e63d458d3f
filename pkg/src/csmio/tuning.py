"""Cross-validated choice of sparsity ``k`` and ridge weight ``lambda2``."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .solver import OPTIMAL, SolverError, SubsetProblem, solve_subset
from .validation import as_matrix, as_vector, check_same_rows


class DegenerateTargetError(ValueError):
    pass


class TuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverBudget:
    box: float = 1000.0
    time_limit: float = 600.0
    gap_target: float = 0.0
    node_limit: int | None = 2000
    cell_time_limit: float | None = None
    enumeration_limit: int = 20_000

    def per_cell(self, n_cells: int) -> float:
        if self.cell_time_limit is not None:
            return self.cell_time_limit
        return max(1.0, self.time_limit / max(n_cells, 1))


@dataclass(frozen=True)
class TuningConfig:
    k_max: int = 5
    m: int = 50
    T: int = 5
    r_override: float | None = None
    fold_scheme: str = "contiguous"
    # E values within tie_tol * ||y||^2 of the minimum count as ties
    tie_tol: float = 1e-10
    # "ridge": score held-out folds with the ridge coefficients; "refit":
    # with the least-squares refit on the selected support
    cv_coef: str = "ridge"
    scale_lambda: bool = True

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.fold_scheme not in ("contiguous", "strided"):
            raise ValueError(f"unknown fold scheme {self.fold_scheme!r}")
        if self.cv_coef not in ("refit", "ridge"):
            raise ValueError(f"unknown cv_coef {self.cv_coef!r}")


@dataclass
class TuningResult:
    errors: np.ndarray
    lambdas: np.ndarray
    k_best: int
    lambda_best: float
    statuses: np.ndarray = field(repr=False)
    fold_errors: np.ndarray = field(repr=False)

    @property
    def ks(self) -> np.ndarray:
        return np.arange(1, self.errors.shape[0] + 1)

    @property
    def cv_error(self) -> float:
        return float(self.errors[self.k_best - 1, int(np.argmin(np.abs(self.lambdas - self.lambda_best)))])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("k," + ",".join(repr(float(v)) for v in self.lambdas) + "\n")
        for i, row in enumerate(self.errors):
            buf.write(f"{i + 1}," + ",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def ratio_rule(N: int, P: int) -> float:
    return 1e-4 if N > P else 1e-2


def lambda_grid(design, target, m: int, r: float | None = None) -> np.ndarray:
    """Log-uniform ridge weights from ``r * lmax`` to ``lmax = ||X^T y||_inf``."""
    X = as_matrix(design, "design")
    y = as_vector(target, "target")
    check_same_rows(X, y)
    return _grid(X.T @ y, X.shape[0], X.shape[1], m, r)


def _grid(xty, N, P, m, r):
    if m < 2:
        raise ValueError("m must be >= 2")
    lmax = float(np.max(np.abs(xty)))
    if lmax == 0:
        raise DegenerateTargetError("X^T y is identically zero")
    if r is None:
        r = ratio_rule(N, P)
    return np.exp(np.linspace(np.log(r * lmax), np.log(lmax), m))


def fold_indices(N: int, T: int, scheme: str = "contiguous") -> list[np.ndarray]:
    if N < T:
        raise ValueError(f"need at least T={T} rows, got {N}")
    if scheme == "contiguous":
        return np.array_split(np.arange(N), T)
    if scheme == "strided":
        return [np.arange(t, N, T) for t in range(T)]
    raise ValueError(f"unknown fold scheme {scheme!r}")


def select_best(errors: np.ndarray, lambdas: np.ndarray, scale: float, tie_tol: float) -> tuple[int, float]:
    """Argmin over the (k, lambda2) grid; near-ties go to smaller k, then smaller lambda2."""
    finite = np.isfinite(errors)
    if not finite.any():
        raise TuningError("every (k, lambda2) cell failed")
    best = np.min(errors[finite])
    ok = finite & (errors <= best + tie_tol * scale)
    ki, li = np.argwhere(ok)[0]  # row-major: smallest k first, then smallest lambda
    return int(ki) + 1, float(lambdas[li])


def cross_validate(design, target, cfg: TuningConfig, budget: SolverBudget | None = None,
                   lambdas=None, rankings=()) -> TuningResult:
    """T-fold CV of the subset solver over the ``(k, lambda2)`` grid.

    For each cell and fold the subset problem is solved on the other folds and
    scored by the squared error on the held-out fold; the cell error is the
    sum over folds. With ``cfg.cv_coef="refit"`` the held-out error uses the
    unpenalized least-squares fit on the selected support instead. ``rankings`` are column orderings (e.g. by L1 magnitude)
    whose first ``k`` entries seed the incumbent.
    """
    X = as_matrix(design, "design")
    y = as_vector(target, "target")
    check_same_rows(X, y)
    budget = budget or SolverBudget()
    N, P = X.shape
    k_max = min(cfg.k_max, P)
    if lambdas is None:
        lambdas = _grid(X.T @ y, N, P, cfg.m, cfg.r_override)
    lambdas = np.asarray(lambdas, dtype=float)
    folds = fold_indices(N, cfg.T, cfg.fold_scheme)

    G_all, c_all, yy_all = X.T @ X, X.T @ y, float(y @ y)
    parts = []
    for idx in folds:
        Xt, yt = X[idx], y[idx]
        parts.append((idx, Xt.T @ Xt, Xt.T @ yt, float(yt @ yt)))

    # the training objective sums over fewer rows than the full fit, so the
    # penalty is scaled by the training fraction to keep lambda2 comparable
    scale = [1.0 - len(idx) / N for idx in folds] if cfg.scale_lambda else [1.0] * len(folds)
    n_cells = k_max * len(lambdas) * cfg.T
    cell_time = budget.per_cell(n_cells)
    fold_err = np.full((k_max, len(lambdas), cfg.T), np.nan)
    status = np.empty((k_max, len(lambdas), cfg.T), dtype=object)
    for ki in range(k_max):
        k = ki + 1
        prev = [None] * cfg.T
        for li, lam in enumerate(lambdas):
            for t, (idx, Gt, ct, yyt) in enumerate(parts):
                warm = [tuple(r[:k]) for r in rankings if len(r) >= k]
                if prev[t] is not None:
                    warm.insert(0, prev[t])
                prob = SubsetProblem(
                    G_all - Gt, c_all - ct, yy_all - yyt, k, lambda2=float(lam) * scale[t], box=budget.box,
                    time_limit=cell_time, gap_target=budget.gap_target, node_limit=budget.node_limit,
                    seeds=tuple(warm),
                    enumeration_limit=budget.enumeration_limit,
                )
                try:
                    sol = solve_subset(prob)
                except SolverError:
                    status[ki, li, t] = "Failed"
                    continue
                prev[t] = sol.support
                coef = sol.coef if cfg.cv_coef == "ridge" else _refit(prob, sol.support)
                resid = y[idx] - X[idx] @ coef
                fold_err[ki, li, t] = float(resid @ resid)
                status[ki, li, t] = sol.status
    with np.errstate(invalid="ignore"):
        E = fold_err.sum(axis=2)
    E[np.isnan(fold_err).any(axis=2)] = np.inf
    k_best, lam_best = select_best(E, lambdas, yy_all, cfg.tie_tol)
    return TuningResult(E, lambdas, k_best, lam_best, status, fold_err)


def _refit(prob: SubsetProblem, support) -> np.ndarray:
    S = list(support)
    coef = np.zeros(prob.gram.shape[0])
    coef[S] = np.linalg.lstsq(prob.gram[np.ix_(S, S)], prob.xty[S], rcond=None)[0]
    return coef


def all_optimal(result: TuningResult) -> bool:
    return bool(np.all(result.statuses == OPTIMAL))
