"""End-to-end equation discovery: screen, tune, select, refit."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr, solve_triangular
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dictionary import TermDictionary, build_dictionary, evaluate, standardize
from .screening import ScreeningConfig, screen_gram
from .solver import SubsetProblem, solve_subset
from .systems import TrajectoryDataset
from .tuning import SolverBudget, TuningConfig, cross_validate
from .validation import as_matrix, check_same_rows

log = logging.getLogger(__name__)


class RankDeficiencyError(ValueError):
    def __init__(self, columns):
        self.columns = tuple(int(c) for c in columns)
        super().__init__(f"selected columns are linearly dependent: {list(self.columns)}")


@dataclass
class EquationDiagnostics:
    target: str
    k: int = 0
    lambda2: float = float("nan")
    status: str = "Skipped"
    cv_error: float = float("nan")
    screened: int = 0
    message: str = ""

    @property
    def failed(self) -> bool:
        return self.status == "Failed"


@dataclass
class SparseModel:
    """Recovered model ``xdot = theta(x) @ (gamma * xi)``."""

    dictionary: TermDictionary
    gamma: np.ndarray
    xi: np.ndarray
    targets: tuple[str, ...]
    diagnostics: list[EquationDiagnostics] = field(default_factory=list)

    @property
    def coefficients(self) -> np.ndarray:
        return self.gamma * self.xi

    @property
    def failed_equations(self) -> list[int]:
        return [j for j, d in enumerate(self.diagnostics) if d.failed]

    def predict(self, X) -> np.ndarray:
        return evaluate(self.dictionary, as_matrix(X)).theta @ self.coefficients

    def equations(self, precision=4) -> list[str]:
        labels = self.dictionary.labels
        out = []
        for j, name in enumerate(self.targets):
            terms = [f"{self.xi[p, j]:+.{precision}f} {labels[p]}" for p in np.flatnonzero(self.gamma[:, j])]
            out.append(f"{name}' = " + (" ".join(terms) if terms else "0"))
        return out

    def to_json(self) -> str:
        labels = self.dictionary.labels
        eqs = []
        for j, name in enumerate(self.targets):
            d = self.diagnostics[j] if j < len(self.diagnostics) else EquationDiagnostics(name)
            eqs.append({
                "target": name,
                "k": int(self.gamma[:, j].sum()),
                "lambda2": _num(d.lambda2),
                "terms": [{"label": labels[p], "coefficient": float(self.xi[p, j])}
                          for p in np.flatnonzero(self.gamma[:, j])],
                "status": d.status,
                "cv_error": _num(d.cv_error),
                "screened": d.screened,
                "message": d.message,
            })
        doc = {
            "dictionary": {
                "degree": self.dictionary.degree,
                "J": self.dictionary.J,
                "include_constant": self.dictionary.include_constant,
                "variables": list(self.dictionary.variable_names),
                "terms": self.dictionary.to_json(),
            },
            "equations": eqs,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SparseModel":
        doc = json.loads(text)
        d = TermDictionary.from_dict(doc["dictionary"])
        labels = d.labels
        J = len(doc["equations"])
        gamma = np.zeros((d.P, J), dtype=int)
        xi = np.zeros((d.P, J))
        diags = []
        for j, eq in enumerate(doc["equations"]):
            for term in eq["terms"]:
                p = labels.index(term["label"])
                gamma[p, j] = 1
                xi[p, j] = term["coefficient"]
            diags.append(EquationDiagnostics(
                target=eq["target"], k=int(eq["k"]), lambda2=_unnum(eq["lambda2"]), status=eq["status"],
                cv_error=_unnum(eq["cv_error"]), screened=int(eq.get("screened", 0)), message=eq.get("message", ""),
            ))
        return cls(d, gamma, xi, tuple(eq["target"] for eq in doc["equations"]), diags)


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def _unnum(v):
    return float("nan") if v is None else float(v)


@dataclass(frozen=True)
class PipelineConfig:
    degree: int = 5
    include_constant: bool = True
    screening: ScreeningConfig = field(default_factory=ScreeningConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    budget: SolverBudget = field(default_factory=SolverBudget)
    dummy_columns: tuple[int, ...] = ()


def ls_refit(theta_raw, y_raw, support) -> np.ndarray:
    """Ordinary least squares of ``y_raw`` on the ``support`` columns of the raw library.

    Uses a column-pivoted QR; raises :class:`RankDeficiencyError` naming the
    dependent columns.
    """
    theta = as_matrix(theta_raw, "theta")
    y = np.asarray(y_raw, dtype=float).ravel()
    check_same_rows(theta, y)
    S = np.asarray(sorted(support), dtype=int)
    if S.size == 0:
        raise ValueError("support must be non-empty")
    A = theta[:, S]
    Q, R, piv = qr(A, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = max(A.shape) * np.finfo(float).eps * (d[0] if d.size else 0.0)
    if d.size < S.size or np.any(d <= tol):
        bad = piv[np.flatnonzero(d <= tol)] if d.size else np.arange(S.size)
        raise RankDeficiencyError(S[bad])
    z = solve_triangular(R, Q.T @ y)
    coef = np.empty(S.size)
    coef[piv] = z
    return coef


def _discover_equation(j, name, Xs, ys, theta_raw, y_raw, candidates, cfg: PipelineConfig):
    diag = EquationDiagnostics(target=name)
    G_full = Xs.T @ Xs
    c_full = Xs.T @ ys
    scr = screen_gram(G_full, c_full, Xs.shape[0], cfg.screening, candidates)
    S = scr.indices
    diag.screened = int(S.size)
    rankings = ()
    if not scr.bypassed:
        order = np.argsort(-np.abs(scr.coef[S]), kind="stable")
        rankings = (tuple(int(i) for i in order),)
    XS = Xs[:, S]
    tres = cross_validate(XS, ys, cfg.tuning, cfg.budget, rankings=rankings)
    prob = SubsetProblem(
        G_full[np.ix_(S, S)], c_full[S], float(ys @ ys), tres.k_best, lambda2=tres.lambda_best,
        box=cfg.budget.box, time_limit=cfg.budget.time_limit, gap_target=cfg.budget.gap_target,
        node_limit=cfg.budget.node_limit, enumeration_limit=cfg.budget.enumeration_limit,
        seeds=tuple(tuple(r[: tres.k_best]) for r in rankings),
    )
    sol = solve_subset(prob)
    support = S[list(sol.support)]
    coef = ls_refit(theta_raw, y_raw, support)
    diag.k = tres.k_best
    diag.lambda2 = tres.lambda_best
    diag.status = sol.status
    diag.cv_error = tres.cv_error
    return support, coef, diag, tres


def _selection_problem(data: TrajectoryDataset, cfg: PipelineConfig):
    if data.Xdot is None:
        raise ValueError("dataset has no derivative/target columns; differentiate first")
    d = build_dictionary(data.J, cfg.degree, cfg.include_constant, data.column_names)
    dm = evaluate(d, data.X)
    keep = [j for j in range(data.J) if j not in cfg.dummy_columns and np.ptp(data.Xdot[:, j]) > 0]
    if not keep:
        raise ValueError("every target column is constant or excluded")
    dm_std, Y_std = standardize(dm, data.Xdot[:, keep])
    return d, dm, keep, dm_std.selection_matrix(), dm_std.selection_target(Y_std), dm_std.candidates


def screen_equations(data: TrajectoryDataset, cfg: PipelineConfig) -> dict:
    """The L1 screen of every non-dummy equation, keyed by column index, as the pipeline runs it."""
    _, _, keep, Xs, Ys, candidates = _selection_problem(data, cfg)
    G = Xs.T @ Xs
    return {j: screen_gram(G, Xs.T @ Ys[:, col], Xs.shape[0], cfg.screening, candidates)
            for col, j in enumerate(keep)}


def discover(data: TrajectoryDataset, cfg: PipelineConfig, return_tuning=False):
    """Identify a sparse model for every non-dummy column of ``data.Xdot``.

    A failure in one equation is recorded in its diagnostics; the other
    equations still run.
    """
    names = data.column_names
    d, dm, keep, Xs, Ys, candidates = _selection_problem(data, cfg)

    gamma = np.zeros((d.P, data.J), dtype=int)
    xi = np.zeros((d.P, data.J))
    diags = [EquationDiagnostics(target=n) for n in names]
    for j in range(data.J):
        if j not in keep and j not in cfg.dummy_columns:
            diags[j] = EquationDiagnostics(target=names[j], status="Failed", message="target column is constant")
    tunings = {}
    for col, j in enumerate(keep):
        try:
            support, coef, diag, tres = _discover_equation(
                j, names[j], Xs, Ys[:, col], dm.theta, data.Xdot[:, j], candidates, cfg
            )
        except Exception as exc:  # isolate per-equation failures
            log.warning("equation %s failed: %s", names[j], exc)
            diags[j] = EquationDiagnostics(target=names[j], status="Failed", message=str(exc))
            continue
        gamma[support, j] = 1
        xi[support, j] = coef
        diags[j] = diag
        tunings[j] = tres
    model = SparseModel(d, gamma, xi, tuple(names), diags)
    return (model, tunings) if return_tuning else model


def stlsq_baseline(data: TrajectoryDataset, degree: int, threshold: float = 0.1, ridge: float = 0.05,
                   iters: int = 20, include_constant: bool = True, dummy_columns=()):
    """Sequentially thresholded ridge regression on the raw library.

    Returns ``(model, empty)`` where ``empty[j]`` flags equations whose every
    coefficient was thresholded away.
    """
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    d = build_dictionary(data.J, degree, include_constant, data.column_names)
    theta = evaluate(d, data.X).theta
    gamma = np.zeros((d.P, data.J), dtype=int)
    xi = np.zeros((d.P, data.J))
    empty = []
    diags = []
    for j in range(data.J):
        name = data.column_names[j]
        if j in dummy_columns:
            diags.append(EquationDiagnostics(target=name))
            empty.append(False)
            continue
        coef = _stlsq(theta, data.Xdot[:, j], threshold, ridge, iters)
        big = np.flatnonzero(coef)
        gamma[big, j] = 1
        xi[big, j] = coef[big]
        empty.append(big.size == 0)
        diags.append(EquationDiagnostics(target=name, k=int(big.size), lambda2=ridge,
                                         status="Empty" if big.size == 0 else "Converged"))
    return SparseModel(d, gamma, xi, tuple(data.column_names), diags), empty


def _ridge(A, y, lam):
    if A.shape[1] == 0:
        return np.zeros(0)
    M = A.T @ A + lam * np.eye(A.shape[1])
    return np.linalg.lstsq(M, A.T @ y, rcond=None)[0]


def _stlsq(theta, y, threshold, ridge, iters):
    P = theta.shape[1]
    active = np.ones(P, dtype=bool)
    coef = np.zeros(P)
    for _ in range(max(iters, 1)):
        coef = np.zeros(P)
        coef[active] = _ridge(theta[:, active], y, ridge)
        new_active = active & (np.abs(coef) >= threshold)
        coef[~new_active] = 0.0
        if np.array_equal(new_active, active):
            break
        active = new_active
    if active.any():
        coef = np.zeros(P)
        coef[active] = np.linalg.lstsq(theta[:, active], y, rcond=None)[0]
    return coef


class CSMIO(BaseEstimator):
    """Estimator front end for :func:`discover`.

    ``fit(X, x_dot)`` identifies one sparse equation per column of ``x_dot``;
    ``predict(X)`` evaluates the identified right-hand side.
    """

    def __init__(self, degree=5, include_constant=True, k_max=5, m=50, T=5, fold_scheme="contiguous",
                 lambda1=1e-6, s_max=100, p_max=100, box=1000.0, time_limit=600.0, gap_target=0.0,
                 node_limit=2000, dummy_columns=(), variable_names=None):
        self.degree = degree
        self.include_constant = include_constant
        self.k_max = k_max
        self.m = m
        self.T = T
        self.fold_scheme = fold_scheme
        self.lambda1 = lambda1
        self.s_max = s_max
        self.p_max = p_max
        self.box = box
        self.time_limit = time_limit
        self.gap_target = gap_target
        self.node_limit = node_limit
        self.dummy_columns = dummy_columns
        self.variable_names = variable_names

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            degree=self.degree,
            include_constant=self.include_constant,
            screening=ScreeningConfig(lambda1=self.lambda1, s_max=self.s_max, p_max=self.p_max),
            tuning=TuningConfig(k_max=self.k_max, m=self.m, T=self.T, fold_scheme=self.fold_scheme),
            budget=SolverBudget(box=self.box, time_limit=self.time_limit, gap_target=self.gap_target,
                                node_limit=self.node_limit),
            dummy_columns=tuple(self.dummy_columns),
        )

    def fit(self, X, x_dot):
        X = as_matrix(X, "X")
        x_dot = as_matrix(x_dot, "x_dot")
        check_same_rows(X, x_dot)
        if x_dot.shape[1] != X.shape[1]:
            raise ValueError("x_dot must have one column per state variable")
        names = tuple(self.variable_names) if self.variable_names else tuple(f"x{j + 1}" for j in range(X.shape[1]))
        data = TrajectoryDataset(np.arange(X.shape[0], dtype=float), X, x_dot, names)
        self.model_ = discover(data, self._config())
        self.coef_ = self.model_.coefficients.T
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(X)

    def equations(self, precision=4):
        check_is_fitted(self, "model_")
        return self.model_.equations(precision)


class STLSQ(BaseEstimator):
    """Sequentially thresholded least squares baseline with the same interface as :class:`CSMIO`."""

    def __init__(self, degree=5, threshold=0.1, ridge=0.05, iters=20, include_constant=True):
        self.degree = degree
        self.threshold = threshold
        self.ridge = ridge
        self.iters = iters
        self.include_constant = include_constant

    def fit(self, X, x_dot):
        X = as_matrix(X, "X")
        x_dot = as_matrix(x_dot, "x_dot")
        check_same_rows(X, x_dot)
        data = TrajectoryDataset(np.arange(X.shape[0], dtype=float), X, x_dot)
        self.model_, self.empty_ = stlsq_baseline(data, self.degree, self.threshold, self.ridge, self.iters,
                                                  self.include_constant)
        self.coef_ = self.model_.coefficients.T
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(X)
