"""Exact cardinality-constrained ridge regression.

Solves

    min ||y - X xi||^2 + lambda2 ||xi||^2   s.t.  |supp(xi)| = k,  ||xi||_inf <= B

by depth-first branch-and-bound over include/exclude decisions. All node work
happens on the Gram matrix, so cost is independent of the number of rows once
``X^T X`` is formed.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .validation import as_matrix, as_vector, check_same_rows

OPTIMAL = "Optimal"
TIME_LIMIT = "TimeLimitSuboptimal"

ORACLE_LIMIT = 1_000_000


class SolverError(RuntimeError):
    pass


class CollinearityError(SolverError):
    def __init__(self, pair):
        self.pair = tuple(int(i) for i in pair)
        super().__init__(f"columns {self.pair[0]} and {self.pair[1]} are collinear; use lambda2 > 0")


class EnumerationLimitError(SolverError):
    pass


@dataclass
class SubsetProblem:
    """One instance of the cardinality-constrained ridge problem, in Gram form.

    ``gram = X^T X``, ``xty = X^T y`` and ``yty = y^T y``. Use
    :meth:`from_data` to build from a design matrix; the design is then kept
    for the exhaustive oracle.
    """

    gram: np.ndarray
    xty: np.ndarray
    yty: float
    k: int
    lambda2: float = 0.0
    box: float = 1000.0
    time_limit: float = 600.0
    gap_target: float = 0.0
    node_limit: int | None = None
    seeds: tuple = ()
    enumeration_limit: int = 20_000
    design: np.ndarray | None = field(default=None, repr=False)
    target: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.gram = np.asarray(self.gram, dtype=float)
        self.xty = np.asarray(self.xty, dtype=float)
        self.yty = float(self.yty)
        P = self.xty.shape[0]
        if self.gram.shape != (P, P):
            raise ValueError(f"gram has shape {self.gram.shape}, expected {(P, P)}")
        if not 1 <= self.k <= P:
            raise ValueError(f"k={self.k} must satisfy 1 <= k <= {P}")
        if self.lambda2 < 0 or not np.isfinite(self.lambda2):
            raise ValueError(f"lambda2 must be finite and >= 0, got {self.lambda2}")
        if not self.box > 0:
            raise ValueError(f"box bound must be positive, got {self.box}")
        if self.time_limit < 0 or self.gap_target < 0:
            raise ValueError("time_limit and gap_target must be non-negative")

    @property
    def P(self) -> int:
        return self.xty.shape[0]

    @classmethod
    def from_data(cls, design, target, k, **kwargs) -> "SubsetProblem":
        X = as_matrix(design, "design")
        y = as_vector(target, "target")
        check_same_rows(X, y)
        return cls(X.T @ X, X.T @ y, float(y @ y), k, design=X, target=y, **kwargs)


@dataclass
class SubsetSolution:
    support: tuple[int, ...]
    coef: np.ndarray
    objective: float
    lower_bound: float
    status: str
    nodes_explored: int = 0
    elapsed: float = 0.0

    @property
    def gamma(self) -> np.ndarray:
        g = np.zeros(self.coef.shape[0], dtype=int)
        g[list(self.support)] = 1
        return g

    @property
    def gap(self) -> float:
        return (self.objective - self.lower_bound) / max(abs(self.objective), 1e-12)


# -- restricted ridge -------------------------------------------------------


def _collinear_pair(G: np.ndarray, S) -> tuple[int, int]:
    S = list(S)
    sub = G[np.ix_(S, S)]
    d = np.sqrt(np.clip(np.diag(sub), 1e-300, None))
    C = np.abs(sub / np.outer(d, d))
    np.fill_diagonal(C, -np.inf)
    if len(S) == 1:
        return (S[0], S[0])
    a, b = np.unravel_index(np.argmax(C), C.shape)
    return (S[min(a, b)], S[max(a, b)])


def _solve_spd(A: np.ndarray, b: np.ndarray):
    c = cho_factor(A, check_finite=False)
    return cho_solve(c, b, check_finite=False)


def _ridge_gram(G, c, yty, S, lam, box):
    """Box-constrained ridge on support ``S`` in Gram form; returns (coef_S, objective)."""
    S = np.asarray(S, dtype=int)
    A = G[np.ix_(S, S)] + lam * np.eye(len(S))
    b = c[S]
    try:
        xi = _solve_spd(A, b)
        if lam == 0 and np.linalg.cond(A) > 1e13:
            raise LinAlgError
    except (LinAlgError, ValueError):
        raise CollinearityError(_collinear_pair(G, S)) from None
    if np.max(np.abs(xi), initial=0.0) > box:
        xi = _clip_reoptimize(A, b, xi, box)
    obj = yty - 2.0 * b @ xi + xi @ A @ xi
    return xi, float(obj)


def _clip_reoptimize(A, b, xi, box):
    n = len(b)
    fixed = np.zeros(n, dtype=bool)
    val = np.zeros(n)
    while True:
        viol = (~fixed) & (np.abs(xi) > box)
        if not viol.any():
            break
        fixed |= viol
        val[viol] = np.sign(xi[viol]) * box
        free = ~fixed
        xi = val.copy()
        if free.any():
            rhs = b[free] - A[np.ix_(free, fixed)] @ val[fixed]
            xi[free] = _solve_spd(A[np.ix_(free, free)], rhs)
    return np.clip(xi, -box, box)


def ridge_restricted(design, target, support, lambda2=0.0, box=1000.0):
    """Ridge fit of ``target`` on the ``support`` columns of ``design`` under a box bound.

    Works on the data directly (augmented least squares), independent of the
    Gram-form path used inside the branch-and-bound. Returns ``(coef, objective)``
    where ``coef`` is indexed like ``support``.
    """
    X = as_matrix(design, "design")
    y = as_vector(target, "target")
    S = np.asarray(sorted(support), dtype=int)
    if S.size == 0:
        raise ValueError("support must be non-empty")
    XS = X[:, S]
    if lambda2 == 0:
        if np.linalg.matrix_rank(XS) < len(S):
            a, b = _collinear_pair(XS.T @ XS, range(len(S)))
            raise CollinearityError((S[a], S[b]))
        Xa, ya = XS, y
    else:
        Xa = np.vstack([XS, np.sqrt(lambda2) * np.eye(len(S))])
        ya = np.concatenate([y, np.zeros(len(S))])
    xi = np.linalg.lstsq(Xa, ya, rcond=None)[0]
    if np.max(np.abs(xi)) > box:
        xi = _clip_reoptimize(Xa.T @ Xa, Xa.T @ ya, xi, box)
    r = y - XS @ xi
    return xi, float(r @ r + lambda2 * xi @ xi)


# -- heuristics ---------------------------------------------------------------


def _best_additions(G, c, yty, S, lam, cand):
    """Objective after adding each candidate to ``S`` (unboxed ridge), vectorized."""
    cand = np.asarray(cand, dtype=int)
    if len(S) == 0:
        return yty - c[cand] ** 2 / (np.diag(G)[cand] + lam)
    S = np.asarray(S, dtype=int)
    A = G[np.ix_(S, S)] + lam * np.eye(len(S))
    try:
        fac = cho_factor(A, check_finite=False)
    except LinAlgError:
        return np.full(len(cand), np.inf)
    HS_c = cho_solve(fac, c[S], check_finite=False)
    base = yty - c[S] @ HS_c
    GSc = G[np.ix_(S, cand)]
    W = cho_solve(fac, GSc, check_finite=False)
    g = c[cand] - GSc.T @ HS_c
    d = np.diag(G)[cand] + lam - np.einsum("ij,ij->j", GSc, W)
    with np.errstate(divide="ignore", invalid="ignore"):
        red = np.where(d > 1e-14 * (np.diag(G)[cand] + lam + 1e-300), g**2 / d, 0.0)
    return base - red


def _greedy(G, c, yty, k, lam):
    S: list[int] = []
    P = len(c)
    for _ in range(k):
        cand = np.array([j for j in range(P) if j not in S])
        vals = _best_additions(G, c, yty, S, lam, cand)
        S.append(int(cand[np.argmin(vals)]))
    return tuple(sorted(S))


def greedy_warmstart(design, target, k, lambda2=0.0):
    """Forward stepwise selection of ``k`` columns; each step adds the column
    giving the largest drop in the ridge objective."""
    X = as_matrix(design, "design")
    y = as_vector(target, "target")
    if k > X.shape[1]:
        raise ValueError(f"k={k} exceeds column count {X.shape[1]}")
    return _greedy(X.T @ X, X.T @ y, float(y @ y), k, lambda2)


def _swap_improve(G, c, yty, S, lam, obj):
    P = len(c)
    S = list(S)
    improved = True
    while improved:
        improved = False
        best = (obj, None, None)
        for i in range(len(S)):
            rest = S[:i] + S[i + 1:]
            cand = np.array([j for j in range(P) if j not in S])
            if cand.size == 0:
                continue
            vals = _best_additions(G, c, yty, rest, lam, cand)
            a = int(np.argmin(vals))
            if vals[a] < best[0] - 1e-12 * max(1.0, abs(yty)):
                best = (vals[a], i, int(cand[a]))
        if best[1] is not None:
            S[best[1]] = best[2]
            obj = best[0]
            improved = True
    return tuple(sorted(S))


# -- branch and bound -------------------------------------------------------


class _Search:
    def __init__(self, prob: SubsetProblem, log=None):
        self.p = prob
        self.G = prob.gram
        self.c = prob.xty
        self.yty = prob.yty
        self.lam = prob.lambda2
        self.tol = 1e-12 * max(1.0, abs(prob.yty))
        self.best_obj = np.inf
        self.best_S: tuple | None = None
        self.best_coef = None
        self.nodes = 0
        self.log = log
        self.eye_cache: dict[int, np.ndarray] = {}

    def offer(self, S, obj=None, coef=None):
        S = tuple(sorted(int(i) for i in S))
        if obj is None:
            coef, obj = _ridge_gram(self.G, self.c, self.yty, S, self.lam, self.p.box)
        if obj < self.best_obj - self.tol or (
            abs(obj - self.best_obj) <= self.tol and (self.best_S is None or S < self.best_S)
        ):
            self.best_obj, self.best_S, self.best_coef = obj, S, coef
            return True
        return False

    def relax(self, A):
        """Ridge over ``A`` with no cardinality limit; returns (objective, coef, drop increases)."""
        M = self.G[np.ix_(A, A)] + self.lam * np.eye(len(A))
        b = self.c[A]
        try:
            fac = cho_factor(M, check_finite=False)
            xi = cho_solve(fac, b, check_finite=False)
            Hdiag = np.diag(cho_solve(fac, np.eye(len(A)), check_finite=False))
            if np.any(Hdiag <= 0) or not np.all(np.isfinite(xi)):
                raise LinAlgError
            drop = xi**2 / Hdiag
        except (LinAlgError, ValueError):
            xi = np.linalg.lstsq(M, b, rcond=None)[0]
            drop = np.zeros(len(A))
        f = self.yty - b @ xi
        return float(f), xi, drop

    def enumerate_completions(self, I, U, r):
        """Exactly evaluate every completion of ``I`` by ``r`` columns of ``U``."""
        G, c, lam = self.G, self.c, self.lam
        I = np.asarray(I, dtype=int)
        U = np.asarray(U, dtype=int)
        if I.size:
            AI = G[np.ix_(I, I)] + lam * np.eye(I.size)
            try:
                fac = cho_factor(AI, check_finite=False)
            except LinAlgError:
                for T in combinations(U.tolist(), r):
                    self._offer_safe(tuple(I.tolist()) + T)
                return
            h = cho_solve(fac, c[I], check_finite=False)
            GIU = G[np.ix_(I, U)]
            W = cho_solve(fac, GIU, check_finite=False)
            base = self.yty - c[I] @ h
            M = G[np.ix_(U, U)] + lam * np.eye(U.size) - GIU.T @ W
            g = c[U] - GIU.T @ h
        else:
            base = self.yty
            M = G[np.ix_(U, U)] + lam * np.eye(U.size)
            g = c[U]
        idx = np.array(list(combinations(range(U.size), r)), dtype=int)
        Ms = M[idx[:, :, None], idx[:, None, :]]
        gs = g[idx]
        with np.errstate(all="ignore"):
            try:
                sol = np.linalg.solve(Ms, gs[..., None])[..., 0]
                red = np.einsum("ij,ij->i", gs, sol)
            except LinAlgError:
                red = np.array([_safe_quad(Ms[i], gs[i]) for i in range(len(idx))])
        vals = base - red
        vals[~np.isfinite(vals)] = np.inf
        order = np.argsort(vals, kind="stable")
        for o in order:
            if vals[o] > self.best_obj + self.tol:
                break
            S = tuple(I.tolist()) + tuple(U[idx[o]].tolist())
            self._offer_safe(S)

    def _offer_safe(self, S):
        try:
            self.offer(S)
        except CollinearityError:
            pass

    def run(self):
        p = self.p
        t0 = time.perf_counter()
        P, k = p.P, p.k
        # incumbent seeding
        for seed in p.seeds:
            seed = tuple(sorted(set(int(i) for i in seed)))
            if len(seed) == k:
                self._offer_safe(seed)
        g = _greedy(self.G, self.c, self.yty, k, self.lam)
        self._offer_safe(g)
        if self.best_S is not None:
            s = _swap_improve(self.G, self.c, self.yty, self.best_S, self.lam, self.best_obj)
            self._offer_safe(s)

        # node = (I, U, inherited bound, depth)
        stack = [((), tuple(range(P)), -np.inf, 0)]
        exhausted = True
        while stack:
            if (time.perf_counter() - t0 > p.time_limit) or (
                p.node_limit is not None and self.nodes >= p.node_limit
            ):
                exhausted = False
                break
            I, U, inherited, depth = stack.pop()
            if inherited >= self.best_obj - self.tol:
                continue
            self.nodes += 1
            r = k - len(I)
            if r == 0:
                self._offer_safe(I)
                continue
            if len(U) == r:
                self._offer_safe(I + U)
                continue
            A = np.array(sorted(I + U), dtype=int)
            f, xi, drop = self.relax(A)
            pos = {a: i for i, a in enumerate(A.tolist())}
            Uidx = np.array([pos[u] for u in U], dtype=int)
            dU = np.sort(drop[Uidx])
            bound = max(f + dU[len(U) - r - 1], inherited)
            if self.log is not None:
                self.log(self.nodes, depth, bound, self.best_obj)
            if bound >= self.best_obj - self.tol:
                continue
            if comb(len(U), r) <= p.enumeration_limit:
                self.enumerate_completions(I, U, r)
                continue
            j = U[int(np.argmax(np.abs(xi[Uidx])))]
            rest = tuple(u for u in U if u != j)
            stack.append((I, rest, bound, depth + 1))
            stack.append((tuple(sorted(I + (j,))), rest, bound, depth + 1))

        if self.best_S is None:
            raise SolverError("no feasible support found (all candidates collinear?)")
        if exhausted:
            lb = self.best_obj
        else:
            open_bounds = [b for (_, _, b, _) in stack if b < self.best_obj]
            lb = min([self.best_obj] + open_bounds)
            if not np.isfinite(lb):
                lb = self._root_bound()
        coef = np.zeros(P)
        coef[list(self.best_S)] = self.best_coef
        sol = SubsetSolution(
            support=self.best_S,
            coef=coef,
            objective=self.best_obj,
            lower_bound=min(lb, self.best_obj),
            status=OPTIMAL,
            nodes_explored=self.nodes,
            elapsed=time.perf_counter() - t0,
        )
        if not exhausted and sol.gap > p.gap_target:
            sol.status = TIME_LIMIT
        return sol

    def _root_bound(self):
        P, k = self.p.P, self.p.k
        A = np.arange(P)
        f, _, drop = self.relax(A)
        if P > k:
            f += np.sort(drop)[P - k - 1]
        return f


def _safe_quad(M, g):
    try:
        return float(g @ np.linalg.solve(M, g))
    except LinAlgError:
        return -np.inf


def solve_subset(prob: SubsetProblem, log=None) -> SubsetSolution:
    """Branch-and-bound solve of ``prob``.

    Bounds: a node with fixed-in set ``I`` and undecided set ``U`` is bounded
    below by the ridge objective over ``I | U``, raised by the smallest
    single-column removal cost that any ``k``-completion must pay. Nodes whose
    completions number at most ``prob.enumeration_limit`` are finished by
    vectorized enumeration.
    """
    return _Search(prob, log=log).run()


class NodeLogWriter:
    """Callable that streams ``(node, depth, bound, incumbent)`` rows to a CSV file."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(["node", "depth", "bound", "incumbent"])

    def __call__(self, node, depth, bound, incumbent):
        self._w.writerow([node, depth, repr(float(bound)), repr(float(incumbent))])

    def close(self):
        self._fh.close()


def exhaustive_oracle(prob: SubsetProblem) -> SubsetSolution:
    """Brute force over all ``k``-subsets; ties go to the lexicographically smallest support."""
    n = comb(prob.P, prob.k)
    if n > ORACLE_LIMIT:
        raise EnumerationLimitError(f"C({prob.P},{prob.k}) = {n} subsets exceeds the oracle limit {ORACLE_LIMIT}")
    best = (np.inf, None, None)
    tol = 1e-12 * max(1.0, abs(prob.yty))
    for S in combinations(range(prob.P), prob.k):
        try:
            if prob.design is not None:
                coef, obj = ridge_restricted(prob.design, prob.target, S, prob.lambda2, prob.box)
            else:
                coef, obj = _ridge_gram(prob.gram, prob.xty, prob.yty, S, prob.lambda2, prob.box)
        except CollinearityError:
            continue
        if obj < best[0] - tol:
            best = (obj, S, coef)
    if best[1] is None:
        raise SolverError("every subset is collinear")
    full = np.zeros(prob.P)
    full[list(best[1])] = best[2]
    return SubsetSolution(best[1], full, best[0], best[0], OPTIMAL, nodes_explored=n)


class BestSubsetRegressor(RegressorMixin, BaseEstimator):
    """Estimator wrapper around :func:`solve_subset`.

    Fits without an intercept; callers standardize beforehand.
    """

    def __init__(self, k=1, lambda2=0.0, box=1000.0, time_limit=600.0, gap_target=0.0, node_limit=None):
        self.k = k
        self.lambda2 = lambda2
        self.box = box
        self.time_limit = time_limit
        self.gap_target = gap_target
        self.node_limit = node_limit

    def fit(self, X, y):
        X = as_matrix(X)
        y = as_vector(y)
        check_same_rows(X, y)
        prob = SubsetProblem.from_data(
            X, y, self.k, lambda2=self.lambda2, box=self.box, time_limit=self.time_limit,
            gap_target=self.gap_target, node_limit=self.node_limit,
        )
        self.solution_ = solve_subset(prob)
        self.coef_ = self.solution_.coef
        self.support_ = np.asarray(self.solution_.support)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return as_matrix(X) @ self.coef_
