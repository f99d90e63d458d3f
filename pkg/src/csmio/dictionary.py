"""Polynomial candidate libraries and their evaluation on trajectory data."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import as_matrix


class DegenerateColumnError(ValueError):
    pass


@dataclass(frozen=True)
class TermDictionary:
    """Ordered list of monomials in ``J`` state variables.

    Terms are sorted by total degree, then in descending lexicographic order
    of their exponent vectors (``x1^2, x1*x2, x2^2``).
    """

    J: int
    degree: int
    terms: tuple[tuple[int, ...], ...]
    variable_names: tuple[str, ...]
    include_constant: bool = True

    @property
    def P(self) -> int:
        return len(self.terms)

    @property
    def labels(self) -> list[str]:
        return [term_label(t, self.variable_names) for t in self.terms]

    @property
    def constant_index(self) -> int | None:
        for i, t in enumerate(self.terms):
            if not any(t):
                return i
        return None

    def index_of(self, exponents) -> int:
        key = tuple(int(e) for e in exponents)
        try:
            return self.terms.index(key)
        except ValueError:
            raise KeyError(f"term {term_label(key, self.variable_names)} not in dictionary") from None

    def index_of_label(self, label: str) -> int:
        return self.labels.index(label)

    def to_json(self) -> list[dict]:
        return [{"label": lab, "exponents": list(t)} for lab, t in zip(self.labels, self.terms)]

    def dumps(self) -> str:
        return json.dumps(
            {
                "J": self.J,
                "degree": self.degree,
                "include_constant": self.include_constant,
                "variables": list(self.variable_names),
                "terms": self.to_json(),
            }
        )

    @classmethod
    def loads(cls, text: str) -> "TermDictionary":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, obj: dict) -> "TermDictionary":
        terms = tuple(tuple(int(e) for e in t["exponents"]) for t in obj["terms"])
        J = int(obj["J"])
        names = tuple(obj.get("variables") or default_names(J))
        return cls(
            J=J,
            degree=int(obj["degree"]),
            terms=terms,
            variable_names=names,
            include_constant=bool(obj.get("include_constant", any(not any(t) for t in terms))),
        )


def default_names(J: int) -> tuple[str, ...]:
    return tuple(f"x{j + 1}" for j in range(J))


def term_label(exponents, names) -> str:
    parts = []
    for e, name in zip(exponents, names):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts) if parts else "1"


def build_dictionary(J: int, degree: int, include_constant: bool = True, variable_names=None) -> TermDictionary:
    if J < 1 or degree < 1:
        raise ValueError(f"need J >= 1 and degree >= 1, got J={J}, degree={degree}")
    names = tuple(variable_names) if variable_names is not None else default_names(J)
    if len(names) != J:
        raise ValueError(f"{len(names)} variable names for J={J}")
    terms = []
    start = 0 if include_constant else 1
    for d in range(start, degree + 1):
        for combo in combinations_with_replacement(range(J), d):
            exps = [0] * J
            for j in combo:
                exps[j] += 1
            terms.append(tuple(exps))
    expected = comb(J + degree, degree) - (0 if include_constant else 1)
    assert len(terms) == expected
    return TermDictionary(J, degree, tuple(terms), names, include_constant)


@dataclass
class DesignMatrix:
    """Evaluated library ``theta`` plus the statistics needed to undo standardization."""

    theta: np.ndarray
    dictionary: TermDictionary
    standardized: bool = False
    means: np.ndarray | None = None
    stds: np.ndarray | None = None
    target_means: np.ndarray | None = None
    target_stds: np.ndarray | None = None
    exempt: np.ndarray | None = None
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(self.theta.shape[1], dtype=bool)

    @property
    def candidates(self) -> np.ndarray:
        """Column indices eligible for subset selection."""
        return np.flatnonzero(~self.degenerate)

    def selection_matrix(self) -> np.ndarray:
        """Scale-normalized columns that keep their mean.

        Equal to ``theta / std`` column-wise (the constant stays all-ones), so
        a model without the constant term carries no hidden intercept.
        """
        if not self.standardized:
            raise ValueError("design matrix is not standardized")
        return self.theta + np.where(self.exempt | self.degenerate, 0.0, self.means / self.stds)

    def selection_target(self, targets_std: np.ndarray) -> np.ndarray:
        return targets_std + self.target_means / self.target_stds

    def destandardize(self) -> np.ndarray:
        if not self.standardized:
            return self.theta.copy()
        out = self.theta * self.stds + self.means
        out[:, self.exempt] = self.theta[:, self.exempt]
        return out

    def to_csv(self, path) -> None:
        header = ",".join(self.dictionary.labels)
        np.savetxt(path, self.theta, delimiter=",", header=header, comments="", fmt="%r")


def evaluate(dictionary: TermDictionary, X) -> DesignMatrix:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != dictionary.J:
        raise ValueError(f"X must have {dictionary.J} columns, got shape {X.shape}")
    bad = ~np.isfinite(X)
    if bad.any():
        row = int(np.argwhere(bad)[0, 0])
        raise ValueError(f"non-finite entry in X at row {row}")
    theta = _monomials(dictionary.terms, X)
    return DesignMatrix(theta=theta, dictionary=dictionary)


def _monomials(terms, X: np.ndarray) -> np.ndarray:
    N, J = X.shape
    max_deg = max((max(t) for t in terms), default=0)
    # powers[e][:, j] == X[:, j] ** e, built by repeated multiplication
    powers = [np.ones_like(X)]
    for _ in range(max_deg):
        powers.append(powers[-1] * X)
    theta = np.empty((N, len(terms)))
    for p, t in enumerate(terms):
        col = np.ones(N)
        for j, e in enumerate(t):
            if e:
                col = col * powers[e][:, j]
        theta[:, p] = col
    return theta


def standardize(dm: DesignMatrix, targets) -> tuple[DesignMatrix, np.ndarray]:
    """Center and scale every non-constant column of ``dm`` and every target column.

    Sample standard deviations use the ``N - 1`` denominator. Constant columns
    become all-ones and are flagged exempt; any other zero-variance column is
    flagged degenerate and dropped from subset candidacy.
    """
    if dm.standardized:
        raise ValueError("design matrix is already standardized")
    theta = dm.theta
    targets = as_matrix(targets, "targets")
    N = theta.shape[0]
    if N < 2:
        raise ValueError("standardization needs at least 2 rows")
    if targets.shape[0] != N:
        raise ValueError(f"targets have {targets.shape[0]} rows, design has {N}")

    means = theta.mean(axis=0)
    stds = theta.std(axis=0, ddof=1)
    const_idx = dm.dictionary.constant_index
    exempt = np.zeros(theta.shape[1], dtype=bool)
    if const_idx is not None:
        exempt[const_idx] = True
    zero_var = stds <= 1e-14 * np.maximum(1.0, np.abs(means))
    degenerate = zero_var & ~exempt

    safe_std = np.where(zero_var | exempt, 1.0, stds)
    z = (theta - means) / safe_std
    z[:, exempt] = 1.0
    z[:, degenerate] = 0.0
    means = np.where(exempt, 0.0, means)
    stds = np.where(exempt, 1.0, safe_std)

    t_means = targets.mean(axis=0)
    t_stds = targets.std(axis=0, ddof=1)
    if np.any(t_stds == 0):
        j = int(np.flatnonzero(t_stds == 0)[0])
        raise DegenerateColumnError(f"target column {j} has zero variance")
    zt = (targets - t_means) / t_stds

    out = replace(
        dm,
        theta=z,
        standardized=True,
        means=means,
        stds=stds,
        target_means=t_means,
        target_stds=t_stds,
        exempt=exempt,
        degenerate=degenerate,
    )
    return out, zt


class PolynomialLibrary(TransformerMixin, BaseEstimator):
    """Transformer mapping states to the evaluated polynomial library.

    Parameters
    ----------
    degree : int
        Maximum total degree.
    include_constant : bool
        Whether the library starts with the constant term.
    variable_names : sequence of str, optional
        Names used in term labels; defaults to ``x1..xJ``.
    """

    def __init__(self, degree=2, include_constant=True, variable_names=None):
        self.degree = degree
        self.include_constant = include_constant
        self.variable_names = variable_names

    def fit(self, X, y=None):
        X = as_matrix(X, "X")
        self.dictionary_ = build_dictionary(X.shape[1], self.degree, self.include_constant, self.variable_names)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "dictionary_")
        return evaluate(self.dictionary_, as_matrix(X, "X")).theta

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "dictionary_")
        return np.asarray(self.dictionary_.labels, dtype=object)
