"""Input checks shared by the estimators and the functional API."""
import numpy as np
from sklearn.utils import check_array


def as_matrix(X, name="X", allow_nan=False) -> np.ndarray:
    """Return ``X`` as a 2-D float array, promoting vectors to one column."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return check_array(
        X,
        dtype=float,
        ensure_all_finite="allow-nan" if allow_nan else True,
        input_name=name,
        ensure_min_samples=1,
    )


def as_vector(y, name="y") -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    return y


def check_same_rows(a: np.ndarray, b: np.ndarray, what="inputs") -> None:
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"{what} have mismatched row counts: {a.shape[0]} vs {b.shape[0]}")
