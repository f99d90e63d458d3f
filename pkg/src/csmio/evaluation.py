"""Recovery metrics, simulation of identified models and results tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .dictionary import evaluate
from .pipeline import SparseModel
from .systems import DivergenceError, GroundTruthModel, TrajectoryDataset, n_samples, rk4

TABLE_HEADER = ("sigma", "snr", "A_baseline", "A_csmio")


@dataclass
class RecoveryReport:
    A: int
    matches: dict[int, bool]
    excluded: tuple[int, ...]
    coefficient_errors: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["equation", "term", "true", "estimated", "abs_error", "rel_error"])
        for row in self.coefficient_errors:
            w.writerow([row["equation"], row["term"], repr(row["true"]), repr(row["estimated"]),
                        repr(row["abs_error"]), repr(row["rel_error"])])
        return buf.getvalue()


def _same_dictionary(a, b) -> bool:
    return a.terms == b.terms


def recovery_metric(model: SparseModel, truth: GroundTruthModel, excluded=None) -> RecoveryReport:
    """Count equations whose recovered support equals the true support exactly."""
    if not _same_dictionary(model.dictionary, truth.dictionary):
        raise ValueError("model and truth use different dictionaries")
    if model.gamma.shape != truth.gamma.shape:
        raise ValueError(f"model has {model.gamma.shape[1]} equations, truth has {truth.gamma.shape[1]}")
    excluded = tuple(sorted(set(truth.dummy_columns if excluded is None else excluded)))
    labels = truth.dictionary.labels
    matches = {}
    errors = []
    for j in range(truth.gamma.shape[1]):
        if j in excluded:
            continue
        matches[j] = bool(np.array_equal(model.gamma[:, j] != 0, truth.gamma[:, j] != 0))
        for p in np.flatnonzero(truth.gamma[:, j]):
            t, e = float(truth.xi[p, j]), float(model.coefficients[p, j])
            errors.append({"equation": j, "term": labels[p], "true": t, "estimated": e,
                           "abs_error": abs(e - t), "rel_error": abs(e - t) / abs(t) if t else float("inf")})
    return RecoveryReport(int(sum(matches.values())), matches, excluded, errors)


@dataclass
class TrajectoryComparison:
    times: np.ndarray
    reference: np.ndarray
    simulated: np.ndarray
    divergence_time: float | None = None

    @property
    def difference(self) -> np.ndarray:
        return self.reference - self.simulated

    @property
    def l2_error(self) -> np.ndarray:
        d = self.difference
        return np.sum(d * d, axis=1)

    def hovmoller_csv(self) -> str:
        """Difference field with one row per state and one column per time."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state"] + [repr(float(t)) for t in self.times])
        for j, row in enumerate(self.difference.T):
            w.writerow([j] + [repr(float(v)) for v in row])
        return buf.getvalue()

    def error_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "l2_error"])
        for t, e in zip(self.times, self.l2_error):
            w.writerow([repr(float(t)), repr(float(e))])
        return buf.getvalue()


def model_rhs(model: SparseModel):
    C = model.coefficients
    d = model.dictionary

    def f(x):
        if not np.all(np.isfinite(x)):
            return np.full(C.shape[1], np.nan)
        with np.errstate(over="ignore", invalid="ignore"):
            return evaluate(d, x[None, :]).theta[0] @ C

    return f


def simulate_model(model: SparseModel, x0, dt: float, t_end: float, kind: str = "continuous") -> TrajectoryDataset:
    """Integrate (RK4) or iterate the identified model from ``x0``.

    A blow-up truncates the trajectory; the time of divergence is stored in
    ``meta["divergence_time"]``.
    """
    if model.failed_equations and kind == "continuous":
        raise ValueError(f"equations {model.failed_equations} failed; cannot simulate")
    x0 = np.asarray(x0, dtype=float)
    f = model_rhs(model)
    meta = {"simulated": True, "divergence_time": None}
    if kind == "continuous":
        n = n_samples(dt, t_end)
        X, meta["divergence_time"] = _rk4_truncating(f, x0, dt, n - 1)
        times = np.arange(X.shape[0]) * dt
    elif kind == "discrete":
        steps = int(t_end)
        X = np.empty((steps + 1, x0.size))
        X[0] = x0
        last = steps
        for i in range(steps):
            X[i + 1] = f(X[i])
            if not np.all(np.isfinite(X[i + 1])):
                meta["divergence_time"] = float(i + 1)
                last = i
                break
        X = X[: last + 1]
        times = np.arange(X.shape[0], dtype=float)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return TrajectoryDataset(times=times, X=X, column_names=model.targets, meta=meta)


def _rk4_truncating(f, x0, dt, n_steps):
    try:
        return rk4(f, x0, dt, n_steps), None
    except DivergenceError as exc:
        good = int(round(exc.time / dt))
        return rk4(f, x0, dt, good - 1), float(exc.time)


def compare_trajectories(reference: TrajectoryDataset, simulated: TrajectoryDataset) -> TrajectoryComparison:
    n = min(reference.N, simulated.N)
    return TrajectoryComparison(reference.times[:n].copy(), reference.X[:n].copy(), simulated.X[:n].copy(),
                                simulated.meta.get("divergence_time"))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


def table_report(runs) -> str:
    """Rows of ``(sigma, snr, A_csmio, A_baseline)`` as CSV, baseline column first."""
    runs = list(runs)
    if not runs:
        raise ValueError("no runs to report")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    for sigma, snr_value, a_csmio, a_base in runs:
        w.writerow([_fmt(sigma), _fmt(snr_value), _fmt(a_base), _fmt(a_csmio)])
    return buf.getvalue()
