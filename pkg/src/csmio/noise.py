"""Additive Gaussian measurement noise and the averaged signal-to-noise ratio."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .systems import RNG_NAME, TrajectoryDataset

TYPE1 = "Type1_OnDerivative"
TYPE2 = "Type2_OnState"


class DegenerateNoiseError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """i.i.d. N(0, sigma^2) noise on the derivatives (Type 1) or the states (Type 2)."""

    noise_type: str
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if self.noise_type not in (TYPE1, TYPE2):
            raise ValueError(f"noise_type must be {TYPE1!r} or {TYPE2!r}, got {self.noise_type!r}")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"sigma must be finite and non-negative, got {self.sigma}")

    def to_dict(self) -> dict:
        return {"noise_type": self.noise_type, "sigma": float(self.sigma), "seed": int(self.seed)}


def noise_matrix(shape, sigma: float, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    return sigma * rng.standard_normal(shape)


def corrupt(data: TrajectoryDataset, spec: NoiseSpec) -> TrajectoryDataset:
    """Return a noisy copy of ``data``; Type 2 clears ``Xdot`` for re-differentiation."""
    meta = dict(data.meta)
    meta["noise"] = {**spec.to_dict(), "rng": RNG_NAME}
    if spec.noise_type == TYPE1:
        if data.Xdot is None:
            raise ValueError("Type 1 noise needs derivatives, but the dataset has none")
        if spec.sigma == 0:
            return data.with_(Xdot=data.Xdot.copy(), X=data.X.copy(), meta=meta)
        V = noise_matrix(data.Xdot.shape, spec.sigma, spec.seed)
        _keep_dummies(V, meta)
        meta["snr"] = _snr_or_none(data.Xdot, V)
        return data.with_(X=data.X.copy(), Xdot=data.Xdot + V, meta=meta)
    if spec.sigma == 0:
        return data.with_(X=data.X.copy(), Xdot=None, meta=meta)
    U = noise_matrix(data.X.shape, spec.sigma, spec.seed)
    _keep_dummies(U, meta)
    meta["snr"] = _snr_or_none(data.X, U)
    return data.with_(X=data.X + U, Xdot=None, meta=meta)


def _keep_dummies(noise, meta):
    # augmented bifurcation-parameter columns are known exactly
    for j in meta.get("dummy_columns", ()):
        noise[:, j] = 0.0


def _snr_or_none(signal, noise):
    live = np.var(noise, axis=0, ddof=1) > 0
    if not live.any():
        return None
    return snr(signal[:, live], noise[:, live])


def snr(signal, noise) -> float:
    """Column-averaged ratio of sample variances ``Var(S_j) / Var(Z_j)``."""
    S = np.asarray(signal, dtype=float)
    Z = np.asarray(noise, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if Z.ndim == 1:
        Z = Z[:, None]
    if S.shape != Z.shape:
        raise ValueError(f"signal shape {S.shape} differs from noise shape {Z.shape}")
    if S.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    vz = np.var(Z, axis=0, ddof=1)
    if np.any(vz == 0):
        raise DegenerateNoiseError(f"noise columns {np.flatnonzero(vz == 0).tolist()} have zero variance")
    return float(np.mean(np.var(S, axis=0, ddof=1) / vz))
