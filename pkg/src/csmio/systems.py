"""Benchmark dynamical systems, trajectory generation and ground-truth models."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dictionary import TermDictionary, build_dictionary

CONTINUOUS = "ContinuousODE"
DISCRETE = "DiscreteMap"

LORENZ3 = "Lorenz3"
LORENZ96 = "Lorenz96"
HOPF = "HopfNormal"
LOGISTIC = "LogisticMap"
CYLINDER = "CylinderMeanField"

_KINDS = {LORENZ3: CONTINUOUS, LORENZ96: CONTINUOUS, HOPF: CONTINUOUS, CYLINDER: CONTINUOUS, LOGISTIC: DISCRETE}

RNG_NAME = "numpy.random.Generator(PCG64)"


class DivergenceError(RuntimeError):
    def __init__(self, t):
        self.time = float(t)
        super().__init__(f"trajectory blew up (non-finite state) at t={self.time:g}")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _KINDS:
            raise ConfigurationError(f"unknown system {self.name!r}; choose from {sorted(_KINDS)}")
        for key, val in self.params.items():
            vals = np.atleast_1d(np.asarray(val, dtype=float))
            if not np.all(np.isfinite(vals)):
                raise ConfigurationError(f"parameter {key} must be finite")
        if self.name == LORENZ96 and int(self.params.get("J", 0)) < 4:
            raise ConfigurationError("Lorenz96 requires J >= 4")
        for key in ("mu", "r"):
            if key in self.params and np.ndim(self.params[key]) > 0 and len(self.params[key]) == 0:
                raise ConfigurationError(f"parameter list {key} must be non-empty")

    @property
    def kind(self) -> str:
        return _KINDS[self.name]

    @property
    def J(self) -> int:
        """Number of physical state variables (bifurcation parameters excluded)."""
        return {LORENZ3: 3, HOPF: 2, CYLINDER: 3, LOGISTIC: 1}.get(self.name) or int(self.params["J"])

    @property
    def state_names(self) -> tuple[str, ...]:
        if self.name in (LORENZ3, CYLINDER):
            return ("x", "y", "z")
        if self.name == HOPF:
            return ("x", "y")
        if self.name == LOGISTIC:
            return ("x",)
        return tuple(f"x{j + 1}" for j in range(self.J))

    @property
    def bifurcation_parameter(self) -> str | None:
        return {HOPF: "mu", LOGISTIC: "r"}.get(self.name)

    def with_params(self, **params) -> "SystemSpec":
        return replace(self, params={**self.params, **params})

    def scalar(self, key) -> float:
        val = self.params[key]
        if np.ndim(val) == 0:
            return float(val)
        if len(val) != 1:
            raise ConfigurationError(f"{self.name} needs a single {key} value here, got {len(val)}")
        return float(val[0])

    def to_dict(self) -> dict:
        return {"name": self.name, "params": {k: _jsonable(v) for k, v in self.params.items()}}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return float(v) if isinstance(v, (float, np.floating)) else v


def lorenz3(alpha=10.0, rho=28.0, beta=8.0 / 3.0) -> SystemSpec:
    return SystemSpec(LORENZ3, {"alpha": alpha, "rho": rho, "beta": beta})


def lorenz96(J=96, F=8.0) -> SystemSpec:
    return SystemSpec(LORENZ96, {"J": int(J), "F": F})


def hopf(omega=1.0, A=-1.0, mu=None) -> SystemSpec:
    if mu is None:
        mu = np.linspace(-0.2, 0.6, 14).tolist()
    return SystemSpec(HOPF, {"omega": omega, "A": A, "mu": mu})


def logistic(r=None, sigma_eta=0.0) -> SystemSpec:
    if r is None:
        r = np.linspace(2.5, 4.0, 10).tolist()
    return SystemSpec(LOGISTIC, {"r": r, "sigma_eta": sigma_eta})


def cylinder(mu=0.1, omega=1.0, A=-1.0, lam=10.0) -> SystemSpec:
    return SystemSpec(CYLINDER, {"mu": mu, "omega": omega, "A": A, "lam": lam})


@dataclass(frozen=True)
class TrajectoryDataset:
    """Sampled states ``X`` (N x J) and, optionally, their derivatives ``Xdot``."""

    times: np.ndarray
    X: np.ndarray
    Xdot: np.ndarray | None = None
    column_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.times.shape[0]:
            raise ValueError(f"X shape {self.X.shape} does not match {self.times.shape[0]} time stamps")
        if self.Xdot is not None and self.Xdot.shape != self.X.shape:
            raise ValueError(f"Xdot shape {self.Xdot.shape} differs from X shape {self.X.shape}")
        if not self.column_names:
            object.__setattr__(self, "column_names", tuple(f"x{j + 1}" for j in range(self.X.shape[1])))
        if len(self.column_names) != self.X.shape[1]:
            raise ValueError("column_names length does not match X")
        for arr in (self.times, self.X, self.Xdot):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def J(self) -> int:
        return self.X.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.N > 1 else float("nan")

    def with_(self, **changes) -> "TrajectoryDataset":
        return replace(self, **changes)

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", *[f"x{j + 1}" for j in range(self.J)]]
        if self.Xdot is not None:
            header += [f"dx{j + 1}" for j in range(self.J)]
        w.writerow(header)
        for i in range(self.N):
            row = [repr(float(self.times[i]))] + [repr(float(v)) for v in self.X[i]]
            if self.Xdot is not None:
                row += [repr(float(v)) for v in self.Xdot[i]]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
            Path(str(path) + ".meta.json").write_text(
                json.dumps({"column_names": list(self.column_names), **self.meta}, indent=2, sort_keys=True),
                encoding="utf-8",
            )
        return text

    @classmethod
    def from_csv(cls, path) -> "TrajectoryDataset":
        path = Path(path)
        with path.open(encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        nx = sum(1 for h in header if h.startswith("x"))
        nd = sum(1 for h in header if h.startswith("dx"))
        if nd not in (0, nx) or 1 + nx + nd != len(header):
            raise ValueError(f"{path}: malformed header {header}")
        meta, names = {}, ()
        side = Path(str(path) + ".meta.json")
        if side.exists():
            meta = json.loads(side.read_text(encoding="utf-8"))
            names = tuple(meta.pop("column_names", ()))
        return cls(
            times=data[:, 0].copy(),
            X=data[:, 1:1 + nx].copy(),
            Xdot=data[:, 1 + nx:].copy() if nd else None,
            column_names=names,
            meta=meta,
        )


# -- right-hand sides ----------------------------------------------------------


def rhs(spec: SystemSpec, X: np.ndarray) -> np.ndarray:
    """Vector field evaluated row-wise on ``X`` (shape ``(..., J)``)."""
    p = spec.params
    if spec.name == LORENZ3:
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        return np.stack([p["alpha"] * (y - x), x * (p["rho"] - z) - y, x * y - p["beta"] * z], axis=-1)
    if spec.name == LORENZ96:
        return (np.roll(X, -1, axis=-1) - np.roll(X, 2, axis=-1)) * np.roll(X, 1, axis=-1) - X + p["F"]
    if spec.name == HOPF:
        mu, om, A = spec.scalar("mu"), p["omega"], p["A"]
        x, y = X[..., 0], X[..., 1]
        rr = x * x + y * y
        return np.stack([mu * x - om * y + A * x * rr, om * x + mu * y + A * y * rr], axis=-1)
    if spec.name == CYLINDER:
        mu, om, A, lam = p["mu"], p["omega"], p["A"], p["lam"]
        x, y, z = X[..., 0], X[..., 1], X[..., 2]
        return np.stack([mu * x - om * y + A * x * z, om * x + mu * y + A * y * z, -lam * (z - x * x - y * y)], axis=-1)
    raise ConfigurationError(f"{spec.name} is not a continuous-time system")


def rk4(f, x0, dt: float, n_steps: int) -> np.ndarray:
    """Classical fixed-step Runge-Kutta; raises :class:`DivergenceError` on blow-up."""
    out = np.empty((n_steps + 1, len(x0)))
    x = np.asarray(x0, dtype=float).copy()
    out[0] = x
    h2 = 0.5 * dt
    for i in range(n_steps):
        k1 = f(x)
        k2 = f(x + h2 * k1)
        k3 = f(x + h2 * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError((i + 1) * dt)
        out[i + 1] = x
    return out


def n_samples(dt: float, t_end: float) -> int:
    return int(np.floor(t_end / dt + 1e-9)) + 1


def integrate_ode(spec: SystemSpec, x0, dt: float, t_end: float) -> TrajectoryDataset:
    if spec.kind != CONTINUOUS:
        raise ConfigurationError(f"{spec.name} is a discrete map; use iterate_map")
    if not (dt > 0 and t_end > 0):
        raise ValueError("dt and t_end must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.J,):
        raise ValueError(f"x0 must have length {spec.J}")
    n = n_samples(dt, t_end)
    X = rk4(lambda x: rhs(spec, x), x0, dt, n - 1)
    return TrajectoryDataset(
        times=np.arange(n) * dt,
        X=X,
        Xdot=rhs(spec, X),
        column_names=spec.state_names,
        meta={"system": spec.to_dict(), "x0": x0.tolist(), "dt": dt, "t_end": t_end, "integrator": "rk4"},
    )


def logistic_step(x, r, eta=0.0):
    return r * x * (1.0 - x) + eta


def iterate_map(spec: SystemSpec, x0: float, steps: int, seed: int = 0) -> TrajectoryDataset:
    """Iterate the stochastically forced logistic map for ``steps`` steps.

    States are the pairs ``(x_n, r)``; targets are ``(x_{n+1}, r)``. A state
    leaving ``[0, 1]`` is folded back by reflection so the forced map stays
    bounded.
    """
    if spec.kind != DISCRETE:
        raise ConfigurationError(f"{spec.name} is continuous; use integrate_ode")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    r = spec.scalar("r")
    sigma = float(spec.params.get("sigma_eta", 0.0))
    rng = np.random.Generator(np.random.PCG64(seed))
    eta = rng.standard_normal(steps) * sigma if sigma > 0 else np.zeros(steps)
    x = np.empty(steps + 1)
    x[0] = x0
    for n in range(steps):
        x[n + 1] = _fold(logistic_step(x[n], r, eta[n]))
    X = np.column_stack([x[:-1], np.full(steps, r)])
    Y = np.column_stack([x[1:], np.full(steps, r)])
    return TrajectoryDataset(
        times=np.arange(steps, dtype=float),
        X=X,
        Xdot=Y,
        column_names=("x", "r"),
        meta={"system": spec.to_dict(), "x0": float(x0), "steps": steps, "seed": seed, "rng": RNG_NAME,
              "forcing": eta.tolist()},
    )


def _fold(v: float) -> float:
    # reflect into [0, 1]
    v = abs(v)
    v = v % 2.0
    return 2.0 - v if v > 1.0 else v


def bifurcation_stack(spec: SystemSpec, x0=None, dt: float = 0.0025, t_end: float = 75.0,
                      steps: int = 1000, seed: int = 0) -> TrajectoryDataset:
    """Concatenate one trajectory per bifurcation-parameter value, with the
    parameter appended as a constant state column."""
    key = spec.bifurcation_parameter
    if key is None:
        raise ConfigurationError(f"{spec.name} has no bifurcation parameter")
    values = np.atleast_1d(np.asarray(spec.params[key], dtype=float))
    if values.size == 0:
        raise ConfigurationError(f"empty {key} list")
    parts = []
    for i, v in enumerate(values):
        sub = spec.with_params(**{key: float(v)})
        if spec.kind == CONTINUOUS:
            start = _default_x0(spec) if x0 is None else x0
            d = integrate_ode(sub, start, dt, t_end)
            col = np.full((d.N, 1), v)
            d = d.with_(X=np.hstack([d.X, col]), Xdot=np.hstack([d.Xdot, np.zeros_like(col)]),
                        column_names=d.column_names + (key,))
        else:
            d = iterate_map(sub, 0.5 if x0 is None else float(x0), steps, seed=seed + i)
        parts.append(d)
    widths = {p.X.shape[1] for p in parts}
    if len(widths) != 1:
        raise ConfigurationError(f"inconsistent per-value state widths {widths}")
    seg = np.concatenate([np.full(p.N, i) for i, p in enumerate(parts)])
    meta = {"system": spec.to_dict(), "segments": [int(p.N) for p in parts], "parameter": key,
            "dummy_columns": [parts[0].X.shape[1] - 1]}
    if spec.kind == DISCRETE:
        meta.update(seed=seed, rng=RNG_NAME, forcing=np.concatenate([p.meta["forcing"] for p in parts]).tolist())
    else:
        meta.update(dt=dt, t_end=t_end)
    return TrajectoryDataset(
        times=np.concatenate([p.times for p in parts]),
        X=np.vstack([p.X for p in parts]),
        Xdot=np.vstack([p.Xdot for p in parts]),
        column_names=parts[0].column_names,
        meta={**meta, "segment_index": seg.tolist()},
    )


def _default_x0(spec):
    return {LORENZ3: [-8.0, 8.0, 27.0], HOPF: [2.0, 0.0], CYLINDER: [1.0, 0.0, 0.0]}.get(spec.name) or default_lorenz96_x0(spec.J)


def default_lorenz96_x0(J):
    x0 = np.ones(J)
    x0[0] += 0.01
    return x0.tolist()


# -- ground truth ----------------------------------------------------------------


@dataclass
class GroundTruthModel:
    """True support ``gamma`` and coefficients ``xi`` (P x J) over a dictionary.

    Columns listed in ``dummy_columns`` are the bifurcation-parameter
    equations; they are kept for simulation but not counted in recovery metrics.
    """

    dictionary: TermDictionary
    gamma: np.ndarray
    xi: np.ndarray
    dummy_columns: tuple[int, ...] = ()

    @property
    def sparsity(self) -> list[int]:
        return self.gamma.sum(axis=0).astype(int).tolist()


def _terms_for(spec: SystemSpec) -> tuple[tuple[str, ...], list[dict]]:
    """Return variable names and, per equation, a mapping exponent-tuple -> coefficient."""
    p = spec.params
    if spec.name == LORENZ3:
        a, rho, b = p["alpha"], p["rho"], p["beta"]
        return ("x", "y", "z"), [
            {(1, 0, 0): -a, (0, 1, 0): a},
            {(1, 0, 0): rho, (0, 1, 0): -1.0, (1, 0, 1): -1.0},
            {(0, 0, 1): -b, (1, 1, 0): 1.0},
        ]
    if spec.name == LORENZ96:
        J, F = int(p["J"]), p["F"]
        eqs = []
        for j in range(J):
            e = {}
            zero = (0,) * J
            e[zero] = F
            e[_mono(J, (j + 1) % J, (j - 1) % J)] = 1.0
            e[_mono(J, (j - 2) % J, (j - 1) % J)] = -1.0
            e[_mono(J, j)] = -1.0
            eqs.append(e)
        return spec.state_names, eqs
    if spec.name == HOPF:
        om, A = p["omega"], p["A"]
        return ("x", "y", "mu"), [
            {(0, 1, 0): -om, (1, 0, 1): 1.0, (3, 0, 0): A, (1, 2, 0): A},
            {(1, 0, 0): om, (0, 1, 1): 1.0, (2, 1, 0): A, (0, 3, 0): A},
            {},
        ]
    if spec.name == LOGISTIC:
        return ("x", "r"), [{(1, 1): 1.0, (2, 1): -1.0}, {(0, 1): 1.0}]
    if spec.name == CYLINDER:
        mu, om, A, lam = p["mu"], p["omega"], p["A"], p["lam"]
        return ("x", "y", "z"), [
            {(1, 0, 0): mu, (0, 1, 0): -om, (1, 0, 1): A},
            {(1, 0, 0): om, (0, 1, 0): mu, (0, 1, 1): A},
            {(0, 0, 1): -lam, (2, 0, 0): lam, (0, 2, 0): lam},
        ]
    raise ConfigurationError(spec.name)


def _mono(J, *idx):
    e = [0] * J
    for i in idx:
        e[i] += 1
    return tuple(e)


def ground_truth(spec: SystemSpec, dictionary_degree: int, include_constant: bool = True) -> GroundTruthModel:
    names, eqs = _terms_for(spec)
    d = build_dictionary(len(names), dictionary_degree, include_constant, names)
    lookup = {t: i for i, t in enumerate(d.terms)}
    missing = sorted({_label(t, names) for e in eqs for t in e if t not in lookup})
    if missing:
        raise ConfigurationError(f"degree {dictionary_degree} dictionary lacks true terms: {', '.join(missing)}")
    gamma = np.zeros((d.P, len(eqs)), dtype=int)
    xi = np.zeros((d.P, len(eqs)))
    for j, e in enumerate(eqs):
        for t, v in e.items():
            gamma[lookup[t], j] = 1
            xi[lookup[t], j] = v
    dummy = ()
    if spec.bifurcation_parameter is not None:
        dummy = (len(names) - 1,)
    return GroundTruthModel(d, gamma, xi, dummy)


def _label(t, names):
    from .dictionary import term_label

    return term_label(t, names)
