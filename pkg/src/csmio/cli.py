"""Command-line interface: generate, corrupt, differentiate, discover, evaluate, benchmark."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import systems
from .config import ConfigError, ExperimentConfig, load_config
from .derivatives import differentiate
from .evaluation import compare_trajectories, recovery_metric, simulate_model, table_report
from .noise import corrupt, snr
from .pipeline import SparseModel, discover, stlsq_baseline

log = logging.getLogger("csmio")

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2


class InputError(ValueError):
    pass


# -- workflow helpers ------------------------------------------------------------


def generate_clean(cfg: ExperimentConfig, seed: int, sigma_eta: float | None = None) -> systems.TrajectoryDataset:
    spec = cfg.system.spec()
    if sigma_eta is not None and spec.name == systems.LOGISTIC:
        spec = spec.with_params(sigma_eta=sigma_eta)
    s = cfg.system
    if spec.bifurcation_parameter is not None:
        return systems.bifurcation_stack(spec, x0=s.x0, dt=s.dt, t_end=s.t_end, steps=s.steps, seed=seed)
    x0 = s.x0 if s.x0 is not None else systems._default_x0(spec)
    return systems.integrate_ode(spec, np.asarray(x0, dtype=float), s.dt, s.t_end)


def forcing_snr(data: systems.TrajectoryDataset) -> float | None:
    eta = np.asarray(data.meta.get("forcing", ()), dtype=float)
    if eta.size < 2 or np.var(eta, ddof=1) == 0:
        return None
    return snr(data.Xdot[:, 0], eta)


def prepare(cfg: ExperimentConfig, seed: int, sigma: float) -> systems.TrajectoryDataset:
    """Clean data, noise and derivatives for one benchmark cell."""
    if cfg.system.name == systems.LOGISTIC:
        data = generate_clean(cfg, seed, sigma_eta=sigma)
        return data.with_(meta={**data.meta, "snr": forcing_snr(data)})
    data = corrupt(generate_clean(cfg, seed), cfg.noise.spec(seed, sigma))
    return derive(cfg, data)


def derive(cfg: ExperimentConfig, data: systems.TrajectoryDataset) -> systems.TrajectoryDataset:
    method = cfg.derivative.method
    if method == "measured":
        if data.Xdot is None:
            raise InputError("data has no derivatives; set derivative.method to 'tvd' or 'fd'")
        return data
    return differentiate(data, method, cfg.derivative.tvd(), alpha=cfg.derivative.alpha,
                         states=cfg.derivative.states)


def truth_for(cfg: ExperimentConfig):
    return systems.ground_truth(cfg.system.spec(), cfg.dictionary.degree, cfg.dictionary.include_constant)


def run_cell(cfg: ExperimentConfig, sigma: float, seed: int) -> dict:
    data = prepare(cfg, seed, sigma)
    dummies = tuple(data.meta.get("dummy_columns", ()))
    model = discover(data, cfg.pipeline(dummies))
    truth = truth_for(cfg)
    base, _ = stlsq_baseline(data, cfg.dictionary.degree, cfg.baseline.threshold, cfg.baseline.ridge,
                             cfg.baseline.iters, cfg.dictionary.include_constant, dummies)
    return {
        "sigma": sigma,
        "seed": seed,
        "snr": data.meta.get("snr"),
        "A_csmio": recovery_metric(model, truth).A,
        "A_baseline": recovery_metric(base, truth).A,
        "failed": model.failed_equations,
        "model": model.to_json(),
    }


# -- output helpers --------------------------------------------------------------


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_effective(out: Path, cfg: ExperimentConfig):
    _write(out / "config.effective.json", cfg.to_json())


def _manifest(out: Path | None, command: str, errors: list[dict]):
    doc = json.dumps({"command": command, "errors": errors}, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stderr.write(doc)
        return
    try:
        _write(out / "errors.json", doc)
    except OSError:
        sys.stderr.write(doc)


def _load_data(path) -> systems.TrajectoryDataset:
    if path is None:
        raise InputError("--data is required")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"data file {p} does not exist")
    try:
        return systems.TrajectoryDataset.from_csv(p)
    except (ValueError, KeyError, IndexError) as exc:
        raise InputError(f"{p}: unreadable trajectory CSV ({exc})") from None


# -- subcommands -----------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig, args, out: Path) -> int:
    seed = cfg.seeds[0]
    clean = generate_clean(cfg, seed)
    out.mkdir(parents=True, exist_ok=True)
    clean.to_csv(out / "clean.csv")
    if cfg.system.name != systems.LOGISTIC:
        noisy = corrupt(clean, cfg.noise.spec(seed))
        noisy.to_csv(out / "noisy.csv")
    _write_effective(out, cfg)
    return EXIT_OK


def cmd_corrupt(cfg: ExperimentConfig, args, out: Path) -> int:
    data = _load_data(args.data)
    out.mkdir(parents=True, exist_ok=True)
    corrupt(data, cfg.noise.spec(cfg.seeds[0])).to_csv(out / "noisy.csv")
    _write_effective(out, cfg)
    return EXIT_OK


def cmd_differentiate(cfg: ExperimentConfig, args, out: Path) -> int:
    data = _load_data(args.data)
    method = cfg.derivative.method if cfg.derivative.method != "measured" else "tvd"
    out.mkdir(parents=True, exist_ok=True)
    differentiate(data, method, cfg.derivative.tvd(), alpha=cfg.derivative.alpha,
                         states=cfg.derivative.states).to_csv(out / "differentiated.csv")
    _write_effective(out, cfg)
    return EXIT_OK


def cmd_discover(cfg: ExperimentConfig, args, out: Path) -> int:
    data = derive(cfg, _load_data(args.data))
    dummies = tuple(data.meta.get("dummy_columns", ()))
    model, tunings = discover(data, cfg.pipeline(dummies), return_tuning=True)
    _write(out / "model.json", model.to_json() + "\n")
    for j, tres in sorted(tunings.items()):
        _write(out / f"tuning_{data.column_names[j]}.csv", tres.to_csv())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["target", "k", "lambda2", "status", "cv_error", "screened", "message"])
    for d in model.diagnostics:
        w.writerow([d.target, d.k, repr(float(d.lambda2)), d.status, repr(float(d.cv_error)), d.screened, d.message])
    _write(out / "diagnostics.csv", buf.getvalue())
    _write_effective(out, cfg)
    failed = model.failed_equations
    if failed:
        _manifest(out, "discover", [{"where": model.targets[j], "type": "EquationFailed",
                                     "message": model.diagnostics[j].message} for j in failed])
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, args, out: Path) -> int:
    if args.model is None:
        raise InputError("--model is required")
    p = Path(args.model)
    if not p.is_file():
        raise InputError(f"model file {p} does not exist")
    try:
        model = SparseModel.from_json(p.read_text(encoding="utf-8"))
    except (ValueError, KeyError) as exc:
        raise InputError(f"{p}: unreadable model JSON ({exc})") from None
    spec = cfg.system.spec()
    truth = systems.ground_truth(spec, model.dictionary.degree, model.dictionary.include_constant)
    report = recovery_metric(model, truth)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["equation", "target", "exact"])
    for j, ok in sorted(report.matches.items()):
        w.writerow([j, model.targets[j], int(ok)])
    w.writerow(["A", "", report.A])
    _write(out / "recovery.csv", buf.getvalue())
    _write(out / "coefficients.csv", report.to_csv())
    if spec.kind == systems.CONTINUOUS and spec.bifurcation_parameter is None and not model.failed_equations:
        clean = generate_clean(cfg, cfg.seeds[0])
        sim = simulate_model(model, clean.X[0], cfg.system.dt, cfg.system.t_end)
        cmp_ = compare_trajectories(clean, sim)
        _write(out / "l2_error.csv", cmp_.error_csv())
        _write(out / "hovmoller.csv", cmp_.hovmoller_csv())
    _write_effective(out, cfg)
    return EXIT_OK


def cmd_benchmark(cfg: ExperimentConfig, args, out: Path) -> int:
    sigmas = cfg.noise.sigmas if cfg.noise.sigmas is not None else [cfg.noise.sigma]
    cells = [(s, seed) for seed in cfg.seeds for s in sigmas]
    results, errors = {}, []
    threads = max(1, int(args.threads or 1))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {c: pool.submit(run_cell, cfg, *c) for c in cells}
            for c, fut in futures.items():
                try:
                    results[c] = fut.result()
                except Exception as exc:  # recorded in the manifest
                    errors.append(_cell_error(c, exc))
    else:
        for c in cells:
            try:
                results[c] = run_cell(cfg, *c)
            except Exception as exc:  # recorded in the manifest
                errors.append(_cell_error(c, exc))
    tag = f"{cfg.system.name}_{'map' if cfg.system.name == systems.LOGISTIC else cfg.noise.noise_type}"
    for seed in cfg.seeds:
        rows = [results[(s, seed)] for s in sigmas if (s, seed) in results]
        if rows:
            table = table_report([(r["sigma"], _nan(r["snr"]), r["A_csmio"], r["A_baseline"]) for r in rows])
            _write(out / f"table_{tag}_seed{seed}.csv", table)
        for r in rows:
            _write(out / "models" / f"model_sigma{r['sigma']!r}_seed{seed}.json", r["model"] + "\n")
    _write_effective(out, cfg)
    if errors or any(r["failed"] for r in results.values()):
        errors += [{"where": f"sigma={r['sigma']!r},seed={r['seed']}", "type": "EquationFailed",
                    "message": f"equations {r['failed']} failed"} for r in results.values() if r["failed"]]
        _manifest(out, "benchmark", errors)
        return EXIT_PARTIAL
    return EXIT_OK


def _nan(v):
    return float("nan") if v is None else v


def _cell_error(cell, exc):
    return {"where": f"sigma={cell[0]!r},seed={cell[1]}", "type": type(exc).__name__, "message": str(exc)}


COMMANDS = {
    "generate": cmd_generate,
    "corrupt": cmd_corrupt,
    "differentiate": cmd_differentiate,
    "discover": cmd_discover,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csmio", description="Sparse equation discovery by exact subset selection.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="single seed overriding the config's seeds")
        p.add_argument("--threads", type=int, default=1, help="worker processes for benchmark cells")
        p.add_argument("--verbose", action="store_true")
        if name in ("corrupt", "differentiate", "discover"):
            p.add_argument("--data", help="trajectory CSV")
        if name == "evaluate":
            p.add_argument("--model", help="model JSON written by discover")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if args.out else None
    try:
        overrides = {"seeds": [args.seed]} if args.seed is not None else {}
        if args.out:
            overrides["output_dir"] = args.out
        cfg = load_config(args.config, overrides)
        out = Path(cfg.output_dir)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, InputError, systems.ConfigurationError) as exc:
        _manifest(out, args.command, [{"where": "input", "type": type(exc).__name__, "message": str(exc)}])
        log.error("%s", exc)
        return EXIT_INVALID
    except Exception as exc:  # unexpected: report and exit as a partial failure
        _manifest(out, args.command, [{"where": "run", "type": type(exc).__name__, "message": str(exc)}])
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
