"""Command-line front end: ``singular-green {classify,solve,verify,sweep,eigen}``.

Exit codes: 0 success, 2 invalid input or refused parameters, 3 converged but
the regime check (or a verification) failed, 4 solver failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Domain, GridFunction, build_graded_grid, default_grading
from .kernels import KernelSpec
from .operator import assemble
from .regimes import (A_ZERO, CASES, classify, fit_boundary_exponent, fit_log_power,
                      verify_green_lemma)
from .solvers import (PERTURBED, SOURCE, AdmissibilityError, EpsSchedule,
                      NonlinearitySpec, RegimeError, SolverError, check_source_admissible,
                      check_weak_dual, principal_eigenpair, solve, solve_pure)

log = logging.getLogger("singular_green")

EXIT_OK, EXIT_INVALID, EXIT_MISMATCH, EXIT_FAILED = 0, 2, 3, 4
EXP_TOL, LOG_TOL = 0.05, 0.15

SECTIONS = {
    "kernel": {"family", "s", "gamma", "N", "K"},
    "grid": {"M", "g"},
    "problem": {"mode", "q", "power", "lambda", "lambda_fraction", "kappa", "mu", "Lambda",
                "perturbation"},
    "schedule": {"eps0", "ratio", "eps_min", "newton_tol", "max_newton", "tol_outer", "max_outer"},
    "output": {"directory", "formats"},
    "fit": {"window"},
    "seed": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    kernel: dict
    grid: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "kernel" not in raw:
            raise ConfigError("config needs a 'kernel' section")
        for name, keys in SECTIONS.items():
            if keys is None or name not in raw:
                continue
            if not isinstance(raw[name], dict):
                raise ConfigError(f"section {name!r} must be an object")
            bad = set(raw[name]) - keys
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        cfg = cls(**{k: raw.get(k, {}) for k in SECTIONS if k != "seed"}, seed=seed)
        cfg.kernel_spec()  # re-validate cross-field constraints now
        cfg.eps_schedule()
        if cfg.problem:
            cfg.nonlinearity(None)
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def as_dict(self):
        return {"kernel": self.kernel, "grid": self.grid, "problem": self.problem,
                "schedule": self.schedule, "output": self.output, "fit": self.fit, "seed": self.seed}

    def kernel_spec(self) -> KernelSpec:
        try:
            return KernelSpec(self.kernel.get("family", "rfl_interval"), float(self.kernel["s"]),
                              self.kernel.get("gamma"), int(self.kernel.get("N", 1)),
                              int(self.kernel.get("K", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid kernel section: {exc}") from exc

    def build_grid(self, spec: KernelSpec):
        M = int(self.grid.get("M", 1024))
        g = self.grid.get("g")
        g = default_grading(spec.gamma) if g is None else float(g)
        try:
            return build_graded_grid(spec.domain, M, g)
        except ValueError as exc:
            raise ConfigError(f"invalid grid section: {exc}") from exc

    def eps_schedule(self) -> EpsSchedule:
        try:
            return EpsSchedule(**self.schedule)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid schedule section: {exc}") from exc

    def nonlinearity(self, grid, lam=None) -> NonlinearitySpec:
        p = self.problem
        mode = p.get("mode", "pure")
        pert = None
        if mode == PERTURBED:
            if grid is None:
                # load-time validation only: shape-check against a placeholder grid
                spec = self.kernel_spec()
                M = int(self.grid.get("M", 1024))
                grid = build_graded_grid(spec.domain, M, 1.0)
            pert = _perturbation(p.get("perturbation"), grid, self.kernel_spec().gamma)
        try:
            return NonlinearitySpec(
                q=float(p["q"]), mode=mode, power=p.get("power"),
                lam=float(lam if lam is not None else p.get("lambda", 0.0) or 0.0),
                kappa=p.get("kappa"), mu=p.get("mu"), Lambda=p.get("Lambda"),
                perturbation=pert)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid problem section: {exc}") from exc

    def window(self):
        w = self.fit.get("window")
        return tuple(w) if w is not None else None


def _perturbation(desc, grid, gamma):
    if desc is None:
        raise ConfigError("perturbed mode needs problem.perturbation")
    if isinstance(desc, dict) and desc.get("kind", "delta_gamma") == "delta_gamma":
        return GridFunction(grid, float(desc.get("scale", 1.0)) * grid.delta ** gamma, "f")
    if isinstance(desc, list) and len(desc) == grid.M:
        return GridFunction(grid, np.asarray(desc, float), "f")
    raise ConfigError("perturbation must be {'kind': 'delta_gamma', 'scale': c} or a list of M values")


# ---------------------------------------------------------------------------
# output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_solution_csv(path: Path, u: GridFunction):
    grid = u.grid
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "delta", "u", "weight"])
        for i in range(grid.M):
            w.writerow([i] + [format(float(v), ".17g") for v in
                              (grid.x[i], grid.delta[i], u.values[i], grid.weights[i])])


def _outdir(args, cfg=None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg is not None and cfg.output.get("directory"):
        return Path(cfg.output["directory"])
    return Path("singular_green_out")


# ---------------------------------------------------------------------------
# regime check of a solution

def regime_check(u: GridFunction, report, window=None) -> dict:
    gamma = report.exponents.gamma
    out = {"regime": report.regime, "predicted_exponent": report.exponent,
           "predicted_log_power": report.log_power}
    if report.regime == A_ZERO:
        joint = fit_boundary_exponent(u, window, joint_log=True)
        lp = fit_log_power(u, gamma, window)
        out.update(fitted_exponent=joint.theta, fitted_log_power=lp.log_power, r2=joint.r2,
                   window=joint.window)
        match = abs(joint.theta - report.exponent) <= EXP_TOL
        if report.log_power is not None:
            match &= abs(lp.log_power - report.log_power) <= LOG_TOL
    else:
        fit = fit_boundary_exponent(u, window)
        lp = fit_log_power(u, fit.theta, window)
        out.update(fitted_exponent=fit.theta, fitted_log_power=lp.log_power, r2=fit.r2,
                   window=fit.window, c_low=fit.c_low, c_high=fit.c_high)
        match = abs(fit.theta - report.exponent) <= EXP_TOL
    out["match"] = bool(match)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_classify(args) -> int:
    try:
        rep = classify(args.s, args.gamma, args.q)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    ce = rep.exponents
    payload = {"s": ce.s, "gamma": ce.gamma, "q": ce.q, "q_star": ce.q_star,
               "q_star_star": ce.q_star_star, "alpha": ce.alpha, "beta": ce.beta,
               "in_E": rep.in_E, "reason": rep.reason, "class": rep.regime,
               "exponent": rep.exponent, "log_power": rep.log_power,
               "log_power_bounds": rep.log_power_bounds}
    print(json.dumps(_jsonable(payload), sort_keys=True))
    return EXIT_OK


def _load(args):
    cfg = RunConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def cmd_solve(args) -> int:
    out = _outdir(args)
    try:
        cfg = _load(args)
        out = _outdir(args, cfg)
        if not cfg.problem:
            raise ConfigError("solve needs a 'problem' section")
        spec = cfg.kernel_spec()
        grid = cfg.build_grid(spec)
        schedule = cfg.eps_schedule()
        q = float(cfg.problem["q"])
    except (ConfigError, KeyError, ValueError) as exc:
        write_json(out / "report.json", {"status": "invalid", "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    report = {"config": cfg.as_dict(), "seed": cfg.seed}
    verdict = classify(spec.s, spec.gamma, q)
    report["regime"] = verdict.as_dict()
    if not verdict.solvable:
        report.update(status="refused", error=verdict.reason)
        write_json(out / "report.json", report)
        print(f"refused: {verdict.reason}", file=sys.stderr)
        return EXIT_INVALID
    t0 = time.perf_counter()
    Gm = assemble(spec, grid)
    report["assembly"] = {"scheme": Gm.meta["scheme"]}
    try:
        lam = None
        if cfg.problem.get("mode") == SOURCE and "lambda_fraction" in cfg.problem:
            pure = solve_pure(Gm, q, schedule)
            probe = cfg.nonlinearity(grid, lam=0.0)
            adm = check_source_admissible(probe, pure.S1, pure.S2)
            bound = adm.get("C_Lambda", adm.get("lambda_star"))
            lam = float(cfg.problem["lambda_fraction"]) * bound
        nl = cfg.nonlinearity(grid, lam=lam)
        result = solve(Gm, nl, schedule)
    except AdmissibilityError as exc:
        report.update(status="inadmissible", error=str(exc), admissibility=exc.report)
        write_json(out / "report.json", report)
        print(f"inadmissible: {exc} {json.dumps(_jsonable(exc.report))}", file=sys.stderr)
        return EXIT_INVALID
    except (RegimeError, ConfigError, ValueError) as exc:
        report.update(status="invalid", error=str(exc))
        write_json(out / "report.json", report)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        report.update(status="failed", error=str(exc), trace=exc.trace)
        write_json(out / "report.json", report)
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_FAILED
    wall = time.perf_counter() - t0
    wd = check_weak_dual(Gm, result, q, test_count=10, seed=cfg.seed)
    check = regime_check(result.u, verdict, cfg.window())
    report.update(status="converged", iterations=result.trace,
                  weak_dual={"max_gap": wd["max_gap"], "seed": wd["seed"],
                             "test_count": wd["test_count"]},
                  fit=check, verdict="match" if check["match"] else "mismatch",
                  S1=result.S1, S2=result.S2, extras=result.extras)
    formats = cfg.output.get("formats", ["csv", "json"])
    if "csv" in formats:
        write_solution_csv(out / "solution.csv", result.u)
    write_json(out / "report.json", report)
    # wall time lives apart from report.json so that reruns stay byte-identical
    write_json(out / "timing.json", {"wall_time": wall, "solve_time": result.wall_time,
                                     "assembly_time": Gm.meta["assembly_seconds"]})
    print(json.dumps(_jsonable({"verdict": report["verdict"], **check}), sort_keys=True))
    return EXIT_OK if check["match"] else EXIT_MISMATCH


def _verify_spec(args, cfg):
    if cfg is not None:
        return cfg.kernel_spec(), cfg
    family = args.kernel or ("synthetic" if args.gamma is not None else "rfl_interval")
    s = args.s if args.s is not None else (0.4 if family == "synthetic" else 0.25)
    gamma = args.gamma
    if family == "synthetic" and gamma is None:
        gamma = 0.5
    spec = KernelSpec(family, s, gamma if family == "synthetic" else None, args.N or
                      (2 if family == "rfl_ball_radial" else 1))
    grid = {"M": args.M or (64 if spec.radial else 512)}
    return spec, RunConfig(kernel={"family": family, "s": s, "gamma": spec.gamma, "N": spec.N},
                           grid=grid, seed=args.seed or 0)


def cmd_verify(args) -> int:
    out = _outdir(args)
    try:
        cfg = _load(args) if args.config else None
        spec, cfg = _verify_spec(args, cfg)
        out = _outdir(args, cfg)
        if args.M:
            cfg.grid["M"] = args.M
        grid = cfg.build_grid(spec)
    except (ConfigError, ValueError) as exc:
        write_json(out / "report.json", {"status": "invalid", "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    Gm = assemble(spec, grid)
    try:
        rep = verify_green_lemma(Gm, args.case, seed=cfg.seed)
    except ValueError as exc:
        write_json(out / "report.json", {"status": "invalid", "case": args.case, "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_json(out / "report.json", rep)
    print(json.dumps(_jsonable({"case": rep["case"], "passed": rep["passed"],
                                "diagnostic": rep["diagnostic"]}), sort_keys=True))
    return EXIT_OK if rep["passed"] else EXIT_MISMATCH


SWEEP_COLUMNS = ["value", "predicted_exponent", "fitted_exponent", "predicted_log_power",
                 "fitted_log_power", "regime", "converged"]


def _parse_values(text):
    vals = [v for v in (text or "").split(",") if v.strip()]
    if not vals:
        raise ConfigError("empty value list")
    return [float(v) for v in vals]


def cmd_sweep(args) -> int:
    out = _outdir(args)
    try:
        cfg = _load(args)
        out = _outdir(args, cfg)
        values = _parse_values(args.values)
        if args.param not in ("q", "gamma", "s"):
            raise ConfigError(f"cannot sweep {args.param!r}; choose q, gamma or s")
        schedule = cfg.eps_schedule()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    rows = []
    cache = {}
    for v in values:
        row = dict.fromkeys(SWEEP_COLUMNS, "")
        row.update(value=v, converged=False)
        try:
            kern = dict(cfg.kernel)
            q = float(cfg.problem.get("q", 1.0))
            if args.param == "q":
                q = v
            else:
                kern[args.param] = v
            spec = RunConfig(kernel=kern).kernel_spec()
            key = json.dumps(spec.key(), sort_keys=True)
            if key not in cache:
                cache = {key: assemble(spec, cfg.build_grid(spec))}
            Gm = cache[key]
            verdict = classify(spec.s, spec.gamma, q)
            row.update(regime=verdict.regime, predicted_exponent=verdict.exponent,
                       predicted_log_power=verdict.log_power)
            if verdict.solvable:
                res = solve_pure(Gm, q, schedule)
                check = regime_check(res.u, verdict, cfg.window())
                row.update(fitted_exponent=check["fitted_exponent"],
                           fitted_log_power=check["fitted_log_power"], converged=True)
        except (ValueError, SolverError, ConfigError) as exc:
            row["regime"] = row["regime"] or f"error: {exc}"
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (format(v, ".17g") if isinstance(v, float) else
                            ("" if v is None else v)) for k, v in row.items()})
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_eigen(args) -> int:
    out = _outdir(args)
    try:
        cfg = _load(args)
        out = _outdir(args, cfg)
        spec = cfg.kernel_spec()
        grid = cfg.build_grid(spec)
    except (ConfigError, ValueError) as exc:
        write_json(out / "report.json", {"status": "invalid", "error": str(exc)})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    Gm = assemble(spec, grid)
    try:
        eig = principal_eigenpair(Gm)
    except SolverError as exc:
        write_json(out / "report.json", {"status": "failed", "error": str(exc)})
        return EXIT_FAILED
    fit = fit_boundary_exponent(eig.phi, cfg.window())
    rep = {"config": cfg.as_dict(), "lambda1": eig.lambda1, "residual": eig.residual,
           "iterations": eig.iterations, "fitted_exponent": fit.theta, "r2": fit.r2,
           "predicted_exponent": spec.gamma, "status": "converged"}
    write_json(out / "report.json", rep)
    print(json.dumps(_jsonable({k: rep[k] for k in ("lambda1", "residual", "fitted_exponent")}),
                     sort_keys=True))
    return EXIT_OK if eig.residual < 1e-8 else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="singular-green", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="critical exponents and boundary class")
    c.add_argument("--s", type=float, required=True)
    c.add_argument("--gamma", type=float, required=True)
    c.add_argument("--q", type=float, required=True)
    c.set_defaults(func=cmd_classify)

    for name, func, help_ in (("solve", cmd_solve, "solve a configured problem"),
                              ("eigen", cmd_eigen, "principal eigenpair")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--config", required=True)
        c.add_argument("--seed", type=int)
        c.add_argument("--out")
        c.set_defaults(func=func)

    c = sub.add_parser("verify", help="check a Green-operator lemma")
    c.add_argument("--case", required=True, choices=CASES)
    c.add_argument("--config")
    c.add_argument("--kernel", choices=["synthetic", "rfl_interval", "rfl_ball_radial", "sfl_interval"])
    c.add_argument("--s", type=float)
    c.add_argument("--gamma", type=float)
    c.add_argument("--N", type=int)
    c.add_argument("--M", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_verify)

    c = sub.add_parser("sweep", help="fitted vs predicted exponents over a parameter")
    c.add_argument("--config", required=True)
    c.add_argument("--param", required=True)
    c.add_argument("--values", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
