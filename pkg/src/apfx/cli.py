"""Config-driven experiment runner.

Subcommands: solve, scheme, check-op, tightness, localize.  Every run is a
pure function of the config file (plus --seed/--output overrides), so repeated
invocations produce bit-identical artifacts; --threads is accepted for
interface stability and cannot change results because all scenario math is
vectorized single-threaded numpy.

Exit codes: 0 ok, 1 config error, 2 numerical flag (non-convergence or
degenerate data), 3 property violation.
"""

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ApfxError, ConfigError, DegenerateDataError
from .fixpoint import (BoxGrowth, SchemeConfig, run_scheme, save_scheme_result,
                       strong_limit_probe)
from .operators import (Coefficient, Operator, adaptedness_sweep, apply,
                        constant_operator, demo_anticipating_endpoint,
                        demo_nonlocal_mean, identity_operator, ito_integral,
                        lebesgue_integral, locality_check, state_coefficient,
                        superposition)
from .pathspace import (constant_ensemble, ensemble_from_values, make_grid,
                        sample_driver, save_ensemble)
from .projective import CompactBox, make_level
from .problems import as_operator, preset, solve_localized
from .rng import substream
from .tightness import (calibrate_compact, kolmogorov_estimate, modulus_report,
                        tight_set_probe, uniform_continuity_probe)
from .youngdiag import narrow_stats, test_battery, weak_summary


# -- configuration -------------------------------------------------------------

def _from_mapping(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = data[f.name]
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{where}: missing required key {f.name!r}")
    return cls(**kwargs)


@dataclass(frozen=True)
class GridConfig:
    a: float
    b: float
    N: int


@dataclass(frozen=True)
class MonteCarloConfig:
    M: int
    seed: int
    d_w: int = 1


@dataclass(frozen=True)
class ProblemConfig:
    preset: str | None = None
    params: dict = field(default_factory=dict)
    operator: str | None = None


@dataclass(frozen=True)
class BoxConfig:
    rule: str = "radius_growth"      # "radius_growth" | "fixed"
    base_radius: float = 1.0
    center: float | None = None      # default: the problem's x0
    lo: float = -1.0                 # fixed rule only
    hi: float = 1.0


@dataclass(frozen=True)
class SchemeSection:
    levels: tuple
    box: BoxConfig = field(default_factory=BoxConfig)
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 200
    seed: int = 0


@dataclass(frozen=True)
class TightnessSection:
    deltas: tuple = (0.25, 0.125, 0.0625)
    sigma: float = 0.05
    quantile: float = 0.99
    rho_values: tuple = (0.4, 0.2, 0.1, 0.05)
    trials: int = 4
    family_count: int = 4
    family_bound: float = 1.0
    pair_count: int = 64
    probe_seed_offset: int = 1000


@dataclass(frozen=True)
class DiagnosticsSection:
    battery_count: int = 8
    battery_seed: int = 0
    check_trials: int = 200
    check_m: int = 32
    tightness: TightnessSection = field(default_factory=TightnessSection)


@dataclass(frozen=True)
class LocalizationSection:
    radii: tuple = ()


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig
    monte_carlo: MonteCarloConfig
    problem: ProblemConfig
    scheme: SchemeSection
    output_dir: str
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    localization: LocalizationSection = field(default_factory=LocalizationSection)

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        known = {"grid", "monte_carlo", "problem", "scheme", "output_dir",
                 "diagnostics", "localization"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        for key in ("grid", "monte_carlo", "problem", "scheme", "output_dir"):
            if key not in data:
                raise ConfigError(f"config: missing required section {key!r}")
        scheme_data = dict(data["scheme"])
        box = _from_mapping(BoxConfig, scheme_data.pop("box", {}), "scheme.box")
        scheme_data["box"] = box
        scheme_data["levels"] = tuple(scheme_data.get("levels", ()))
        diag_data = dict(data.get("diagnostics", {}))
        tight = _from_mapping(TightnessSection, diag_data.pop("tightness", {}),
                              "diagnostics.tightness")
        tight = dataclasses.replace(tight, deltas=tuple(tight.deltas),
                                    rho_values=tuple(tight.rho_values))
        diag_data["tightness"] = tight
        loc_data = dict(data.get("localization", {}))
        loc = _from_mapping(LocalizationSection, loc_data, "localization")
        loc = dataclasses.replace(loc, radii=tuple(loc.radii))
        cfg = ExperimentConfig(
            grid=_from_mapping(GridConfig, data["grid"], "grid"),
            monte_carlo=_from_mapping(MonteCarloConfig, data["monte_carlo"], "monte_carlo"),
            problem=_from_mapping(ProblemConfig, data["problem"], "problem"),
            scheme=_from_mapping(SchemeSection, scheme_data, "scheme"),
            output_dir=str(data["output_dir"]),
            diagnostics=_from_mapping(DiagnosticsSection, diag_data, "diagnostics"),
            localization=loc,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self):
        g, mc, s = self.grid, self.monte_carlo, self.scheme
        if not g.b > g.a:
            raise ConfigError(f"grid: need b > a, got [{g.a}, {g.b}]")
        if g.N < 1:
            raise ConfigError("grid: need N >= 1")
        if mc.M < 1 or mc.d_w < 1:
            raise ConfigError("monte_carlo: need M >= 1 and d_w >= 1")
        if not s.levels:
            raise ConfigError("scheme: levels must be a nonempty list of n values")
        ns = list(s.levels)
        if ns != sorted(set(ns)) or any(n < 1 for n in ns):
            raise ConfigError(f"scheme: levels must be strictly increasing positive, got {ns}")
        for n in ns:
            if g.N % n != 0:
                raise ConfigError(f"scheme: level n={n} does not divide grid N={g.N}")
        if not 0.0 < s.damping <= 1.0:
            raise ConfigError("scheme: damping must be in (0, 1]")
        if s.tol <= 0 or s.max_iter < 1:
            raise ConfigError("scheme: need tol > 0 and max_iter >= 1")
        if s.box.rule not in ("radius_growth", "fixed"):
            raise ConfigError(f"scheme.box: unknown rule {s.box.rule!r}")
        if s.box.rule == "fixed" and not s.box.lo <= s.box.hi:
            raise ConfigError("scheme.box: need lo <= hi")
        if (self.problem.preset is None) == (self.problem.operator is None):
            raise ConfigError("problem: exactly one of 'preset' or 'operator' required")
        if self.diagnostics.battery_count < 1:
            raise ConfigError("diagnostics: battery_count must be >= 1")
        radii = list(self.localization.radii)
        if radii and (radii != sorted(set(radii)) or any(r <= 0 for r in radii)):
            raise ConfigError("localization: radii must be strictly increasing positive")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


# -- operator registry (named specs for check-op / tightness) -------------------

def _square_operator() -> Operator:
    return superposition(state_coefficient("square", lambda x: x * x))


def _driver_reader() -> Operator:
    return superposition(Coefficient("driver_value", lambda t, x, w: w[:, :, 0:1] * np.ones_like(x)))


OPERATOR_REGISTRY = {
    "identity": identity_operator,
    "square": _square_operator,
    "ito": ito_integral,
    "lebesgue": lebesgue_integral,
    "driver_value": _driver_reader,
    "constant_unit": lambda: constant_operator(1.0),
    "nonlocal_mean": demo_nonlocal_mean,
    "anticipating_endpoint": demo_anticipating_endpoint,
}


def operator_from_config(problem: ProblemConfig) -> tuple[Operator, float | None]:
    """Build (operator, x0-or-None) from the problem section."""
    if problem.preset is not None:
        prob = preset(problem.preset, **problem.params)
        return as_operator(prob), float(np.asarray(prob.x0).reshape(-1)[0])
    name = problem.operator
    if name not in OPERATOR_REGISTRY:
        raise ConfigError(f"problem: unknown operator {name!r}; "
                          f"known: {sorted(OPERATOR_REGISTRY)}")
    return OPERATOR_REGISTRY[name](), None


# -- csv helpers ----------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


# -- subcommands ----------------------------------------------------------------

def _scheme_inputs(cfg: ExperimentConfig):
    grid = make_grid(cfg.grid.a, cfg.grid.b, cfg.grid.N)
    driver = sample_driver(grid, cfg.monte_carlo.M, cfg.monte_carlo.d_w, cfg.monte_carlo.seed)
    if cfg.problem.preset is None:
        raise ConfigError("this subcommand needs problem.preset (an initial value)")
    prob = preset(cfg.problem.preset, **cfg.problem.params)
    h = as_operator(prob)
    x_init = constant_ensemble(grid, driver.M, prob.d, prob.x0)
    box_cfg = cfg.scheme.box
    if box_cfg.rule == "fixed":
        box_rule = CompactBox.uniform(grid, prob.d, box_cfg.lo, box_cfg.hi)
    else:
        center = box_cfg.center if box_cfg.center is not None else prob.x0
        box_rule = BoxGrowth(center=center, base_radius=box_cfg.base_radius)
    scheme_cfg = SchemeConfig(levels=tuple(make_level(grid, n) for n in cfg.scheme.levels),
                              box_rule=box_rule, damping=cfg.scheme.damping,
                              tol=cfg.scheme.tol, max_iter=cfg.scheme.max_iter,
                              seed=cfg.scheme.seed)
    return grid, driver, prob, h, x_init, scheme_cfg


def _write_summary(out: Path, grid, summary):
    d = summary.node_mean.shape[1]
    header = ["node_index", "time"]
    for i in range(d):
        header += [f"mean_{i}", f"mean_se_{i}", f"var_{i}", f"var_se_{i}"]
    rows = []
    for k in range(grid.N + 1):
        row = [k, float(grid.nodes[k])]
        for i in range(d):
            row += [summary.node_mean[k, i], summary.node_mean_se[k, i],
                    summary.node_var[k, i], summary.node_var_se[k, i]]
        rows.append(row)
    _write_csv(out / "summary.csv", header, rows)
    _write_csv(out / "exceedance.csv", ["R", "fraction"], list(summary.exceedance))


def cmd_solve(cfg: ExperimentConfig, with_narrow: bool = False) -> int:
    grid, driver, prob, h, x_init, scheme_cfg = _scheme_inputs(cfg)
    result = run_scheme(h, scheme_cfg, driver, x_init)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_scheme_result(result, out)
    final = result.alphas[-1]
    save_ensemble(final, out / "solution.bin")
    _write_summary(out, grid, weak_summary(final, driver))
    if with_narrow:
        battery = test_battery(grid, prob.d, cfg.diagnostics.battery_count,
                               cfg.diagnostics.battery_seed)
        table = narrow_stats(result, driver, battery)
        _write_csv(out / "narrow.csv", ["functional", "n", "estimate", "se", "diff"],
                   [[r.functional, r.n, r.estimate, r.std_error,
                     "" if r.diff is None else repr(r.diff)] for r in table.rows])
        _write_csv(out / "narrow_flags.csv", ["functional", "decreasing_ok"],
                   [[name, int(ok)] for name, ok in table.flags.items()])
        probe = strong_limit_probe(result)
        _write_csv(out / "strong_limit.csv", ["n_from", "n_to", "distance", "verdict"],
                   [[i, j, dist, probe.verdict] for i, j, dist in probe.consecutive])
    return 0 if all(result.converged) else 2


def cmd_check_op(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.a, cfg.grid.b, cfg.grid.N)
    op, _ = operator_from_config(cfg.problem)
    diag = cfg.diagnostics
    M, seed, d_w = diag.check_m, cfg.monte_carlo.seed, cfg.monte_carlo.d_w
    driver = sample_driver(grid, M, d_w, seed)
    d = 1
    xv = np.empty((M, grid.N + 1, d))
    yv = np.empty((M, grid.N + 1, d))
    for m in range(M):
        xv[m] = substream(seed, 7001, m).standard_normal((grid.N + 1, d))
        yv[m] = substream(seed, 7002, m).standard_normal((grid.N + 1, d))
    x, y = ensemble_from_values(grid, xv), ensemble_from_values(grid, yv)
    loc = locality_check(op, x, y, driver, trials=diag.check_trials, seed=seed)
    adapted = adaptedness_sweep(op, grid, M, d, d_w, trials=2, seed=seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [["locality", "", loc.trials, loc.failures,
             "" if loc.first_counterexample is None else repr(loc.first_counterexample)]]
    rows += [["adaptedness", rep.k_split, rep.trials, rep.failures,
              "" if rep.first_counterexample is None else repr(rep.first_counterexample)]
             for rep in adapted]
    _write_csv(out / "check_op.csv", ["check", "param", "trials", "failures", "counterexample"],
               rows)
    ok = loc.passed and all(rep.passed for rep in adapted)
    return 0 if ok else 3


def cmd_tightness(cfg: ExperimentConfig) -> int:
    grid = make_grid(cfg.grid.a, cfg.grid.b, cfg.grid.N)
    op, _ = operator_from_config(cfg.problem)
    mc, tight = cfg.monte_carlo, cfg.diagnostics.tightness
    if tight.family_count < 1:
        raise DegenerateDataError("tightness: need family_count >= 1")

    def bounded_family(seed_tag: int):
        outs = []
        for i in range(tight.family_count):
            drv = sample_driver(grid, mc.M, mc.d_w, seed_tag + i)
            u = np.clip(drv.paths[:, :, :1], -tight.family_bound, tight.family_bound)
            outs.append(apply(op, ensemble_from_values(grid, u), drv))
        return outs

    calib_outputs = bounded_family(mc.seed + tight.probe_seed_offset)
    probe_outputs = bounded_family(mc.seed + 2 * tight.probe_seed_offset)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    mod_rows = modulus_report(probe_outputs[0], tight.deltas)
    _write_csv(out / "modulus.csv", ["delta", "median", "q95"],
               [[r.delta, r.median, r.q95] for r in mod_rows])

    fit = kolmogorov_estimate(probe_outputs[0], tight.pair_count, mc.seed)
    _write_csv(out / "kolmogorov.csv",
               ["gap", "estimate", "se", "fitted_exponent", "fitted_constant", "r2", "degenerate"],
               [[fit.pairs[p, 0], fit.pairs[p, 1], fit.pair_se[p],
                 fit.fitted_exponent, fit.fitted_constant, fit.r2, int(fit.degenerate)]
                for p in range(fit.pairs.shape[0])])

    R, pairs = calibrate_compact(calib_outputs, tight.deltas, tight.quantile)
    report = tight_set_probe(probe_outputs, R, pairs, tight.sigma)
    header = ["sigma", "sup_bound", "exceedance"]
    row = [report.sigma, R, report.exceedance]
    for i, (delta, eta) in enumerate(pairs):
        header += [f"delta_{i}", f"eta_{i}"]
        row += [delta, eta]
    _write_csv(out / "tightprobe.csv", header, [row])

    box = CompactBox.uniform(grid, 1, -tight.family_bound, tight.family_bound)
    probe_driver = sample_driver(grid, mc.M, mc.d_w, mc.seed)
    cont = uniform_continuity_probe(op, box, tight.rho_values, tight.trials,
                                    probe_driver, mc.seed)
    _write_csv(out / "ucontinuity.csv", ["rho", "max_distance"],
               [[r.rho, r.max_distance] for r in cont])
    return 0


def cmd_localize(cfg: ExperimentConfig) -> int:
    grid, driver, prob, h, x_init, scheme_cfg = _scheme_inputs(cfg)
    radii = cfg.localization.radii
    if not radii:
        raise ConfigError("localization: radii required for the localize subcommand")
    path, nodes, exited = solve_localized(prob, radii, driver, scheme_cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_ensemble(path, out / "solution.bin")
    _write_csv(out / "stopping.csv", ["scenario", "stopping_node", "stopping_time", "exited"],
               [[m, int(nodes[m]), float(grid.nodes[nodes[m]]), int(exited[m])]
                for m in range(driver.M)])
    return 0


# -- entry point ----------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apfx",
                                description="Monte-Carlo fixed-point experiments on adapted path ensembles")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in [("solve", "run the projection scheme and summarize the solution"),
                            ("scheme", "solve plus narrow-convergence and strong-limit diagnostics"),
                            ("check-op", "locality and adaptedness property checks"),
                            ("tightness", "tightness/regularity/continuity probes"),
                            ("localize", "radius-ladder localization with stopping times")]:
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to the JSON config")
        sp.add_argument("--output", default=None, help="override config output_dir")
        sp.add_argument("--seed", type=int, default=None, help="override monte_carlo.seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker hint; results never depend on it")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.output is not None:
            cfg = dataclasses.replace(cfg, output_dir=args.output)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, monte_carlo=dataclasses.replace(
                cfg.monte_carlo, seed=args.seed))
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "scheme":
            return cmd_solve(cfg, with_narrow=True)
        if args.command == "check-op":
            return cmd_check_op(cfg)
        if args.command == "tightness":
            return cmd_tightness(cfg)
        if args.command == "localize":
            return cmd_localize(cfg)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DegenerateDataError as exc:
        print(f"degenerate data: {exc}", file=sys.stderr)
        return 2
    except ApfxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
