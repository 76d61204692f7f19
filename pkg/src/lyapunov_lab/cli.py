"""Command-line experiment runner.

Every experiment writes three files into ``--out``:

* ``trace.csv``: header row then one row per snapshot, 17 significant digits;
* ``audit.json``: verdicts and summary numbers, all recomputable from the CSV;
* ``plot_spec.txt``: which columns to plot against which.

Exit codes: 0 success, 2 configuration error, 3 runtime violation.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import observed_orders, polynomial_limit, richardson_limit
from .config import KINDS, ConfigError, ExperimentConfig, default_config, load_config
from .fields import BoundaryCondition, Grid, ScalarField
from .functionals import VelocityGrid, free_energy_canonical, ldf_increment_array, ldf_zrp, s_local_equilibrium
from .kinetic import KineticState, MomentMatchingError, moments, step_bgk
from .models import UnknownModel, list_models, resolve_kappa, resolve_rate, resolve_sigma, resolve_thermo
from .transport import (
    HeatProblem,
    StabilityError,
    ZrpPdeProblem,
    evolve_heat,
    evolve_zrp_pde,
    heat_audit,
    lyapunov_report,
    stationary_profile,
)
from .zrp import (
    ZrpModel,
    ZrpState,
    check_product_measure,
    ldf_empirical,
    ness_density_profile,
    sigma_from_rates,
    simulate,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class RunError(RuntimeError):
    """A precondition failed while the experiment was running."""


@dataclasses.dataclass
class Result:
    columns: dict
    audit: dict
    plots: list
    extra: dict = dataclasses.field(default_factory=dict)


# ---------------------------------------------------------------------------
# helpers


def _rng(cfg: ExperimentConfig) -> np.random.Generator:
    return np.random.default_rng([cfg.seed or 0, cfg.initial.seed_offset])


def _shape(cfg: ExperimentConfig, x: np.ndarray) -> np.ndarray:
    """Relative perturbation profile in ``(-1, 1)`` scaled by the amplitude."""
    ini = cfg.initial
    if ini.profile == "uniform":
        base = np.zeros_like(x)
    elif ini.profile == "sin":
        base = np.sin(ini.mode * np.pi * x)
    elif ini.profile == "step":
        base = np.where(x < 0.5, 1.0, -1.0)
    else:
        base = _rng(cfg).uniform(-1.0, 1.0, size=x.shape)
    return ini.amplitude * base


def _grid(cfg: ExperimentConfig, cells: int | None = None) -> Grid:
    return Grid.uniform(cells or cfg.grid.cells, cfg.grid.length)


def _orders(ns, errs) -> list:
    return [None if not np.isfinite(o) else float(o) for o in observed_orders(ns, errs)]


# ---------------------------------------------------------------------------
# heat flow


def _heat_problem(cfg: ExperimentConfig, cells: int | None = None) -> tuple[HeatProblem, ScalarField]:
    grid = _grid(cfg, cells)
    thermo = resolve_thermo(cfg.model.thermo)
    kappa = resolve_kappa(cfg.model.kappa)
    if cfg.kind == "heat-bath":
        bc = BoundaryCondition.uniform_dirichlet(cfg.model.bath_temperature)
    else:
        bc = BoundaryCondition.zero_flux()
    p = HeatProblem(grid, thermo, kappa, bc, dt_safety=cfg.time.dt_safety)
    x = grid.centers() / cfg.grid.length
    T0 = cfg.initial.value * (1.0 + _shape(cfg, x))
    return p, ScalarField(grid, thermo.energy(T0))


def _run_heat(cfg: ExperimentConfig, sweep: bool) -> Result:
    T_bath = cfg.model.bath_temperature if cfg.kind == "heat-bath" else None
    p, e0 = _heat_problem(cfg)
    trace = evolve_heat(p, e0, cfg.time.t_final, dt=cfg.time.dt, record_every=cfg.time.record_every, T_bath=T_bath)
    cols = {"t": np.asarray(trace.times)}
    for k in ("S_le", "E", "dS_dt", "boundary_term", "bulk_production", "F_canonical"):
        if k in trace.columns:
            cols[k] = trace.column(k)
    audit = heat_audit(trace, T_bath)
    fn = "F_canonical" if T_bath is not None else "S_le"
    plots = [("t", fn), ("t", "bulk_production"), ("t", "boundary_term")]
    extra = {}
    if sweep:
        ns = list(cfg.sweep.cells)
        res = []
        for n in ns:
            pn, en = _heat_problem(cfg, n)
            tr = evolve_heat(pn, en, cfg.time.t_final, record_every=1, T_bath=T_bath)
            a = heat_audit(tr, T_bath)
            res.append(a.get("max_rate_residual", a["energy_drift"]))
        sweep_rep = dict(cells=ns, max_residual=res, orders=_orders(ns, res))
        if len(ns) >= 3:
            try:
                lim, order = richardson_limit(ns, res)
                sweep_rep.update(extrapolated_residual=lim, extrapolation_order=order,
                                 extrapolated_residual_even_powers=polynomial_limit(ns, res))
            except ValueError:
                pass
        audit["resolution_sweep"] = sweep_rep
        extra["sweep.csv"] = {"cells": np.asarray(ns, dtype=float), "max_residual": np.asarray(res)}
    return Result(cols, audit, plots, extra)


# ---------------------------------------------------------------------------
# boundary-driven nonlinear diffusion


def _zrp_problem(cfg: ExperimentConfig, cells: int | None = None) -> tuple[ZrpPdeProblem, ScalarField, ScalarField]:
    grid = _grid(cfg, cells)
    m = cfg.model
    rho_max = max(m.left, m.right) * (1.0 + cfg.initial.amplitude) * 1.05
    sigma = resolve_sigma(m.sigma, rho_max)
    drift = (m.drift,) if cfg.kind == "zrp-pde-drift" else None
    p = ZrpPdeProblem(grid, sigma, BoundaryCondition.dirichlet(m.left, m.right), drift=drift,
                      dt_safety=cfg.time.dt_safety)
    rho_bar = stationary_profile(p)
    x = grid.centers() / cfg.grid.length
    rho0 = rho_bar.with_values(rho_bar.values * (1.0 + _shape(cfg, x)))
    return p, rho0, rho_bar


def _run_zrp_pde(cfg: ExperimentConfig, sweep: bool) -> Result:
    p, rho0, rho_bar = _zrp_problem(cfg)
    trace = evolve_zrp_pde(p, rho0, cfg.time.t_final, dt=cfg.time.dt, record_every=cfg.time.record_every,
                           rho_bar=rho_bar)
    t = np.asarray(trace.times)
    F, D = trace.column("F_zrp"), trace.column("dissipation")
    rep = lyapunov_report(t, F, D)
    residual = np.concatenate([[np.nan], rep["residual"]])
    cols = {"t": t, "mass": trace.column("mass"), "F_zrp": F, "dissipation": D, "residual": residual}
    audit = {k: v for k, v in rep.items() if k not in ("F", "dissipation", "residual")}
    audit.update(functional="F_zrp", sigma=p.sigma.name, drift=cfg.model.drift if p.drift else 0.0,
                 n_snapshots=len(t))
    extra = {}
    if sweep:
        ns = list(cfg.sweep.cells)
        res = []
        for n in ns:
            pn, r0, rb = _zrp_problem(cfg, n)
            tr = evolve_zrp_pde(pn, r0, cfg.time.t_final, record_every=1, rho_bar=rb)
            res.append(lyapunov_report(tr.times, tr.column("F_zrp"), tr.column("dissipation"))["max_residual"])
        audit["resolution_sweep"] = dict(cells=ns, max_residual=res, orders=_orders(ns, res))
        extra["sweep.csv"] = {"cells": np.asarray(ns, dtype=float), "max_residual": np.asarray(res)}
    return Result(cols, audit, [("t", "F_zrp"), ("t", "dissipation"), ("t", "residual")], extra)


# ---------------------------------------------------------------------------
# BGK kinetics


def _run_bgk(cfg: ExperimentConfig, sweep: bool) -> Result:
    kin = cfg.kinetic
    vgrid = VelocityGrid.uniform(kin.nodes, kin.v_max, kin.dimension)
    rng = _rng(cfg)
    d = kin.dimension
    rows = {k: [] for k in ["t", "replica", "S_gas", "N", *[f"P_{i + 1}" for i in range(d)], "E"]}
    min_dS, drifts = np.inf, dict(N=0.0, P=0.0, E=0.0)
    for r in range(kin.replicas):
        # positive random density, localised so the grid resolves its moments
        f0 = rng.uniform(0.05, 1.0, vgrid.size) * np.exp(-0.5 * vgrid.speed_sq / rng.uniform(0.5, 2.0))
        s = KineticState(vgrid, f0)
        N0, P0, E0 = moments(s)
        S_prev = s.entropy()
        dS_min = np.inf
        for k in range(kin.steps + 1):
            if k > 0:
                try:
                    s = step_bgk(s, kin.tau, kin.dt)
                except (MomentMatchingError, ValueError) as exc:
                    raise RunError(f"replica {r}, step {k}: {exc}") from None
            N, P, E = moments(s)
            S = s.entropy()
            if k > 0:
                dS_min = min(dS_min, S - S_prev)
            S_prev = S
            if k % cfg.time.record_every == 0 or k == kin.steps:
                rows["t"].append(k * kin.dt)
                rows["replica"].append(r)
                rows["S_gas"].append(S)
                rows["N"].append(N)
                for i in range(d):
                    rows[f"P_{i + 1}"].append(P[i])
                rows["E"].append(E)
            drifts["N"] = max(drifts["N"], abs(N - N0) / N0)
            drifts["P"] = max(drifts["P"], float(np.max(np.abs(P - P0))) / np.sqrt(2 * N0 * E0))
            drifts["E"] = max(drifts["E"], abs(E - E0) / E0)
        min_dS = min(min_dS, dS_min)
    cols = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    audit = bgk_audit_from_columns(cols)
    audit.update(min_step_increment=float(min_dS), max_step_drift=drifts, replicas=kin.replicas,
                 velocity_nodes=vgrid.size, tau=kin.tau, dt=kin.dt, steps=kin.steps)
    return Result(cols, audit, [("t", "S_gas"), ("t", "E"), ("t", "N")])


def bgk_audit_from_columns(cols: dict, slack: float = 1e-12) -> dict:
    """Per-replica verdicts on the recorded ``S_gas`` rows."""
    rep = np.asarray(cols["replica"])
    out = {"functional": "S_gas", "direction": "non-decreasing", "slack": slack}
    verdicts, lo, hi = [], np.inf, -np.inf
    for r in np.unique(rep):
        S = np.asarray(cols["S_gas"])[rep == r]
        dS = np.diff(S)
        if dS.size:
            lo, hi = min(lo, float(dS.min())), max(hi, float(dS.max()))
        if dS.size == 0 or np.all(np.abs(dS) <= slack):
            verdicts.append("stationary")
        elif dS.min() >= -slack:
            verdicts.append("monotone")
        else:
            verdicts.append("non-monotone")
    out["verdicts"] = verdicts
    out["verdict"] = ("non-monotone" if "non-monotone" in verdicts
                      else "monotone" if "monotone" in verdicts else "stationary")
    out["min_increment"] = lo if np.isfinite(lo) else 0.0
    out["max_increment"] = hi if np.isfinite(hi) else 0.0
    return out


# ---------------------------------------------------------------------------
# lattice gas


def _zrp_model(cfg: ExperimentConfig, sites: int | None = None) -> ZrpModel:
    lat = cfg.lattice
    return ZrpModel(sites or lat.sites, resolve_rate(lat.rate), lat.z_left, lat.z_right)


def _run_zrp_mc(cfg: ExperimentConfig, sweep: bool) -> Result:
    lat = cfg.lattice
    model = _zrp_model(cfg)
    times = lat.burn_in + lat.thin * np.arange(lat.samples)
    res = simulate(model, ZrpState(np.zeros(model.L, dtype=np.int64)), _rng(cfg), float(times[-1]),
                   sample_times=times)
    occ = res.samples
    cols = {"t": res.sample_times, "N_total": occ.sum(axis=1).astype(float)}
    for i in range(model.L):
        cols[f"n_{i + 1}"] = occ[:, i].astype(float)
    audit = zrp_mc_audit_from_columns(model, cols, lat.batches)
    audit["events"] = res.events
    return Result(cols, audit, [("t", "N_total")])


def zrp_mc_audit_from_columns(model: ZrpModel, cols: dict, batches: int) -> dict:
    occ = np.column_stack([cols[f"n_{i + 1}"] for i in range(model.L)]).astype(np.int64)
    c = check_product_measure(model, occ, n_batches=batches)
    passes = c.chi2_passes(0.05)
    return dict(
        sites=model.L,
        rate=model.rate_name,
        samples=int(occ.shape[0]),
        max_abs_mean_z=float(np.max(np.abs(c.z_mean))),
        means_within_3se=c.means_ok,
        max_abs_correlation_z=float(np.max(np.abs(c.correlation_z))) if c.correlation_z.size else 0.0,
        correlation_bound=c.correlation_bound,
        correlations_consistent_with_zero=c.correlations_ok,
        chi2_sites_passing=passes,
        chi2_min_pvalue=float(c.chi2_pvalues.min()),
        mean_profile=c.mean,
        expected_profile=c.expected_mean,
        verdict="consistent" if (c.means_ok and c.correlations_ok and passes >= model.L - model.L // 10) else "inconsistent",
    )


def ldf_check_rows(model_for, C: int, ratios, sizes) -> dict:
    """Exact-convolution rate against the functional on the coarse profile for each ``K``."""
    rows = {k: [] for k in ("K", "empirical", "F_zrp", "rel_gap", "K_gap")}
    for K in sizes:
        model = model_for(C * K)
        sigma = sigma_from_rates(model)
        rho_bar = ness_density_profile(model).reshape(C, K).mean(axis=1)
        target = rho_bar * np.asarray(ratios, dtype=float)
        est = ldf_empirical(model, C, target)
        F = float(np.mean(ldf_increment_array(rho_bar, target, sigma)))
        rows["K"].append(K)
        rows["empirical"].append(est.total)
        rows["F_zrp"].append(F)
        rows["rel_gap"].append(abs(est.total - F) / F if F > 0 else np.inf)
        rows["K_gap"].append(K * (est.total - F))
    return {k: np.asarray(v, dtype=float) for k, v in rows.items()}


def ldf_audit_from_columns(cols: dict, tolerance: float = 0.05) -> dict:
    K = cols["K"]
    gap = cols["empirical"] - cols["F_zrp"]
    out = dict(tolerance=tolerance, relative_gaps=cols["rel_gap"],
               within_tolerance=[bool(g <= tolerance) for g in cols["rel_gap"]])
    if K.size >= 2 and np.all(gap > 0):
        slope = np.polyfit(np.log(K), np.log(gap), 1)[0]
        # K * gap = a log K + b is the signature of an O(log K / K) correction
        a, b = np.polyfit(np.log(K), K * gap, 1)
        out.update(loglog_slope=float(slope), log_coefficient=float(a), offset=float(b))
    if 64 in K:
        i = int(np.flatnonzero(K == 64)[0])
        out["rel_gap_at_K64"] = float(cols["rel_gap"][i])
    out["verdict"] = "pass" if all(out["within_tolerance"]) else "fail"
    return out


def _run_ldf_check(cfg: ExperimentConfig, sweep: bool) -> Result:
    lat, ldf = cfg.lattice, cfg.ldf
    rate = resolve_rate(lat.rate)
    _zrp_model(cfg, ldf.coarse_cells)  # validates fugacities early

    def model_for(L):
        return ZrpModel(L, rate, lat.z_left, lat.z_right)

    cols = ldf_check_rows(model_for, ldf.coarse_cells, ldf.ratios, ldf.sizes)
    audit = ldf_audit_from_columns(cols)
    audit.update(rate=lat.rate, coarse_cells=ldf.coarse_cells, ratios=list(ldf.ratios),
                 window="|M/K - target| <= 1/(2K) per cell")
    return Result(cols, audit, [("K", "empirical"), ("K", "F_zrp"), ("K", "rel_gap")])


# ---------------------------------------------------------------------------
# single evaluation


def _run_functional_eval(cfg: ExperimentConfig, sweep: bool) -> Result:
    grid = _grid(cfg)
    thermo = resolve_thermo(cfg.model.thermo)
    x = grid.centers() / cfg.grid.length
    e = ScalarField(grid, thermo.energy(cfg.initial.value * (1.0 + _shape(cfg, x))))
    cols = {"t": np.zeros(1), "S_le": np.array([s_local_equilibrium(e, thermo)]),
            "E": np.array([grid.cell_volume * e.values.sum()])}
    if cfg.model.bath_temperature is not None:
        cols["F_canonical"] = np.array([free_energy_canonical(e, thermo, cfg.model.bath_temperature)])
    p, rho0, rho_bar = _zrp_problem(cfg)
    cols["F_zrp"] = np.array([ldf_zrp(rho0, rho_bar, p.sigma)])
    audit = {k: float(v[0]) for k, v in cols.items() if k != "t"}
    audit.update(thermo=thermo.name, sigma=p.sigma.name, verdict="evaluated")
    return Result(cols, audit, [])


RUNNERS = {
    "heat-closed": _run_heat,
    "heat-bath": _run_heat,
    "zrp-pde": _run_zrp_pde,
    "zrp-pde-drift": _run_zrp_pde,
    "bgk": _run_bgk,
    "zrp-mc": _run_zrp_mc,
    "ldf-check": _run_ldf_check,
    "functional-eval": _run_functional_eval,
}


# ---------------------------------------------------------------------------
# output


def write_csv(path: Path, cols: dict) -> None:
    names = list(cols)
    data = np.column_stack([np.asarray(cols[k], dtype=float) for k in names])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def read_csv(path: str | Path) -> dict:
    with open(path) as fh:
        names = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {k: data[:, i] for i, k in enumerate(names)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_outputs(out: Path, cfg: ExperimentConfig, result: Result, timestamp: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "trace.csv", result.columns)
    for name, cols in result.extra.items():
        write_csv(out / name, cols)
    report = {"kind": cfg.kind, "seed": cfg.seed, "version": __version__,
              "config": dataclasses.asdict(cfg), "audit": result.audit}
    if timestamp:
        report["generated"] = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    (out / "audit.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    lines = [f"# columns of trace.csv for kind {cfg.kind}", "file = trace.csv"]
    lines += [f"plot {y} against {x}" for x, y in result.plots]
    if result.extra:
        lines += [f"plot max_residual against cells, log-log, from {name}" for name in result.extra]
    (out / "plot_spec.txt").write_text("\n".join(lines) + "\n")


def run(cfg: ExperimentConfig, out: Path, timestamp: bool = True, sweep: bool = False) -> Result:
    result = RUNNERS[cfg.kind](cfg, sweep)
    write_outputs(out, cfg, result, timestamp)
    return result


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lyapunov-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} experiment")
        sp.add_argument("--config", type=Path, help="INI configuration file")
        sp.add_argument("--seed", type=int, help="overrides experiment.seed")
        sp.add_argument("--out", type=Path, help="output directory (overrides experiment.out)")
        sp.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line from audit.json")
        sp.add_argument("--resolution-sweep", action="store_true", help="also run the convergence-order study")
    sub.add_parser("list-models", help="print the built-in models and their working ranges")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        sys.stdout.write(list_models())
        return EXIT_OK
    try:
        cfg = load_config(args.config) if args.config else default_config(args.command)
        if cfg.kind != args.command:
            raise ConfigError("experiment.kind", f"config is for {cfg.kind!r} but the subcommand is {args.command!r}")
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
        # resolve names up front so that typos are configuration errors
        resolve_thermo(cfg.model.thermo)
        resolve_kappa(cfg.model.kappa)
        rate = resolve_rate(cfg.lattice.rate)
        if cfg.kind in ("zrp-mc", "ldf-check"):
            try:
                ZrpModel(1, rate, cfg.lattice.z_left, cfg.lattice.z_right)
            except ValueError as exc:
                raise ConfigError("lattice.z_left/z_right", str(exc)) from None
        out = args.out if args.out is not None else Path(cfg.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UnknownModel as exc:
        print(f"config error: model: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run(cfg, out, timestamp=not args.no_timestamp, sweep=args.resolution_sweep)
    except UnknownModel as exc:
        print(f"config error: model: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StabilityError, RunError, MomentMatchingError, OverflowError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {out / 'trace.csv'} and {out / 'audit.json'}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
