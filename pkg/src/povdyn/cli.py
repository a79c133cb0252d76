"""Command-line pipeline: ``povdyn <command> [--preset NAME | --config FILE]``.

Every output file starts with ``#`` lines carrying the config hash, so an
unchanged config reproduces byte-identical outputs.

Exit codes: 0 success, 2 usage/config, 3 data, 4 convergence, 5 gate failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import agents, cddyn, dataio, engel, fpdist, indices
from .config import PRESETS, PipelineConfig, load_config
from .exceptions import (ConfigError, DataError, FitFailureError, IllConditionedFitError,
                         NormalizationError, NumericalBlowupError, QuadratureDivergenceError,
                         RangeError, SchemeError, SimulationError, StepSizeError)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE, EXIT_GATE = 0, 2, 3, 4, 5
log = logging.getLogger("povdyn")


class GateFailure(Exception):
    pass


def _header(cfg: PipelineConfig, command, extra=None):
    h = {"config": cfg.name, "config_hash": cfg.config_hash(), "command": command}
    h.update(extra or {})
    return h


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path, header, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# --------------------------------------------------------------------------
# commands


def cmd_fit(cfg: PipelineConfig, out: Path):
    ds = cfg["dataset"]
    if ds["tables"] is None or ds["cpi"] is None:
        raise ConfigError("fit needs dataset.tables and dataset.cpi")
    tables_path, cpi_path = cfg.resolve(ds["tables"]), cfg.resolve(ds["cpi"])
    if len(dataio._data_lines(tables_path)) < 2:  # header only counts as empty
        raise ConfigError(f"dataset {tables_path} contains no survey tables")
    tables = dataio.read_expenditure_tables(tables_path)
    cpi = dataio.read_cpi(cpi_path)
    scale = 1.0
    if ds["anchor_year"] is not None:
        ref = tables.get(float(ds["anchor_year"]))
        if ref is None:
            raise DataError(f"anchor year {ds['anchor_year']} is not in the dataset")
        scale = dataio.anchor_scale(dataio.deflate_table(ref, cpi).mean_income(),
                                    ds["anchor_mean"])
    header = _header(cfg, "fit", {"tables_sha256": dataio.file_digest(tables_path),
                                  "cpi_sha256": dataio.file_digest(cpi_path),
                                  "anchor_scale": repr(scale)})
    fit_rows, curve_rows, good = [], [], []
    for year, tbl in tables.items():
        real = dataio.deflate_table(tbl, cpi, scale)
        x, c = real.mean_total, real.mean_cereal
        try:
            p, rep = engel.fit_engel(x, c)
        except (FitFailureError, IllConditionedFitError) as exc:
            log.warning("year %s: Engel fit failed: %s", year, exc)
            fit_rows.append([year, tbl.round, None, None, None, None, None, 0, str(exc)])
            continue
        good.append((tbl.round, year, p, real.mean_income()))
        fit_rows.append([year, tbl.round, p.V, p.K, p.V / p.K, rep.residual_sum_sq,
                         rep.iterations, int(rep.converged), rep.message])
        for xi, ci in zip(x, c):
            curve_rows.append([year, xi, ci, engel.consumption(xi, p)])
    _write_rows(out / "engel_fits.csv", header,
                ["year", "round", "V", "K", "V_over_K", "rss", "iterations", "converged",
                 "message"], fit_rows)
    _write_rows(out / "engel_curves.csv", header, ["year", "income", "cereal", "fitted"],
                curve_rows)
    if len(good) < 4:
        raise FitFailureError(f"only {len(good)} years fitted; need 4 for the trends")
    r = np.array([g[0] for g in good])
    yrs = np.array([g[1] for g in good])
    V = np.array([g[2].V for g in good])
    K = np.array([g[2].K for g in good])
    C = np.array([g[3] for g in good])
    mV, repV = engel.fit_trend(r, V)
    mK, repK = engel.fit_trend(r, K)
    post = yrs >= 1973.0
    sel = post if post.sum() >= 2 else np.ones_like(post)
    mC, _ = engel.fit_trend(yrs[sel], C[sel], kind=engel.LINEAR)
    trends = {"V": mV.to_dict(), "K": mK.to_dict(), "C": mC.to_dict(),
              "converged": {"V": bool(repV.converged), "K": bool(repK.converged)},
              "config_hash": cfg.config_hash()}
    with open(out / "trends.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(_plain(trends), fh, sort_keys=True)
    _write_rows(out / "trends.csv", header,
                ["round", "year", "V", "K", "C", "V_trend", "K_trend", "C_trend"],
                [[ri, yi, vi, ki, ci, float(mV(ri)), float(mK(ri)), float(mC(yi))]
                 for ri, yi, vi, ki, ci in zip(r, yrs, V, K, C)])
    if not (repV.converged and repK.converged):
        raise FitFailureError("trend fit did not converge")
    return {"years": len(tables), "fitted": len(good), "V": mV.to_dict(), "K": mK.to_dict(),
            "C": mC.to_dict()}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if np.isinf(v) else v
    return obj


def _series(cfg: PipelineConfig, rounds=None):
    m, pl, so = cfg["model"], cfg["pipeline"], cfg["solver"]
    V = cfg.trend("V")
    K = cfg.trend("K")
    V = m["V0"] if V is None else V
    K = m["K0"] if K is None else K
    C_trend = cfg.trend("C")
    line = pl["poverty_line"]
    return indices.index_series(
        V, K, cfg.rounds() if rounds is None else rounds, alpha=m["alpha"], y0=m["y0"],
        C0=m["C0"], C_source=pl["C_source"],
        C_trend=(lambda yr: C_trend) if isinstance(C_trend, float) else C_trend,
        grid=cfg.grid(), dt=so["dt"], t_start=pl["t_start"],
        fp_time_per_round=pl["fp_time_per_round"], density=pl["density"],
        year_map=cfg.year_map(), data_end_year=pl["data_end_year"],
        poverty_line=None if line is None else indices.PovertyLine(line), relative=True,
        config_hash=cfg.config_hash())


def _index_outputs(cfg, out, command, series):
    pl = cfg["pipeline"]
    series.to_csv(out / "index_series.csv", _header(cfg, command))
    plateau = indices.detect_plateau(series, pl["plateau_threshold"])
    report = {"config_hash": cfg.config_hash(), "command": command,
              "plateau": {"detected": plateau.detected, "round": plateau.round,
                          "year": plateau.year, "threshold": plateau.threshold,
                          "relative": True},
              "notes": series.notes}
    years = [y for y in pl["report_years"] if series.years[0] <= y <= series.years[-1]]
    report["report_years"] = {str(y): series.value_at_year(y) for y in years}
    if len(years) >= 2:
        report["ratio"] = {"numerator": years[-1], "denominator": years[0],
                           "p_cd": series.ratio(years[-1], years[0])}
    _write_json(out / f"{command}_report.json", report)
    return report


def cmd_index(cfg, out):
    return _index_outputs(cfg, out, "index", _series(cfg))


def cmd_forecast(cfg, out, horizon_year=None):
    rounds = cfg.rounds()
    if horizon_year is not None:
        last = float(cfg.year_map().round(horizon_year))
        step = rounds[1] - rounds[0] if rounds.size > 1 else 0.5
        rounds = np.arange(rounds[0], last + 1e-9, step)
    return _index_outputs(cfg, out, "forecast", _series(cfg, rounds))


def cmd_compare(cfg, out, external=None):
    path = external if external is not None else cfg.resolve(cfg["dataset"]["external"])
    if path is None:
        raise ConfigError("compare needs --external or dataset.external")
    ey, ev = dataio.read_external_series(path)
    series = _series(cfg)
    try:
        rep = indices.compare_series(series.years, series.p_cd, ey, ev)
    except RangeError as exc:
        raise ConfigError(f"no overlap between model and external series: {exc}") from exc
    rep.update({"config_hash": cfg.config_hash(), "external_sha256": dataio.file_digest(path)})
    _write_json(out / "compare_report.json", rep)
    return rep


def cmd_simulate(cfg, out, N=None):
    sim = cfg["simulation"]
    steady = cfg.steady_params()
    p = agents.matched_langevin(steady, D0=sim["D0"], floor_policy=sim["floor_policy"])
    N = int(sim["N"] if N is None else N)
    res = agents.simulate(p, N, 0.0, sim["t1"], sim["dt"], sim["snapshot_every"], cfg.seed,
                          initial=sim["initial"], workers=int(sim["workers"]))
    F = fpdist.SteadyCDF(steady)
    ks = [agents.ks_distance(e, F) for e in res.snapshots]
    header = _header(cfg, "simulate", {"N": N, "dt": repr(res.dt),
                                      "substreams": res.final.substream_map})
    res.quantiles_to_csv(out / "quantiles.csv", header=header)
    _write_rows(out / "ks.csv", header, ["t", "ks"],
                [[e.t, k] for e, k in zip(res.snapshots, ks)])
    report = {"config_hash": cfg.config_hash(), "N": N, "final_ks": ks[-1],
              "gate": sim["ks_gate"], "passed": bool(ks[-1] <= sim["ks_gate"])}
    _write_json(out / "simulate_report.json", report)
    if not report["passed"]:
        raise GateFailure(f"final KS {ks[-1]:.4g} exceeds gate {sim['ks_gate']}")
    return report


def _report_grid(grid, n=64):
    idx = np.unique(np.round(np.linspace(0, grid.size - 1, n)).astype(int))
    return idx


def cmd_evolve_cd(cfg, out):
    m, so, pl = cfg["model"], cfg["solver"], cfg["pipeline"]
    V = cfg.trend("V")
    K = cfg.trend("K")
    V = m["V0"] if V is None else V
    K = m["K0"] if K is None else K
    rounds = cfg.rounds()
    grid = cfg.grid()
    nu = cddyn.Viscosity.steady(m["V0"], m["K0"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", cddyn.CDWarning)
        traj = cddyn.evolve_cd_engel(V, K, nu, pl["t_start"], rounds[-1], so["dt"], grid)
    idx = _report_grid(grid)
    rows = []
    for r in rounds:
        vals = traj.at(r)
        rows.extend([r, grid[i], vals[i]] for i in idx)
    header = _header(cfg, "evolve-cd", {"nu0": repr(nu.nu0), "regime": nu.sign_regime(0.0)})
    for k, note in enumerate(traj.warnings):
        header[f"warning_{k}"] = note
    _write_rows(out / "cd_trajectory.csv", header, ["t", "y", "CD"], rows)
    i30 = int(np.argmin(np.abs(grid - m["y0"])))
    return {"rounds": len(rounds), "CD_y0_start": float(traj.values[0][i30]),
            "CD_y0_end": float(traj.at(rounds[-1])[i30]), "warnings": traj.warnings}


def cmd_evolve_fp(cfg, out, t1=10.0):
    m, so = cfg["model"], cfg["solver"]
    steady = cfg.steady_params()
    grid = cfg.grid()
    f0 = fpdist.steady_grid_function(steady, grid)
    cd = cddyn.engel_form(grid, m["V0"], m["K0"])
    snaps = [f0]
    times = np.arange(1.0, t1 + 1e-9, 1.0)
    f = f0
    for t in times:
        f = fpdist.evolve_pdf(f, m["alpha"], m["C0"], cd, t - 1.0, t, so["dt"], so["method"])
        snaps.append(f)
    idx = _report_grid(grid)
    rows = [[s.t, grid[i], s.values[i]] for s in snaps for i in idx]
    _write_rows(out / "fp_density.csv", _header(cfg, "evolve-fp"), ["t", "y", "f"], rows)
    drift = float(np.max(np.abs(f.values - f0.values)) / np.max(f0.values))
    report = {"config_hash": cfg.config_hash(), "t1": t1, "max_relative_drift": drift,
              "mass": f.mass(), "mean": f.mean()}
    _write_json(out / "evolve_fp_report.json", report)
    return report


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "evolve-cd": cmd_evolve_cd,
    "evolve-fp": cmd_evolve_fp,
    "index": cmd_index,
    "compare": cmd_compare,
    "forecast": cmd_forecast,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="povdyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="YAML config (overrides a preset)")
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        if name == "simulate":
            sp.add_argument("--N", type=int, help="ensemble size override")
        if name == "compare":
            sp.add_argument("--external", type=Path, help="external index CSV (year,value)")
        if name == "forecast":
            sp.add_argument("--horizon", type=float, help="last calendar year to forecast")
        if name == "evolve-fp":
            sp.add_argument("--t1", type=float, default=10.0, help="end time")
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.config is None and args.preset is None:
            raise ConfigError("one of --config or --preset is required")
        cfg = load_config(args.config, args.preset)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_overrides(seed=args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        fn = COMMANDS[args.command]
        extra = {}
        if args.command == "simulate":
            extra["N"] = args.N
        elif args.command == "compare":
            extra["external"] = args.external
        elif args.command == "forecast":
            extra["horizon_year"] = args.horizon
        elif args.command == "evolve-fp":
            extra["t1"] = args.t1
        result = fn(cfg, args.out, **extra)
    except ConfigError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except (DataError, NormalizationError) as exc:
        log.error("data: %s", exc)
        return EXIT_DATA
    except (FitFailureError, IllConditionedFitError, QuadratureDivergenceError, SchemeError,
            NumericalBlowupError, StepSizeError, SimulationError) as exc:
        log.error("convergence: %s", exc)
        return EXIT_CONVERGENCE
    except GateFailure as exc:
        log.error("gate: %s", exc)
        return EXIT_GATE
    print(json.dumps(_plain(result), indent=2, sort_keys=True, default=str))
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
