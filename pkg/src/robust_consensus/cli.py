"""Command-line experiment runner.

Subcommands ``test1``, ``test2``, ``test3``, ``gamma-surface`` and
``certify`` each read a YAML config and write CSV/JSON files into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 infeasible certificate.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import (
    ConfigError,
    DegenerateBound,
    InfeasibleGamma,
    NonConvergence,
    SingularMiddleBlock,
    UnstableSystem,
)
from .gpc import GpcBasis, default_moments
from .hinf import certify, compute_c_n, consensus_system, gamma_lower_bound, hinf_norm_sweep, log_grid
from .meanfield import run_mc_sg
from .riccati import solve_finite_n_gains
from .sim import MomentSeries, run_micro_sg

logger = logging.getLogger("robust_consensus")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INFEASIBLE = 0, 2, 3, 4


def fmt(x) -> str:
    return format(float(x), ".12g")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV with a header row, LF line endings and 12 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def series_rows(series: MomentSeries):
    d = series.mean.shape[-1]
    header = ["t"] + [f"mean_{k + 1}" for k in range(d)] + [f"band_lo_{k + 1}" for k in range(d)]
    header += [f"band_hi_{k + 1}" for k in range(d)]
    rows = [
        [t, *series.agent_mean[i], *series.band_low[i], *series.band_high[i]] for i, t in enumerate(series.times)
    ]
    return header, rows


def _require_uncertainty(cfg: ExperimentConfig):
    if cfg.uncertainty is None:
        raise ConfigError("config needs an 'uncertainty' section")
    if not cfg.controls:
        raise ConfigError("config needs a non-empty 'controls' list")
    return cfg.uncertainty


def _sg_run(cfg: ExperimentConfig, params, control: str, v0) -> MomentSeries:
    unc = _require_uncertainty(cfg)
    basis = GpcBasis(unc, cfg.order)
    gains = solve_finite_n_gains(params)
    moments = default_moments(basis, cfg.quadrature_points)
    return run_micro_sg(params, unc, basis, gains, control, cfg.T, cfg.dt, v0, cfg.snapshots, moments=moments)


def cmd_test1(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """One-dimensional microscopic runs, one mean/band CSV per control."""
    params = cfg.params()
    v0 = cfg.initial_state(params)
    written = []
    for control in _controls(cfg):
        header, rows = series_rows(_sg_run(cfg, params, control, v0))
        written.append(write_csv(out / f"test1_{control}.csv", header, rows))
    return written


def _controls(cfg: ExperimentConfig) -> tuple[str, ...]:
    _require_uncertainty(cfg)
    return cfg.controls


def terminal_spread(series: MomentSeries) -> float:
    """Largest agent distance from the origin at the final time, mean plus one std."""
    mean = series.mean[-1]
    std = np.sqrt(np.maximum(series.variance[-1], 0.0))
    return float(np.max(np.linalg.norm(mean, axis=1) + np.linalg.norm(std, axis=1)))


def cmd_test2(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Two-dimensional runs over a list of penalizations plus a c_N ledger."""
    cases = cfg.extra.get("cases")
    if not cases:
        raise ConfigError("test2 config needs a non-empty 'cases' list with nu and published_c_n")
    base = cfg.params()
    if base.dim != 2:
        raise ConfigError(f"test2 expects dim = 2, got {base.dim}")
    v0 = cfg.initial_state(base)
    written = [write_csv(out / "test2_initial.csv", ["agent", "v_1", "v_2"], ([i, *v] for i, v in enumerate(v0)))]
    ledger = []
    for case in cases:
        try:
            nu = float(case["nu"])
            published_c_n = float(case["published_c_n"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"test2 case {case!r}: {exc}") from exc
        params = cfg.params(nu=nu)
        gains = solve_finite_n_gains(params)
        entry = {"nu": nu, "c_n_computed": compute_c_n(params, gains), "c_n_published": published_c_n,
                 "gamma_min_computed": 1.0 / compute_c_n(params, gains), "k_d": gains.k_d, "k_o": gains.k_o,
                 "spread": {}}
        for control in _controls(cfg):
            series = _sg_run(cfg, params, control, v0)
            tag = f"nu{nu:g}_{control}"
            header, rows = series_rows(series)
            written.append(write_csv(out / f"test2_{tag}.csv", header, rows))
            traj = [
                [t, i, *series.mean[k, i], *np.sqrt(np.maximum(series.variance[k, i], 0.0))]
                for k, t in enumerate(series.times)
                for i in range(params.n_agents)
            ]
            written.append(
                write_csv(out / f"test2_{tag}_agents.csv", ["t", "agent", "mean_1", "mean_2", "std_1", "std_2"], traj)
            )
            entry["spread"][control] = terminal_spread(series)
        ledger.append(entry)
    doc = {"experiment": "test2", "seed": cfg.seed, "cases": ledger,
           "c_n_ratio_computed": _ratio(ledger, "c_n_computed"), "c_n_ratio_published": _ratio(ledger, "c_n_published")}
    written.append(write_json(out / "test2_certificate.json", doc))
    return written


def _ratio(ledger, key):
    if len(ledger) < 2:
        return None
    values = sorted((e["nu"], e[key]) for e in ledger)
    return values[0][1] / values[-1][1]


def cmd_test3(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Mean-field particle runs; per-time density histograms for each control."""
    unc = _require_uncertainty(cfg)
    params = cfg.params()
    if cfg.quadrature_points is None:
        raise ConfigError("test3 needs gpc.quadrature_points (L)")
    bins = int(cfg.extra.get("histogram", {}).get("bins", 0))
    if bins < 1:
        raise ConfigError("test3 needs histogram.bins >= 1")
    basis = GpcBasis(unc, cfg.order)
    gains = solve_finite_n_gains(params)
    v0 = cfg.initial_state(params)
    written = []
    for control in _controls(cfg):
        dm = run_mc_sg(params, unc, basis, gains, control, cfg.T, cfg.dt, bins, v0, cfg.quadrature_points, cfg.snapshots)
        rows = [
            [t, c, m, s]
            for k, t in enumerate(dm.times)
            for c, m, s in zip(dm.centers, dm.mean_density[k], dm.std_density[k])
        ]
        written.append(write_csv(out / f"test3_{control}.csv", ["t", "bin_center", "mean_density", "std_density"], rows))
        summary = zip(dm.times, dm.mass(), dm.first_moment(), dm.particle_mean, dm.clipped)
        written.append(
            write_csv(out / f"test3_{control}_summary.csv", ["t", "mass", "first_moment", "particle_mean", "clipped"], summary)
        )
    return written


def _grid(spec, name: str) -> np.ndarray:
    if isinstance(spec, (list, tuple)):
        values = np.asarray(spec, dtype=float)
    elif isinstance(spec, dict):
        try:
            start, stop, num = float(spec["start"]), float(spec["stop"]), int(spec["num"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"grid '{name}': {exc}") from exc
        values = np.geomspace(start, stop, num) if spec.get("log", False) else np.linspace(start, stop, num)
    else:
        raise ConfigError(f"grid '{name}' must be a list or a start/stop/num mapping")
    if values.size == 0:
        raise ConfigError(f"grid '{name}' is empty")
    return values


def cmd_gamma_surface(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Tabulate the mean-field gamma bound over (r, nu, p_bar)."""
    grid = cfg.extra.get("grid")
    if not isinstance(grid, dict):
        raise ConfigError("gamma-surface config needs a 'grid' section")
    nus = _grid(grid.get("nu"), "nu")
    pbars = _grid(grid.get("p_bar"), "p_bar")
    rs = _grid(grid.get("r", [0.0]), "r")
    rows = [[r, nu, p, gamma_lower_bound(p, nu, r)] for r in rs for nu in nus for p in pbars]
    return [write_csv(out / "gamma_surface.csv", ["r", "nu", "p_bar", "gamma"], rows)]


def cmd_certify(cfg: ExperimentConfig, out: Path, gamma: float | None = None) -> list[Path]:
    """Gains, c_N, structured certificate, residual and (small N) a frequency sweep."""
    params = cfg.params()
    gains = solve_finite_n_gains(params)
    c_n = compute_c_n(params, gains)
    section = cfg.extra.get("certify", {})
    if gamma is None:
        if "gamma" in section:
            gamma = float(section["gamma"])
        elif "gamma_factor" in section:
            gamma = float(section["gamma_factor"]) / c_n
        else:
            raise ConfigError("no gamma: pass --gamma or set certify.gamma / certify.gamma_factor")
    cert = certify(params, gains, gamma)
    doc = {
        "experiment": "certify",
        "model": {"n_agents": params.n_agents, "dim": params.dim, "p_bar": params.p_bar, "nu": params.nu,
                  "r": params.r, "z": params.z},
        "gains": {"k_d": gains.k_d, "k_o": gains.k_o, "s": gains.s, "convention": gains.convention},
        "gamma_min": 1.0 / c_n,
        "certificate": cert.to_dict(),
    }
    sweep = section.get("sweep", {})
    max_n = int(sweep.get("max_agents", 50))
    if params.n_agents <= max_n:
        omegas = log_grid(float(sweep.get("omega_min", 1e-3)), float(sweep.get("omega_max", 1e3)),
                          int(sweep.get("points", 2000)))
        norms = {}
        for inputs in ("broadcast", "identity"):
            norms[inputs] = hinf_norm_sweep(consensus_system(params, gains, inputs=inputs), omegas)
        doc["sweep"] = {"norm": norms, "within_gamma": {k: bool(v <= gamma * (1 + 1e-3)) for k, v in norms.items()}}
    return [write_json(out / "certificate.json", doc)]


COMMANDS = {
    "test1": cmd_test1,
    "test2": cmd_test2,
    "test3": cmd_test3,
    "gamma-surface": cmd_gamma_surface,
    "certify": cmd_certify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-consensus", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed (u64)")
        if name == "certify":
            p.add_argument("--gamma", type=float, default=None, help="gamma to certify")
    return parser


def _error(kind: str, message: str, **fields) -> None:
    print(json.dumps({"error": kind, "message": message, **fields}), file=sys.stdout)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        cfg = load_config(args.config).with_seed(args.seed)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {args.seed}")
        if args.command == "certify":
            written = cmd_certify(cfg, out, args.gamma)
        else:
            written = COMMANDS[args.command](cfg, out)
    except InfeasibleGamma as exc:
        _error("infeasible_gamma", str(exc), gamma=exc.gamma, gamma_min=exc.gamma_min)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG
    except (NonConvergence, UnstableSystem, DegenerateBound, SingularMiddleBlock, FloatingPointError) as exc:
        _error("numerical", str(exc))
        return EXIT_NUMERICAL
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
