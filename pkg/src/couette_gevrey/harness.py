"""Experiment configuration, orchestration and the command line interface.

Subcommands: run, sweep, verify-identities, damping, decompose, report.
Exit codes: 0 all checks pass, 1 an acceptance-tagged check failed,
2 configuration error, 3 runtime solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import identities as idn
from .coordinates import (
    CoordinateState,
    build_gamma_stack,
    couette_state,
    init_coordinates,
    make_profile,
    monitor_assumptions,
    step_coordinates,
)
from .elliptic import (
    EllipticCutoffs,
    damping_diagnostic,
    decompose_phi,
    eval_elliptic_functionals,
    interior_greens_response,
    spline_bump,
)
from .functionals import EvalContext, full_report
from .scalar import (
    StabilityError,
    checkpoint_to_bytes,
    default_dt,
    default_initial_data,
    gevrey_bump,
    initial_state,
    step_scalar,
)
from .spectral import ChannelGrid, ModeField
from .weights import WeightParams, build_cascade


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    schema_version: int = 1
    ny: int = 64
    kmax: int = 8
    nu: tuple[float, ...] = (1e-3,)
    t_final_policy: str = "nu_cube_root"  # or "absolute"
    t_final_value: float | None = None
    shear: str = "zero"
    eps_u: float = 1.0 / 64.0
    forcing: str = "none"
    weights: dict = field(default_factory=dict)
    truncation_m: int = 6
    output_dir: str = "out"
    cadence: float = 0.25
    formats: tuple[str, ...] = ("csv", "json")
    checkpoints: bool = False
    noise_floor: float = 1e-8
    data_power: int = 16
    seed: int = 0
    serial: bool = True
    dt: float | None = None
    monotonicity_slack: float = 0.05

    def __post_init__(self):
        if self.schema_version != 1:
            raise ConfigError("config.schema_version: only version 1 is understood")
        if self.ny < 8:
            raise ConfigError("config.ny: need at least 8")
        if self.kmax < 0:
            raise ConfigError("config.kmax: must be nonnegative")
        if not self.nu:
            raise ConfigError("config.nu: empty viscosity list")
        for v in self.nu:
            if v < 0.0:
                raise ConfigError("config.nu: entries must be >= 0")
        if self.t_final_policy not in ("nu_cube_root", "absolute"):
            raise ConfigError("config.t_final_policy: unknown policy")
        if self.t_final_policy == "absolute" and not self.t_final_value:
            raise ConfigError("config.t_final_value: required for absolute policy")
        if self.shear not in ("zero", "quartic", "sin_quartic"):
            raise ConfigError(f"config.shear: unknown profile {self.shear!r}")
        if self.forcing not in ("none",):
            raise ConfigError(f"config.forcing: unknown forcing {self.forcing!r}")
        if self.truncation_m < 0 or self.truncation_m > 12:
            raise ConfigError("config.truncation_m: hard cap is 12")

    def weight_params(self) -> WeightParams:
        try:
            return WeightParams(**self.weights)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config.weights: {exc}") from exc

    def t_final(self, nu: float) -> float:
        if self.t_final_policy == "absolute":
            return float(self.t_final_value)
        if nu <= 0.0:
            raise ConfigError("config.t_final_policy: nu_cube_root needs nu > 0")
        return float(nu ** (-1.0 / 3.0))

    @classmethod
    def from_yaml(cls, path: str | Path, overrides: dict | None = None) -> "ExperimentConfig":
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a key/value tree")
        if overrides:
            raw.update({k: v for k, v in overrides.items() if v is not None})
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"config: unknown keys {sorted(unknown)}")
        if "nu" in raw and isinstance(raw["nu"], (int, float)):
            raw["nu"] = (float(raw["nu"]),)
        if "nu" in raw and isinstance(raw["nu"], list):
            raw["nu"] = tuple(float(v) for v in raw["nu"])
        if "formats" in raw and isinstance(raw["formats"], list):
            raw["formats"] = tuple(raw["formats"])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> dict:
        d = asdict(self)
        d["nu"] = list(self.nu)
        d["formats"] = list(self.formats)
        return d


def thread_count(serial: bool) -> int:
    if serial:
        return 1
    raw = os.environ.get("COUETTE_GEVREY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _json_dump(obj, path: Path):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _stable(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


# ---------------------------------------------------------------------------
# single run


def run_single_nu(config: ExperimentConfig, nu: float, out_dir: Path | None = None) -> dict:
    """Evolve one viscosity, evaluating functionals on the stated cadence."""
    params = config.weight_params()
    grid = ChannelGrid(config.ny, kmax=config.kmax)
    cascade = build_cascade(params, max(config.truncation_m + 2, 8))
    ctx = EvalContext(grid, params, cascade, nu=nu, floor_rel=config.noise_floor)
    profile = make_profile(config.shear, config.eps_u)
    data = default_initial_data(grid, config.kmax, power=config.data_power)
    state = initial_state(grid, nu, data)
    coord = init_coordinates(profile, grid, nu)
    dt = config.dt if config.dt else default_dt(config.kmax)
    t_final = config.t_final(nu)
    workers = thread_count(config.serial)

    def evaluate(scalar_state, coord_state):
        def one(k):
            return k, build_gamma_stack(
                scalar_state.omega[k], coord_state, config.truncation_m, grid,
                t=scalar_state.t,
            )

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                stacks = dict(pool.map(one, scalar_state.modes()))
        else:
            stacks = dict(map(one, scalar_state.modes()))
        rep = full_report(stacks, ctx, coord_state, coord_M=config.truncation_m)
        rep["l2_total"] = scalar_state.total_l2()
        for k, norm in scalar_state.l2_norms().items():
            rep[f"l2_k{k}"] = norm
        return rep

    series = [evaluate(state, coord)]
    monitors = [monitor_assumptions(coord, profile, grid)]
    next_sample = config.cadence
    t0 = time.time()
    while state.t < t_final - 1e-12:
        step = min(dt, t_final - state.t)
        state = step_scalar(state, step, profile)
        if config.shear != "zero" or nu > 0:
            coord = step_coordinates(coord, step, nu, profile, grid)
        if state.t >= next_sample - 1e-12 or state.t >= t_final - 1e-12:
            series.append(evaluate(state, coord))
            monitors.append(monitor_assumptions(coord, profile, grid))
            next_sample += config.cadence
    wall = time.time() - t0

    ts = np.array([row["t"] for row in series])
    e_gamma = np.array([row["E_gamma"] for row in series])
    decay_rate = np.array(
        [row["D_gamma"] + row["CK_gamma_phi"] + row["CK_gamma_W"] for row in series]
    )
    integral = np.concatenate([[0.0], np.cumsum(np.diff(ts) * 0.5 * (decay_rate[1:] + decay_rate[:-1]))])
    theta_series = e_gamma + integral
    slack = config.monotonicity_slack * theta_series[0] if theta_series[0] > 0 else 0.0
    running_min = np.minimum.accumulate(theta_series)
    worst_rise = float(np.max(theta_series - running_min)) if len(theta_series) else 0.0
    result = {
        "nu": nu,
        "dt": dt,
        "t_final": t_final,
        "series": series,
        "theta_series": [float(v) for v in theta_series],
        "surrogate_monotone": bool(worst_rise <= slack + 1e-300),
        "surrogate_worst_rise_rel": float(worst_rise / theta_series[0]) if theta_series[0] > 0 else 0.0,
        "terminal_e_gamma_ratio": float(e_gamma[-1] / e_gamma[0]) if e_gamma[0] > 0 else 0.0,
        "assumption_violations": [
            {k: v for k, v in mon.items() if not v["ok"]} for mon in monitors
        ],
        "wall_clock_s": wall,
    }
    if out_dir is not None:
        _write_run_files(config, grid, state, coord, result, out_dir)
    return result


def _write_run_files(config, grid, state, coord, result, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    tag = f"nu{result['nu']:.0e}"
    if "csv" in config.formats:
        keys = sorted(
            k for k, v in result["series"][0].items() if not isinstance(v, list)
        )
        lines = [",".join(keys)]
        for row in result["series"]:
            lines.append(",".join(repr(_stable(row[k])) for k in keys))
        (out_dir / f"series_{tag}.csv").write_text("\n".join(lines) + "\n")
        (out_dir / f"coordinates_{tag}.csv").write_text(coord.export_csv(grid))
    if config.checkpoints:
        (out_dir / f"checkpoint_{tag}.bin").write_bytes(checkpoint_to_bytes(state))
    if "json" in config.formats:
        summary = {
            k: v for k, v in result.items() if k not in ("series", "wall_clock_s")
        }
        _json_dump(summary, out_dir / f"summary_{tag}.json")


def run(config: ExperimentConfig) -> dict:
    out_dir = Path(config.output_dir)
    results = [run_single_nu(config, nu, out_dir) for nu in config.nu]
    report = {
        "config": config.to_json(),
        "runs": [
            {k: v for k, v in r.items() if k not in ("series", "wall_clock_s")}
            for r in results
        ],
        "all_monotone": all(r["surrogate_monotone"] for r in results),
    }
    if "json" in config.formats:
        _json_dump(report, out_dir / "summary.json")
    report["_full"] = results
    return report


def sweep(config: ExperimentConfig, over: str = "nu") -> dict:
    """Comparative report over nu, M or Ny; >= 2 values required."""
    if over == "nu":
        values = list(config.nu)
        if len(values) < 2:
            raise ConfigError("sweep over nu needs at least two viscosities")
        results = {v: run_single_nu(config, v) for v in values}
        # the nu-uniform object is the theorem's combination
        # Theta(T)/Theta(0) = [E + int(D + CK)](T) / E(0); the bare energy
        # ratio carries the deterministic phi(T)^2 / transient mismatch
        t_common = min(r["t_final"] for r in results.values())
        ratios, e_ratios = {}, {}
        for v, r in results.items():
            th = r["theta_series"]
            ratios[v] = float(th[-1] / th[0]) if th[0] > 0 else 0.0
            ts = np.array([row["t"] for row in r["series"]])
            es = np.array([row["E_gamma"] for row in r["series"]])
            idx = int(np.argmin(np.abs(ts - t_common)))
            e_ratios[v] = float(es[idx] / es[0]) if es[0] > 0 else 0.0
        vals = [x for x in ratios.values() if x > 0]
        uniformity = max(vals) / min(vals) if vals else float("inf")
        return {
            "over": "nu",
            "values": values,
            "t_common": t_common,
            "terminal_ratio": {f"{v:g}": ratios[v] for v in values},
            "energy_ratio_common_time": {f"{v:g}": e_ratios[v] for v in values},
            "uniformity_ratio": uniformity,
            "uniform": bool(uniformity <= 2.0),
            "monotone_flags": {f"{v:g}": results[v]["surrogate_monotone"] for v in values},
        }
    if over == "M":
        m_values = sorted({config.truncation_m, max(config.truncation_m - 2, 0)})
        if len(m_values) < 2:
            m_values = [4, 6]
        outs = {}
        for m in m_values:
            cfg = ExperimentConfig(**{**config.to_json(), "truncation_m": m})
            outs[m] = run_single_nu(cfg, config.nu[0])
        terminals = {m: outs[m]["series"][-1]["E_gamma"] for m in m_values}
        tails = {m: outs[m]["series"][-1]["tail_E_gamma"] for m in m_values}
        hi, lo = max(m_values), min(m_values)
        diff = abs(terminals[hi] - terminals[lo])
        budget = (tails[lo] + tails[hi]) * max(terminals[hi], terminals[lo]) + 1e-14 * max(
            terminals[hi], 1.0
        )
        return {
            "over": "M",
            "values": m_values,
            "terminal_E_gamma": {str(m): terminals[m] for m in m_values},
            "tail_estimates": {str(m): tails[m] for m in m_values},
            "within_tail_budget": bool(diff <= budget),
        }
    raise ConfigError(f"sweep over {over!r} not supported (use nu or M)")


# ---------------------------------------------------------------------------
# identity suite


def identity_suite(ny: int = 96, seed: int = 0, quick: bool = False) -> list[dict]:
    """The exact-algebra and identity battery; returns JSON-able reports."""
    reports = []
    grid = ChannelGrid(ny)
    setup = idn.ManufacturedSetup(grid, k=2, nu=1e-2, eps=1.0 / 64.0)
    coord = setup.coord(1.0)
    reports.append(idn.check_ad_expansion(trials=20 if quick else 100, seed=seed))
    n_range = (1, 2) if quick else (1, 2, 3)
    for which in idn.COMMUTATOR_RELATIONS:
        for n in n_range:
            if which == "cm_pvv_q" and n != 1:
                continue
            reports.append(idn.check_commutator_relations(which, n, 2, coord, grid, t=1.0))
    for n in (2, 3, 4):
        reports.append(idn.check_upsilon_identity(n, grid))
    for m, n in ((0, 0), (1, 1), (0, 2)):
        reports.append(idn.check_mode_equation(setup, m, n, t=1.0, dt=1e-3))
    for n, j in ((4, 1), (8, 2), (16, 3), (12, 4)):
        reports.append(idn.check_faa_di_bruno(n, j, coord, grid))
    for n, j in ((4, 1), (6, 2), (8, 3)):
        reports.append(idn.check_faa_commutator(n, j, coord, grid))
    n_comb = 200 if quick else 2000
    for zeta in (0.5, 1.0, 2.0):
        reports.append(idn.check_combinatorics("prod", n_max=n_comb, zeta=zeta))
        reports.append(idn.check_combinatorics("prod2", n_max=n_comb, zeta=zeta))
    for frak_c in (1.0, 2.0, 4.0):
        reports.append(idn.check_combinatorics("sum_comb", n_max=100 if quick else 500, frak_c=frak_c))
    reports.append(idn.check_combinatorics("comb_boun", n_max=60 if quick else 200))
    return [r.to_json() for r in reports]


# ---------------------------------------------------------------------------
# damping and decomposition drivers


def damping_suite(k: int = 1, ny: int = 96, t_window: tuple[float, float] = (5.0, 50.0),
                  samples: int = 16) -> dict:
    grid = ChannelGrid(ny)
    times = np.geomspace(t_window[0], t_window[1], samples)
    out = {"k": k}
    smooth = lambda v: gevrey_bump(v, 0.24)
    hist = [(t, interior_greens_response(grid, k, t, smooth, support=(-0.24, 0.24)))
            for t in times]
    out["smooth_bump"] = damping_diagnostic(hist, grid, k, 0)
    for level in (1, 2, 3):
        data = lambda v, m=level: spline_bump(v, m)
        hist = [(t, interior_greens_response(grid, k, t, data, support=(-0.25, 0.25)))
                for t in times]
        out[f"spline_level_{level}"] = damping_diagnostic(hist, grid, k, level)
    return out


def decompose_suite(config: ExperimentConfig, nu: float | None = None, t_stop: float | None = None) -> dict:
    nu = nu if nu is not None else config.nu[0]
    params = config.weight_params()
    grid = ChannelGrid(config.ny, kmax=config.kmax)
    cascade = build_cascade(params, max(config.truncation_m + 2, 8))
    ctx = EvalContext(grid, params, cascade, nu=nu, floor_rel=config.noise_floor)
    profile = make_profile(config.shear, config.eps_u)
    state = initial_state(grid, nu, default_initial_data(grid, config.kmax, power=config.data_power))
    coord = init_coordinates(profile, grid, nu)
    dt = config.dt if config.dt else default_dt(config.kmax)
    t_stop = t_stop if t_stop is not None else config.t_final(nu) / 2.0
    while state.t < t_stop - 1e-12:
        step = min(dt, t_stop - state.t)
        state = step_scalar(state, step, profile)
        coord = step_coordinates(coord, step, nu, profile, grid)
    decomps = {}
    for k in state.modes():
        if k == 0:
            continue
        decomps[k] = decompose_phi(state.omega[k], coord, grid)
    funcs = eval_elliptic_functionals(decomps, coord, ctx, M=min(config.truncation_m, 4))
    return {
        "nu": nu,
        "t": state.t,
        "sum_residuals": {k: d.sum_residual for k, d in decomps.items()},
        "iterations": {k: d.iterations for k, d in decomps.items()},
        "functionals": funcs,
        "_decomps": decomps,
        "_state": state,
        "_coord": coord,
    }


# ---------------------------------------------------------------------------
# CLI


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="couette-gevrey",
                                description="passive scalar / stream function verification harness")
    p.add_argument("--config", help="YAML config file (flags override file keys)")
    p.add_argument("--serial", action="store_true", help="force bitwise-reproducible execution")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    sub = p.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="evolve and evaluate functionals")
    runp.add_argument("--nu", type=float, action="append")
    runp.add_argument("--ny", type=int)
    runp.add_argument("--kmax", type=int)
    sweepp = sub.add_parser("sweep", help="comparative sweep")
    sweepp.add_argument("--over", choices=("nu", "M"), default="nu")
    sweepp.add_argument("--nu", type=float, action="append")
    veri = sub.add_parser("verify-identities", help="run the identity battery")
    veri.add_argument("--ny", type=int, default=96)
    veri.add_argument("--quick", action="store_true")
    damp = sub.add_parser("damping", help="inviscid damping fits on the transport oracle")
    damp.add_argument("--k", type=int, default=1)
    damp.add_argument("--ny", type=int, default=96)
    deco = sub.add_parser("decompose", help="interior/exterior stream decomposition")
    deco.add_argument("--nu", type=float)
    deco.add_argument("--t", type=float)
    sub.add_parser("report", help="summarize an existing output directory")
    return p


def _load_config(args) -> ExperimentConfig:
    overrides = {}
    for key in ("output_dir", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "serial", False):
        overrides["serial"] = True
    if getattr(args, "ny", None):
        overrides["ny"] = args.ny
    if getattr(args, "kmax", None):
        overrides["kmax"] = args.kmax
    nu = getattr(args, "nu", None)
    if nu:
        overrides["nu"] = tuple(nu) if isinstance(nu, list) else (nu,)
    if args.config:
        return ExperimentConfig.from_yaml(args.config, overrides)
    return ExperimentConfig(**overrides)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "verify-identities":
            reports = identity_suite(ny=args.ny, seed=args.seed or 0, quick=args.quick)
            for rep in reports:
                print(json.dumps(rep, sort_keys=True))
            failed = [r for r in reports if not r["pass"]]
            print(f"# {len(reports) - len(failed)}/{len(reports)} identity checks passed")
            return 1 if failed else 0
        config = _load_config(args)
        if args.command == "run":
            report = run(config)
            print(json.dumps({k: v for k, v in report.items() if k != "_full"}, sort_keys=True, default=_stable))
            return 0 if report["all_monotone"] else 1
        if args.command == "sweep":
            out = sweep(config, over=args.over)
            print(json.dumps(out, sort_keys=True))
            ok = out.get("uniform", out.get("within_tail_budget", False))
            return 0 if ok else 1
        if args.command == "damping":
            out = damping_suite(k=args.k, ny=args.ny)
            print(json.dumps(out, sort_keys=True))
            slope = out["smooth_bump"]["slope"]
            return 0 if -2.3 <= slope <= -1.7 else 1
        if args.command == "decompose":
            out = decompose_suite(config, nu=args.nu, t_stop=args.t)
            printable = {k: v for k, v in out.items() if not k.startswith("_")}
            out_dir = Path(config.output_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            for k, dec in out["_decomps"].items():
                csv = dec.export_csv(ChannelGrid(config.ny), out["_coord"], out["_state"].omega[k])
                (out_dir / f"decompose_k{k}_t{out['t']:.3f}.csv").write_text(csv)
            print(json.dumps(printable, sort_keys=True, default=_stable))
            worst = max(out["sum_residuals"].values()) if out["sum_residuals"] else 0.0
            return 0 if worst < 1e-6 else 1
        if args.command == "report":
            summary = Path(config.output_dir) / "summary.json"
            if not summary.exists():
                raise ConfigError(f"no summary.json under {config.output_dir!r}")
            print(summary.read_text())
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StabilityError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime solver failures surface as exit 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
