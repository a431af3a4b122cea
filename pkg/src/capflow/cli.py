"""Command-line front end.

    capflow stationary|spectrum|nullspace|scan|homotopy|evolve --config run.json [--key value ...]

Flags override values from the JSON config.  Exit codes: 0 success, 2 infeasible
parameters or bad config, 3 eigensolver failure, 4 flow termination, 5 scan total failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .cap_geometry import (
    CapParams,
    cap_from_angle,
    feasible_alpha_range,
    feasible_r_range,
    make_cap,
    region,
    ssc_reference,
)
from .errors import (
    AngleDegenerate,
    CapflowError,
    InsufficientDecay,
    NoStationaryCap,
    NotHalfsphere,
    OffsetOutOfChart,
    SolverFailure,
    StepRejected,
)

COMMANDS = ("stationary", "spectrum", "nullspace", "scan", "homotopy", "evolve")

DEFAULTS = {
    "n_phi": 32,
    "n_theta": 32,
    "k_max": 4,
    "n_theta_fe": 400,
    "n_keep": 10,
    "T_end": None,
    "dt": "auto",
    "scheme": "rk4",
    "flow": "nonlinear",
    "sample_every": 10,
    "c_cfl": 0.2,
    "perturbation": {"kind": "mode", "amplitude": 0.01, "k": 2},
    "scan": {"a": [0.0, 0.5, 1.0], "b": [0.2, 0.5], "r_rule": "mid"},
    "d_values": [0.0, 0.25, 0.5, 0.75, 1.0],
    "reference": False,
    "out": "capflow_out",
    "threads": None,
}

EXIT_OK, EXIT_PARAMS, EXIT_SOLVER, EXIT_FLOW, EXIT_SCAN = 0, 2, 3, 4, 5


class ConfigError(CapflowError):
    pass


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capflow", description="Stationary caps, their linear stability and the capillary flow.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="JSON file with run settings")
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--n-phi", dest="n_phi", type=int)
    p.add_argument("--n-theta", dest="n_theta", type=int)
    p.add_argument("--n-theta-fe", dest="n_theta_fe", type=int, help="finite-element nodes for spectra")
    p.add_argument("--k-max", dest="k_max", type=int)
    p.add_argument("--n-keep", dest="n_keep", type=int, help="eigenvalues kept per mode in outputs")
    p.add_argument("--T-end", dest="T_end", type=float)
    p.add_argument("--dt", help='time step or "auto"')
    p.add_argument("--scheme", choices=("rk4", "rkc", "euler"))
    p.add_argument("--flow", choices=("nonlinear", "linear"))
    p.add_argument("--sample-every", dest="sample_every", type=int)
    p.add_argument("--c-cfl", dest="c_cfl", type=float)
    p.add_argument("--perturbation", choices=("zero", "mode", "random", "eigen", "nullspace"))
    p.add_argument("--amplitude", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--mode-k", dest="mode_k", type=int)
    p.add_argument("--mode-index", dest="mode_index", type=int)
    p.add_argument("--a-list", dest="a_list", type=_floats)
    p.add_argument("--b-list", dest="b_list", type=_floats)
    p.add_argument("--r-rule", dest="r_rule")
    p.add_argument("--d-values", dest="d_values", type=_floats)
    p.add_argument("--reference", action="store_true", default=None)
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int)
    return p


def load_config(args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if args.config is not None:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        for key, val in user.items():
            if isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
    flags = vars(args)
    for key in ("a", "b", "n_phi", "n_theta", "n_theta_fe", "k_max", "n_keep", "T_end", "scheme", "flow",
                "sample_every", "c_cfl", "d_values", "reference", "out", "threads"):
        if flags.get(key) is not None:
            cfg[key] = flags[key]
    if flags.get("r") is not None and flags.get("alpha") is not None:
        raise ConfigError("give exactly one of r or alpha")
    for key in ("r", "alpha"):
        if flags.get(key) is not None:
            cfg[key] = flags[key]
            cfg.pop("alpha" if key == "r" else "r", None)
    if flags.get("dt") is not None:
        cfg["dt"] = flags["dt"] if flags["dt"] == "auto" else float(flags["dt"])
    pert = cfg["perturbation"]
    for flag, key in (("perturbation", "kind"), ("amplitude", "amplitude"), ("seed", "seed"), ("mode_k", "k"), ("mode_index", "index")):
        if flags.get(flag) is not None:
            pert[key] = flags[flag]
    for flag, key in (("a_list", "a"), ("b_list", "b"), ("r_rule", "r_rule")):
        if flags.get(flag) is not None:
            cfg["scan"][key] = flags[flag]
    cfg["command"] = args.command
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    for key in ("n_phi", "n_theta", "n_theta_fe", "k_max", "n_keep", "sample_every"):
        if not isinstance(cfg[key], int) or cfg[key] <= 0:
            raise ConfigError(f"{key} must be a positive integer")
    if cfg["command"] in ("stationary", "spectrum", "nullspace", "homotopy", "evolve"):
        if "a" not in cfg or "b" not in cfg:
            raise ConfigError("a and b are required")
        if ("r" in cfg) == ("alpha" in cfg):
            raise ConfigError("give exactly one of r or alpha")
    pert = cfg["perturbation"]
    if pert.get("kind") == "random" and pert.get("seed") is None:
        raise ConfigError("a random perturbation needs a seed")
    if cfg["dt"] != "auto" and not (isinstance(cfg["dt"], (int, float)) and cfg["dt"] > 0):
        raise ConfigError('dt must be positive or "auto"')


def cap_of(cfg: dict) -> CapParams:
    a, b = float(cfg["a"]), float(cfg["b"])
    if "r" in cfg:
        return make_cap(a, b, float(cfg["r"]))
    return cap_from_angle(a, b, float(cfg["alpha"]))


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _interval(iv) -> list[float]:
    return [iv.lo, iv.hi]


# ---------------------------------------------------------------- commands


def cmd_stationary(cfg: dict) -> int:
    cap = cap_of(cfg)
    report = {
        "cap": cap.as_dict(),
        "cos_alpha": cap.cos_alpha,
        "region": region(cap),
        "degenerate_branch": cap.degenerate,
        "reference": ssc_reference(cap).as_dict(),
        "feasible_r": _interval(feasible_r_range(cap.a, cap.b)),
        "feasible_alpha": _interval(feasible_alpha_range(cap.a, cap.b)),
        "c_crit": cap.c_crit,
        "c_crit_margin": cap.b - cap.c_crit,
    }
    io.write_json(_out_dir(cfg) / "stationary.json", report)
    sys.stdout.write(io.dumps(report))
    return EXIT_OK


def cmd_spectrum(cfg: dict) -> int:
    from .linear_stability import halfsphere_reference, homotopy_spectrum, spectrum

    cap = cap_of(cfg)
    rep = spectrum(cap, cfg["k_max"], cfg["n_theta_fe"])
    out = _out_dir(cfg)
    n_keep = cfg["n_keep"]
    io.write_csv(out / "spectrum.csv", ("a", "b", "r", "alpha", "k", "index", "lambda"), rep.rows(n_keep))
    summary = rep.as_dict(n_keep)
    if cfg["reference"]:
        ref = halfsphere_reference(cap, cfg["k_max"], 2 * n_keep + cfg["k_max"])
        d0 = homotopy_spectrum(cap, [0.0], cfg["k_max"], cfg["n_theta_fe"], n_keep)
        rows = []
        for k in range(cfg["k_max"] + 1):
            for i, (num, exact) in enumerate(zip(d0[k][0], ref[k][:n_keep])):
                rel = abs(num - exact) / max(abs(exact), 1.0 / cap.R**2)
                rows.append((k, i, num, exact, rel))
        io.write_csv(out / "reference.csv", ("k", "index", "computed_d0", "analytic", "rel_error"), rows)
        summary["reference_max_rel_error"] = max(r[-1] for r in rows)
    io.write_json(out / "spectrum.json", summary)
    sys.stdout.write(io.dumps(summary))
    return EXIT_OK


def cmd_nullspace(cfg: dict) -> int:
    from .linear_stability import nullspace_residuals

    cap = cap_of(cfg)
    rows = []
    for level in (1, 2):
        n_phi, n_theta = cfg["n_phi"] * level, cfg["n_theta"] * level
        rows.append((n_phi, n_theta, *nullspace_residuals(cap, n_phi, n_theta)))
    ratio = [c / f if f > 0 else math.inf for c, f in zip(rows[0][2:], rows[1][2:])]
    out = _out_dir(cfg)
    io.write_csv(out / "nullspace.csv", ("n_phi", "n_theta", "res_v0", "res_v1", "res_v2"), rows)
    summary = {"cap": cap.as_dict(), "residuals": [list(r) for r in rows], "ratio": ratio}
    io.write_json(out / "nullspace.json", summary)
    sys.stdout.write(io.dumps(summary))
    return EXIT_OK


SCAN_COLUMNS = ("a", "b", "r", "alpha", "region", "c_crit", "margin", "proven_stable_region", "status",
                "nullspace_dim", "min_positive", "flag_has_negative", "reason")


def cmd_scan(cfg: dict) -> int:
    from .linear_stability import scan_parameters

    sc = cfg["scan"]
    rule = sc.get("r_rule", "mid")
    rows = scan_parameters(sc["a"], sc["b"], rule, cfg["k_max"], cfg["n_theta_fe"], io.thread_cap(cfg["threads"]))
    out = _out_dir(cfg)
    io.write_csv(out / "scan.csv", SCAN_COLUMNS, ([row.get(c) for c in SCAN_COLUMNS] for row in rows))
    n_ok = sum(row["status"] == "ok" for row in rows)
    summary = {"cells": len(rows), "ok": n_ok}
    sys.stdout.write(io.dumps(summary))
    return EXIT_OK if n_ok else EXIT_SCAN


def cmd_homotopy(cfg: dict) -> int:
    from .linear_stability import homotopy_spectrum, spectrum

    cap = cap_of(cfg)
    d = cfg["d_values"]
    n_eigs = min(cfg["n_keep"], 5)
    curves = homotopy_spectrum(cap, d, cfg["k_max"], cfg["n_theta_fe"], n_eigs)
    rows = [(k, dv, *curves[k][j]) for k in sorted(curves) for j, dv in enumerate(d)]
    out = _out_dir(cfg)
    io.write_csv(out / "homotopy.csv", ("k", "d", *(f"lambda_{i}" for i in range(n_eigs))), rows)
    summary = {"cap": cap.as_dict(), "d_values": list(map(float, d))}
    if d[-1] == 1.0:
        # the boundary-scaled operator at d = 1 is the local mode operator; mode 0 is reported without the mean term
        full = spectrum(cap, max(cfg["k_max"], 2), cfg["n_theta_fe"])
        summary["d1_vs_spectrum_k_ge_1"] = max(
            float(np.max(np.abs(curves[k][-1] - full.modes[k][:n_eigs]))) for k in range(1, cfg["k_max"] + 1)
        )
    io.write_json(out / "homotopy.json", summary)
    sys.stdout.write(io.dumps(summary))
    return EXIT_OK


def initial_field(cfg: dict, cap: CapParams, grid):
    from . import flow_sim
    from .linear_stability import analytic_nullspace
    from .surface_calculus import Field

    pert = cfg["perturbation"]
    kind = pert.get("kind", "mode")
    amp = float(pert.get("amplitude", 0.01))
    if kind == "zero":
        return Field.zeros(grid)
    if kind == "mode":
        return flow_sim.mode_perturbation(grid, amp, int(pert.get("k", 2)))
    if kind == "random":
        return flow_sim.random_smooth_perturbation(grid, int(pert["seed"]), amp)
    if kind == "eigen":
        return flow_sim.eigenfunction_perturbation(cap, grid, int(pert.get("k", 0)), int(pert.get("index", 1)), amp)
    if kind == "nullspace":
        v = list(analytic_nullspace(cap, grid))[int(pert.get("index", 1))]
        return v * amp
    raise ConfigError(f"unknown perturbation {kind!r}")


def cmd_evolve(cfg: dict) -> int:
    from . import flow_sim
    from .linear_stability import spectrum
    from .surface_calculus import Grid

    cap = cap_of(cfg)
    grid = Grid.for_cap(cap, cfg["n_phi"], cfg["n_theta"])
    T_end = cfg["T_end"]
    if T_end is None:
        lam = spectrum(cap, 2, 200).min_positive
        T_end = 5.0 / lam
    u0 = initial_field(cfg, cap, grid)
    bound = flow_sim.dt_stability_bound(grid, cap, cfg["c_cfl"])
    traj = flow_sim.evolve(
        u0, cap, grid, T_end=T_end, dt=cfg["dt"], sample_every=cfg["sample_every"],
        mode=cfg["flow"], scheme=cfg["scheme"], c_cfl=cfg["c_cfl"],
    )
    out = _out_dir(cfg)
    traj.write_csv(out / "trajectory.csv")
    summary = {
        "status": traj.status,
        "reason": traj.reason,
        "T_end": T_end,
        "dt": traj.dt,
        "dt_stability_bound": bound,
        "scheme": cfg["scheme"],
        "steps": traj.steps,
        "volume_drift": float(np.max(np.abs(traj["volume"] - traj["volume"][0])) / abs(traj["volume"][0])),
        "max_energy_increase": traj.max_energy_increase() if traj.step_energy else None,
    }
    try:
        rate, r2 = flow_sim.decay_rate(traj)
        summary["decay"] = {"rate": rate, "r2": r2}
    except InsufficientDecay:
        summary["decay"] = "InsufficientDecay"
    except ValueError as exc:
        summary["decay"] = f"unavailable: {exc}"
    if traj.final is not None and cfg["flow"] == "nonlinear":
        flow = flow_sim.Flow(cap, grid)
        fit = flow_sim.fit_sphere(flow.embedding(traj.final))
        r_fit, ca_fit = fit.contact()
        summary["fitted_cap"] = {
            "center": fit.center.tolist(),
            "R": fit.R,
            "r": r_fit,
            "cos_alpha": ca_fit,
            "stationarity_mismatch": ca_fit - (cap.b / r_fit - cap.a),
            "residual": fit.residual,
        }
    io.write_json(out / "summary.json", summary)
    sys.stdout.write(io.dumps(summary))
    return EXIT_FLOW if traj.status in ("StepRejected", "AngleDegenerate") else EXIT_OK


HANDLERS = {
    "stationary": cmd_stationary,
    "spectrum": cmd_spectrum,
    "nullspace": cmd_nullspace,
    "scan": cmd_scan,
    "homotopy": cmd_homotopy,
    "evolve": cmd_evolve,
}


def _fail(code: int, exc: CapflowError) -> int:
    sys.stderr.write(io.dumps({"error": type(exc).__name__, "reason": exc.reason}))
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return HANDLERS[cfg["command"]](cfg)
    except (NoStationaryCap, NotHalfsphere, ConfigError) as exc:
        return _fail(EXIT_PARAMS, exc)
    except SolverFailure as exc:
        return _fail(EXIT_SOLVER, exc)
    except (StepRejected, AngleDegenerate, OffsetOutOfChart) as exc:
        return _fail(EXIT_FLOW, exc)


if __name__ == "__main__":
    sys.exit(main())
