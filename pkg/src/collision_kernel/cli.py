"""Command-line scenario runner.

    python -m collision_kernel simulate    --model m.json --dt 0.01 --cycles 1000 --out run/
    python -m collision_kernel liouvillian --scenario zz --order 2 --out run/
    python -m collision_kernel lindblad    --model m.json --out run/
    python -m collision_kernel verify      --model m.json --out run/
    python -m collision_kernel scenario    --scenario ss --param rz=1 --out run/

Exit codes: 0 success, 1 a checked bound failed (verify), 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, opalg
from .cycle import averaged_channel, evolve_stroboscopic
from .diagnostics import generator_distance, stroboscopic_scan, truncation_scan
from .errors import (BranchCutError, CollisionKernelError, ModelError, NumericsError,
                     UnsupportedError)
from .export import csv_text, dumps_json
from .lindblad import decompose, rate_bound, report_dict
from .model import (InteractionEnsemble, SimulationParams, SwitchingFunction, dumps_model,
                    load_model, validate)
from .numerics import default_numerics
from .qubit import (analytic_ss, analytic_zz, bloch_coefficients, caves_milburn_scenario,
                    double_commutator_prefactor, integrate_bloch, qubit_generator,
                    ss_ensemble, to_ensemble, xx_ensemble, zz_ensemble)
from .randomize import random_pure
from .series import (channel_coefficients, dissipator_variance_form, generator_parts,
                     liouvillian_exact, liouvillian_series)

COMMANDS = ("simulate", "liouvillian", "lindblad", "verify", "scenario")
QUBIT_SCENARIOS = {"zz": zz_ensemble, "xx": xx_ensemble, "ss": ss_ensemble}
SCENARIOS = tuple(QUBIT_SCENARIOS) + ("caves-milburn",)
QUBIT_DEFAULTS = {
    "zz": {"rx": 0.0, "ry": 0.0, "rz": 0.0},
    "xx": {"rx": 0.5, "ry": 0.0, "rz": 0.0},
    "ss": {"rx": 0.0, "ry": 0.0, "rz": 0.5},
}
QUBIT_KEYS = {"omega_s", "omega_a", "j0", "rx", "ry", "rz", "profile"}
CM_KEYS = {"sigma", "tau", "oscillator_dim", "system_dim", "omega"}
STATE_KEYS = {"a0", "state"}


class UsageError(CollisionKernelError):
    """Bad command-line input (exit code 2)."""


@dataclass
class RunConfig:
    command: str
    model: InteractionEnsemble
    out: Path
    fmt: str
    dt: float
    cycles: int
    order: int
    substeps: int
    seed: int
    scenario: str | None
    params: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def sim(self) -> SimulationParams:
        try:
            return SimulationParams(self.dt, self.cycles, self.substeps, self.order)
        except ModelError as exc:
            raise UsageError(str(exc)) from None


# --- argument handling ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="collision_kernel",
                                 description="Repeated-interaction open system simulator.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("name", nargs="?", help="scenario name (same as --scenario)")
    ap.add_argument("--model", metavar="PATH", help="model JSON file")
    ap.add_argument("--scenario", metavar="NAME", help=f"named scenario: {', '.join(SCENARIOS)}")
    ap.add_argument("--param", metavar="KEY=VALUE", action="append", default=[],
                    help="scenario or state parameter; repeatable")
    ap.add_argument("--out", metavar="DIR", default=".", help="output directory")
    ap.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv",
                    help="trajectory and scan format; reports are always JSON")
    ap.add_argument("--dt", type=float, default=0.01, help="cycle time")
    ap.add_argument("--cycles", type=int, default=100, help="number of collisions")
    ap.add_argument("--order", type=int, default=1, help="series truncation order")
    ap.add_argument("--substeps", type=int, default=64, help="integrator sub-intervals per cycle")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized initial states")
    ap.add_argument("--workers", type=int, default=1, help="threads for parameter sweeps")
    return ap


def parse_params(items) -> dict:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        if key in out:
            raise UsageError(f"--param {key} given twice")
        out[key] = value.strip()
    return out


def _num(params: dict, key: str, default: float) -> float:
    if key not in params:
        return default
    try:
        v = float(params[key])
    except ValueError:
        raise UsageError(f"--param {key}={params[key]!r} is not a number") from None
    if not np.isfinite(v):
        raise UsageError(f"--param {key} must be finite")
    return v


def _vector(params: dict, key: str, default) -> np.ndarray:
    if key not in params:
        return np.asarray(default, dtype=float)
    try:
        v = np.array([float(x) for x in params[key].split(",")])
    except ValueError:
        raise UsageError(f"--param {key}={params[key]!r} is not a comma-separated vector") from None
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise UsageError(f"--param {key} needs three finite components")
    return v


def _check_keys(params: dict, allowed: set, where: str) -> None:
    extra = sorted(set(params) - allowed)
    if extra:
        raise UsageError(f"unknown --param keys for {where}: {extra}; allowed {sorted(allowed)}")


def scenario_model(name: str, params: dict, dt: float):
    """(ensemble, info) for a named scenario; info carries the resolved parameters."""
    if name in QUBIT_SCENARIOS:
        _check_keys(params, QUBIT_KEYS | STATE_KEYS, name)
        d = QUBIT_DEFAULTS[name]
        omega_s = _num(params, "omega_s", 1.0)
        omega_a = _num(params, "omega_a", 0.5)
        j0 = _num(params, "j0", 1.0)
        r = np.array([_num(params, k, d[k]) for k in ("rx", "ry", "rz")])
        profile = params.get("profile", "constant")
        if profile == "constant":
            g = SwitchingFunction.constant(j0)
        elif profile == "ramp":
            g = SwitchingFunction.polynomial([0.0, 2.0 * j0])
        else:
            raise UsageError(f"profile must be constant or ramp, got {profile!r}")
        if np.linalg.norm(r) > 1.0 + 1e-12:
            raise UsageError(f"ancilla Bloch vector {r.tolist()} has norm > 1")
        qe = QUBIT_SCENARIOS[name](omega_s, omega_a, g, r)
        info = {"omega_s": omega_s, "omega_a": omega_a, "j0": j0, "bloch_a": r.tolist(),
                "profile": profile}
        return to_ensemble(qe), {"qubit": qe, "info": info}
    if name == "caves-milburn":
        _check_keys(params, CM_KEYS | STATE_KEYS, name)
        sigma = _num(params, "sigma", 10.0)
        tau = _num(params, "tau", dt)
        odim = int(_num(params, "oscillator_dim", 24))
        sdim = int(_num(params, "system_dim", 4))
        omega = _num(params, "omega", 1.0)
        sc = caves_milburn_scenario(sigma, tau, dt, odim, sdim, omega)
        info = {"sigma": sigma, "tau": tau, "oscillator_dim": odim, "system_dim": sdim,
                "omega": omega}
        return sc.ensemble, {"caves_milburn": sc, "info": info}
    raise UsageError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def make_config(args) -> RunConfig:
    scen = args.scenario or args.name
    if args.name and args.scenario and args.name != args.scenario:
        raise UsageError("scenario given twice with different names")
    if args.command == "scenario" and not scen:
        raise UsageError("scenario needs a name")
    if scen and args.model:
        raise UsageError("give either --model or --scenario, not both")
    if not scen and not args.model:
        raise UsageError("a model is required: --model PATH or --scenario NAME")
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    params = parse_params(args.param)
    extra = {"workers": args.workers}
    if scen:
        model, extra_s = scenario_model(scen, params, args.dt)
        extra.update(extra_s)
    else:
        path = Path(args.model)
        if not path.is_file():
            raise UsageError(f"model file {path} does not exist")
        _check_keys(params, STATE_KEYS, "a model file")
        model = load_model(path)
    report = validate(model)
    if report:
        raise ModelError("invalid model:\n  " + "\n  ".join(map(str, report)))
    cfg = RunConfig(args.command, model, Path(args.out), args.fmt, args.dt, args.cycles,
                    args.order, args.substeps, args.seed, scen, params, extra)
    cfg.sim  # validates the numeric flags
    return cfg


def initial_state(cfg: RunConfig) -> np.ndarray:
    d = cfg.model.dim_s
    p = cfg.params
    if "a0" in p:
        if d != 2:
            raise UsageError("a0 applies to qubit systems only")
        a0 = _vector(p, "a0", None)
        if np.linalg.norm(a0) > 1.0 + 1e-12:
            raise UsageError("a0 has norm > 1")
        return opalg.bloch_to_density(a0)
    kind = p.get("state", "plus")
    if kind == "plus":
        v = np.ones(d, dtype=complex) / np.sqrt(d)
        return np.outer(v, v.conj())
    if kind == "ground":
        rho = np.zeros((d, d), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    if kind == "mixed":
        return np.eye(d, dtype=complex) / d
    if kind == "random":
        return random_pure(np.random.default_rng(cfg.seed), d)
    raise UsageError(f"state must be plus, ground, mixed or random, got {kind!r}")


# --- output ----------------------------------------------------------------------------------

def _write(cfg: RunConfig, name: str, text: str) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / name
    path.write_text(text)
    return path


def trajectory_text(times, states, fmt: str) -> str:
    d = states[0].shape[0]
    bloch = d == 2
    if fmt == "json":
        obj = {"times": np.asarray(times, float), "states": [np.asarray(s) for s in states]}
        if bloch:
            obj["bloch"] = [opalg.bloch_vector(s) for s in states]
        return dumps_json(obj)
    header = ["cycle", "t"]
    for i in range(d):
        for j in range(d):
            header += [f"rho_{i}{j}_re", f"rho_{i}{j}_im"]
    if bloch:
        header += ["ax", "ay", "az"]

    def rows():
        for n, (t, s) in enumerate(zip(times, states)):
            row = [n, float(t)]
            for z in np.asarray(s).ravel():
                row += [float(z.real), float(z.imag)]
            if bloch:
                row += [float(x) for x in opalg.bloch_vector(s)]
            yield row

    return csv_text(header, rows())


def _ext(cfg: RunConfig) -> str:
    return "json" if cfg.fmt == "json" else "csv"


# --- subcommands -----------------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> int:
    ch = averaged_channel(cfg.model, cfg.sim)
    traj = evolve_stroboscopic(ch, initial_state(cfg), cfg.cycles)
    path = _write(cfg, f"trajectory.{_ext(cfg)}", trajectory_text(traj.times, traj.states, cfg.fmt))
    _write(cfg, "model.json", dumps_model(cfg.model))
    print(f"simulate: {len(traj)} states written to {path}")
    return 0


def liouvillian_report(cfg: RunConfig) -> dict:
    ens, sim = cfg.model, cfg.sim
    ch = averaged_channel(ens, sim)
    l_exact = liouvillian_exact(ch)
    out = {"dt": cfg.dt, "substeps": cfg.substeps, "order": cfg.order, "hbar": ens.hbar,
           "exact": l_exact}
    residuals = {"exp_roundtrip": float(np.max(np.abs(opalg.mat_exp(cfg.dt * l_exact) - ch.super)))}
    if ens.has_kicks:
        out["series"] = None
        out["note"] = "kick models have no series expansion; only the exact generator is reported"
        out["residuals"] = residuals
        return out
    ser = liouvillian_series(channel_coefficients(ens, cfg.order + 1), cfg.order)
    parts = generator_parts(ens)
    out["series"] = list(ser.coefficients)
    out["h0"] = parts.h0
    out["h_eff0"] = parts.h_eff0
    out["h_eff1"] = parts.h_eff1
    out["h1_parts"] = {"g1": parts.h1_parts[0], "g2": parts.h1_parts[1], "g3": parts.h1_parts[2]}
    out["dissipator"] = parts.dissipator
    residuals["l0_series_vs_explicit"] = float(np.max(np.abs(ser.coefficients[0] - parts.l0())))
    if cfg.order >= 1:
        residuals["l1_series_vs_explicit"] = float(np.max(np.abs(ser.coefficients[1] - parts.l1())))
    residuals["dissipator_dual_path"] = float(
        np.max(np.abs(parts.dissipator - dissipator_variance_form(ens))))
    residuals["exact_vs_truncated"] = generator_distance(l_exact, ser.truncated(cfg.dt))
    out["residuals"] = residuals
    return out


def cmd_liouvillian(cfg: RunConfig) -> int:
    path = _write(cfg, "liouvillian.json", dumps_json(liouvillian_report(cfg)))
    print(f"liouvillian: report written to {path}")
    return 0


def cmd_lindblad(cfg: RunConfig) -> int:
    ens = cfg.model
    if ens.has_kicks:
        raise UnsupportedError("the Lindblad decomposition needs a smooth (non-kick) model")
    dec = decompose(ens, generator_parts(ens), cfg.dt)
    bound = rate_bound(ens, cfg.dt, dec)
    path = _write(cfg, "lindblad.json", dumps_json(report_dict(dec, bound)))
    print(f"lindblad: {len(dec.modes)} modes, bound satisfied={bound.satisfied}, "
          f"report written to {path}")
    return 0


def verify_report(cfg: RunConfig) -> tuple[dict, dict]:
    """(summary, {file name: text}) for the verify subcommand."""
    ens, sim = cfg.model, cfg.sim
    workers = cfg.extra.get("workers", 1)
    dts = cfg.dt * 0.5 ** np.arange(5)
    horizon = cfg.cycles * cfg.dt
    rho = initial_state(cfg)
    files, checks = {}, {}
    summary = {"dt": cfg.dt, "dts": dts, "horizon": horizon, "substeps": cfg.substeps}
    if ens.has_kicks:
        na = "not applicable: kick models are outside the bounded-Hamiltonian analysis"
        summary["stroboscopic"] = {"status": na}
        summary["rate_bound"] = {"status": na}
        summary["truncation"] = {"status": na}
    else:
        if len(ens.specs) == 1:
            rep = stroboscopic_scan(ens, dts, rho, cfg.substeps, workers=workers)
            ok = bool(np.all(rep.errors <= rep.bounds + rep.slack))
            checks["stroboscopic"] = ok
            files[f"verify_stroboscopic.{_ext(cfg)}"] = (
                rep.to_json() if cfg.fmt == "json" else rep.to_csv())
            summary["stroboscopic"] = {"status": "pass" if ok else "fail",
                                       "max_deviation": float(rep.errors.max()),
                                       "c1": rep.meta["c1"], "c2": rep.meta["c2"]}
        else:
            summary["stroboscopic"] = {
                "status": "not applicable: the bound covers a single ancilla type"}
        dec = decompose(ens, generator_parts(ens), cfg.dt)
        rb = rate_bound(ens, cfg.dt, dec)
        checks["rate_bound"] = rb.satisfied
        summary["rate_bound"] = {"status": "pass" if rb.satisfied else "fail",
                                 "gamma_max": rb.gamma_max, "worst_ratio": rb.worst_ratio}
        tr = truncation_scan(ens, cfg.order, dts, horizon, cfg.substeps, workers=workers)
        files[f"verify_truncation.{_ext(cfg)}"] = tr.to_json() if cfg.fmt == "json" else tr.to_csv()
        summary["truncation"] = {"status": "informational", "order": cfg.order,
                                 "expected_slope": cfg.order + 1, "fitted_slope": tr.fitted_slope,
                                 "r_squared": tr.r_squared, "errors": tr.errors,
                                 "growth_factors": tr.growth_factors}
    summary["checks"] = checks
    summary["passed"] = all(checks.values())
    return summary, files


def cmd_verify(cfg: RunConfig) -> int:
    summary, files = verify_report(cfg)
    for name, text in files.items():
        _write(cfg, name, text)
    path = _write(cfg, "verify_summary.json", dumps_json(summary))
    for key in ("stroboscopic", "rate_bound", "truncation"):
        print(f"verify {key}: {summary[key]['status']}")
    print(f"verify: summary written to {path}")
    return 0 if summary["passed"] else 1


def scenario_summary(cfg: RunConfig, traj) -> dict:
    name = cfg.scenario
    info = cfg.extra["info"]
    out = {"scenario": name, "parameters": info, "dt": cfg.dt, "cycles": cfg.cycles}
    t_end = float(traj.times[-1])
    if name in QUBIT_SCENARIOS:
        qe = cfg.extra["qubit"]
        coeffs = bloch_coefficients(qe)
        pts = traj.bloch()
        a0 = pts[0]
        bl = integrate_bloch(coeffs, cfg.dt, a0, t_end, cfg.dt)
        out["final_bloch"] = pts[-1]
        out["bloch_pipeline_final"] = bl.points[-1]
        out["bloch_pipeline_deviation"] = float(np.max(np.linalg.norm(bl.points - pts, axis=1)))
        gen = qubit_generator(coeffs, cfg.dt)
        out["bloch_vs_series_generator"] = float(np.max(np.abs(
            gen - liouvillian_series(channel_coefficients(cfg.model, 2), 1).truncated(cfg.dt))))
        r = np.asarray(info["bloch_a"])
        if name == "zz" and info["profile"] == "constant" and info["j0"] != 0.0:
            ref = analytic_zz(info["omega_s"], info["omega_a"], info["j0"], r[2], cfg.dt, a0, t_end)
            out["closed_form_final"] = ref
            out["closed_form_deviation"] = float(np.max(np.abs(ref - pts[-1])))
            out["az_spread"] = float(np.ptp(pts[:, 2]))
        if name == "ss" and info["profile"] == "constant" and np.allclose(r[:2], 0.0):
            ref = analytic_ss(info["omega_s"], info["omega_a"], info["j0"], r[2], cfg.dt, a0, t_end)
            out["closed_form_final"] = ref
            out["closed_form_deviation"] = float(np.max(np.abs(ref - pts[-1])))
            out["purity_final"] = float(np.real(np.trace(traj.states[-1] @ traj.states[-1])))
        out["bloch_norms"] = [float(np.linalg.norm(a0)), float(np.linalg.norm(pts[-1]))]
    else:
        sc = cfg.extra["caves_milburn"]
        gen = liouvillian_exact(averaged_channel(cfg.model, cfg.sim))
        c, resid = double_commutator_prefactor(gen, sc.x_s, cfg.model.hbar)
        out["predicted_prefactor"] = sc.prefactor
        out["measured_prefactor"] = c
        out["relative_error"] = abs(c - sc.prefactor) / sc.prefactor
        out["fit_residual"] = resid
        out["probe_moments"] = sc.moments
    return out


def cmd_scenario(cfg: RunConfig) -> int:
    ch = averaged_channel(cfg.model, cfg.sim)
    traj = evolve_stroboscopic(ch, initial_state(cfg), cfg.cycles)
    _write(cfg, f"trajectory.{_ext(cfg)}", trajectory_text(traj.times, traj.states, cfg.fmt))
    _write(cfg, "model.json", dumps_model(cfg.model))
    summary = scenario_summary(cfg, traj)
    path = _write(cfg, "scenario_summary.json", dumps_json(summary))
    print(f"scenario {cfg.scenario}: summary written to {path}")
    return 0


HANDLERS = {"simulate": cmd_simulate, "liouvillian": cmd_liouvillian, "lindblad": cmd_lindblad,
            "verify": cmd_verify, "scenario": cmd_scenario}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        default_numerics()  # rejects an unknown profile name early
        cfg = make_config(args)
        return HANDLERS[cfg.command](cfg)
    except BranchCutError as exc:
        print(f"error: {exc}\nThe per-cycle channel has no unique generator; reduce dt.",
              file=sys.stderr)
        return 3
    except NumericsError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ModelError, UnsupportedError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
