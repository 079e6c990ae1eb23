"""Error analysis: stroboscopic bound, mid-cycle deviation, truncation scans."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import opalg
from .cycle import averaged_channel, partial_unitaries, snap_tau
from .errors import ModelError, UnsupportedError
from .export import csv_text, dumps_json
from .model import InteractionEnsemble, SimulationParams
from .series import (channel_coefficients, energy_scale, interaction_norm_max,
                     liouvillian_exact, liouvillian_series)


@dataclass(frozen=True)
class StroboscopicBound:
    c1: float
    c2: float
    hs_norm: float
    ha_norm: float
    hsa_max: float
    hbar: float = 1.0

    def value(self, dt: float) -> float:
        return self.c1 * dt + self.c2 * dt * dt

    def slack(self, dt: float, energy: float) -> float:
        """Allowance for the neglected third-order remainder."""
        return 0.5 * self.c1 * dt * (dt * energy / self.hbar)


def stroboscopic_bound(ens: InteractionEnsemble, k=None) -> StroboscopicBound:
    """c1 = 4 ||H_SA||_max / hbar and
    c2 = ||H_SA||_max (17 ||H_S|| + 16 ||H_A|| + 8.5 ||H_SA||_max) / hbar^2, trace norms."""
    if len(ens.specs) != 1:
        raise UnsupportedError("the stroboscopic bound covers a single ancilla type only")
    s = ens.spec(0 if k is None else k)
    if s.has_kick:
        raise UnsupportedError("the stroboscopic bound assumes a bounded H(xi); kick models are excluded")
    hs = opalg.trace_norm(ens.h_system)
    ha = opalg.trace_norm(s.h_ancilla)
    hsa = interaction_norm_max(ens, s, opalg.trace_norm)
    hb = ens.hbar
    return StroboscopicBound(4.0 * hsa / hb, hsa * (17 * hs + 16 * ha + 8.5 * hsa) / hb ** 2,
                             hs, ha, hsa, hb)


@dataclass(frozen=True, eq=False)
class MidcycleReport:
    max_deviation: float
    tau_at_max: float
    taus: np.ndarray
    deviations: np.ndarray


def midcycle_deviation(ens: InteractionEnsemble, k, rho_n: np.ndarray, params: SimulationParams,
                       n_tau: int = 32, generator: np.ndarray | None = None) -> MidcycleReport:
    """Largest trace distance between the exact state and exp(tau L_dt) rho_n over a tau grid.

    The grid has ``n_tau`` points from 0 to dt inclusive, each snapped to a
    sub-interval boundary of the cycle integrator.
    """
    s = ens.spec(k)
    if generator is None:
        generator = liouvillian_exact(averaged_channel(ens, params))
    us = partial_unitaries(ens, s, params)
    joint0 = np.kron(rho_n, s.rho_a)
    v0 = opalg.vec(rho_n)
    taus, devs = [], []
    for tau in np.linspace(0.0, params.dt, n_tau):
        j, snapped = snap_tau(float(tau), params)
        u = us[j]
        exact = opalg.partial_trace(u @ joint0 @ opalg.dag(u), [ens.dim_s, s.ancilla_dim], keep=0)
        eff = opalg.unvec(opalg.mat_exp(snapped * generator) @ v0, ens.dim_s)
        taus.append(snapped)
        devs.append(opalg.trace_norm(exact - eff))
    devs = np.array(devs)
    i = int(np.argmax(devs))
    return MidcycleReport(float(devs[i]), float(taus[i]), np.array(taus), devs)


def generator_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Max over a fixed Hermitian basis (unit trace norm) of ||(a - b)[X]||_tr."""
    if a.shape != b.shape:
        raise ModelError(f"shape mismatch {a.shape} vs {b.shape}")
    d = opalg.superop_dim(a)
    diff = a - b
    worst = 0.0
    for x in opalg.hermitian_basis(d):
        x = x / opalg.trace_norm(x)
        worst = max(worst, opalg.trace_norm(opalg.apply_superop(diff, x)))
    return worst


@dataclass(frozen=True, eq=False)
class ScalingReport:
    dts: np.ndarray
    errors: np.ndarray
    fitted_slope: float
    r_squared: float
    bounds: np.ndarray | None = None
    slack: np.ndarray | None = None
    growth_factors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def rows(self):
        n = len(self.dts)
        for i in range(n):
            yield [float(self.dts[i]), float(self.errors[i]),
                   "" if self.bounds is None else float(self.bounds[i]),
                   "" if self.slack is None else float(self.slack[i])]

    def to_csv(self) -> str:
        return csv_text(["dt", "error", "bound", "slack"], self.rows())

    def to_dict(self) -> dict:
        out = {"dts": self.dts, "errors": self.errors, "fitted_slope": self.fitted_slope,
               "r_squared": self.r_squared}
        if self.bounds is not None:
            out["bounds"] = self.bounds
        if self.slack is not None:
            out["slack"] = self.slack
        if self.growth_factors is not None:
            out["growth_factors"] = self.growth_factors
        out["meta"] = self.meta
        return out

    def to_json(self) -> str:
        return dumps_json(self.to_dict())


def loglog_fit(xs, ys) -> tuple[float, float]:
    """Slope and R^2 of log10(y) against log10(x)."""
    lx, ly = np.log10(np.asarray(xs, float)), np.log10(np.asarray(ys, float))
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = slope * lx + icpt
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    return float(slope), 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _check_dts(dts) -> np.ndarray:
    dts = np.asarray(dts, dtype=float)
    if dts.ndim != 1 or len(dts) < 2 or np.any(np.diff(dts) >= 0):
        raise ModelError("dts must be strictly decreasing with at least two entries")
    return dts


def map_ordered(fn, items, workers: int = 1) -> list:
    """fn over items, results in input order regardless of completion order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def truncation_scan(ens: InteractionEnsemble, order: int, dts, horizon: float,
                    substeps: int = 64, rho0: np.ndarray | None = None,
                    workers: int = 1) -> ScalingReport:
    """Accumulated error of the order-``order`` truncated generator.

    For each dt the exact stroboscopic map exp(t L_dt) = channel^(t/dt) is
    compared with exp(t (L_0 + ... + dt^order L_order)) at t = horizon and at
    t = 2 horizon. With ``rho0`` the error is the trace distance of the
    evolved states; otherwise it is :func:`generator_distance` of the maps.
    The bound column carries the reference scale t E^3 dt^(order+1) / hbar^3.
    """
    dts = _check_dts(dts)
    phis = channel_coefficients(ens, order + 1)
    ser = liouvillian_series(phis, order)
    e = energy_scale(ens)

    def err_at(t, l_exact, l_trunc):
        a = opalg.mat_exp(t * l_exact)
        b = opalg.mat_exp(t * l_trunc)
        if rho0 is None:
            return generator_distance(a, b)
        return opalg.trace_norm(opalg.apply_superop(a - b, rho0))

    def point(dt):
        params = SimulationParams(float(dt), substeps=substeps)
        l_exact = liouvillian_exact(averaged_channel(ens, params))
        l_trunc = ser.truncated(float(dt))
        return err_at(horizon, l_exact, l_trunc), err_at(2 * horizon, l_exact, l_trunc)

    pairs = map_ordered(point, dts, workers)
    errs = [a for a, _ in pairs]
    growth = [b / a if a > 0 else float("nan") for a, b in pairs]
    refs = [horizon * e ** 3 * dt ** (order + 1) / ens.hbar ** 3 for dt in dts]
    slope, r2 = loglog_fit(dts, errs)
    return ScalingReport(dts, np.array(errs), slope, r2, np.array(refs), np.zeros(len(dts)),
                         np.array(growth), {"order": order, "horizon": horizon,
                                            "energy_scale": e, "kind": "truncation"})


def stroboscopic_scan(ens: InteractionEnsemble, dts, rho_n: np.ndarray, substeps: int = 64,
                      n_tau: int = 32, workers: int = 1) -> ScalingReport:
    """Mid-cycle deviation against c1 dt + c2 dt^2 for each dt."""
    dts = _check_dts(dts)
    b = stroboscopic_bound(ens)
    e = energy_scale(ens)
    devs = map_ordered(lambda dt: midcycle_deviation(
        ens, 0, rho_n, SimulationParams(float(dt), substeps=substeps), n_tau).max_deviation,
        dts, workers)
    devs = np.array(devs)
    pos = devs > 0
    slope, r2 = loglog_fit(dts[pos], devs[pos]) if pos.sum() >= 2 else (float("nan"), float("nan"))
    return ScalingReport(dts, devs, slope, r2, np.array([b.value(d) for d in dts]),
                         np.array([b.slack(d, e) for d in dts]), None,
                         {"c1": b.c1, "c2": b.c2, "kind": "stroboscopic"})
