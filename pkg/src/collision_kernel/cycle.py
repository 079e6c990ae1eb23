"""Exact per-cycle dynamics.

The cycle unitary is a midpoint-rule product of sub-interval exponentials,
followed by the kick unitary when the spec has one. Channels act on the
system by attaching the ancilla state, conjugating and tracing out.
"""

from __future__ import annotations

import hashlib
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import opalg
from .errors import ModelError
from .model import InteractionEnsemble, SimulationParams, dumps_model, smooth_hamiltonian
from .numerics import Numerics, resolve


@dataclass(frozen=True, eq=False)
class Channel:
    """A system superoperator produced by one cycle of duration ``dt``."""

    super: np.ndarray
    dim_s: int
    dt: float

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return opalg.apply_superop(self.super, rho)

    def trace_preservation_error(self) -> float:
        # the adjoint must fix the identity: vec(I)^T S = vec(I)^T
        vid = opalg.vec(np.eye(self.dim_s))
        return float(np.max(np.abs(vid @ self.super - vid)))

    def min_choi_eigenvalue(self) -> float:
        c = opalg.choi_matrix(self.super)
        return float(np.linalg.eigvalsh(0.5 * (c + opalg.dag(c))).min())

    def hermiticity_error(self) -> float:
        worst = 0.0
        for b in opalg.hermitian_basis(self.dim_s):
            worst = max(worst, opalg.asymmetry(self.apply(b)))
        return worst

    def cptp_violations(self, numerics: Numerics | None = None) -> list[str]:
        num = resolve(numerics)
        out = []
        tp = self.trace_preservation_error()
        if tp > num.trace_preservation:
            out.append(f"trace preservation error {tp:.3e}")
        ce = self.min_choi_eigenvalue()
        if ce < -num.choi_floor:
            out.append(f"Choi eigenvalue {ce:.3e} below floor")
        return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.states)

    def bloch(self) -> np.ndarray:
        return np.array([opalg.bloch_vector(r) for r in self.states])


def _substep_unitaries(ens: InteractionEnsemble, k, params: SimulationParams):
    n = params.substeps
    h = params.dt / n
    for j in range(n):
        xi = (j + 0.5) / n
        yield opalg.mat_exp((-1j * h / ens.hbar) * smooth_hamiltonian(ens, k, xi))


def kick_unitary(ens: InteractionEnsemble, k) -> np.ndarray | None:
    kick = ens.spec(k).kick
    if kick is None:
        return None
    return opalg.mat_exp((-1j * kick.scale / ens.hbar) * kick.generator)


def cycle_unitary(ens: InteractionEnsemble, k, params: SimulationParams) -> np.ndarray:
    """Time-ordered joint unitary of one full cycle of spec ``k``."""
    s = ens.spec(k)
    d = ens.dim_s * s.ancilla_dim
    u = np.eye(d, dtype=complex)
    for step in _substep_unitaries(ens, k, params):
        u = step @ u
    kick = kick_unitary(ens, k)
    if kick is not None:
        u = kick @ u
    return u


def channel_from_unitary(u: np.ndarray, rho_a: np.ndarray, dim_s: int, dt: float) -> Channel:
    return Channel(opalg.reduced_sandwich(u, u, rho_a, dim_s), dim_s, dt)


def single_channel(ens: InteractionEnsemble, k, params: SimulationParams) -> Channel:
    s = ens.spec(k)
    return channel_from_unitary(cycle_unitary(ens, k, params), s.rho_a, ens.dim_s, params.dt)


def fingerprint(ens: InteractionEnsemble, params: SimulationParams) -> str:
    text = dumps_model(ens) + f"|{params.dt!r}|{params.substeps}"
    return hashlib.sha256(text.encode()).hexdigest()


class _ChannelCache:
    def __init__(self, maxsize: int = 64):
        self.maxsize = maxsize
        self._data: OrderedDict[str, Channel] = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            ch = self._data.get(key)
            if ch is not None:
                self._data.move_to_end(key)
            return ch

    def put(self, key, ch):
        with self._lock:
            self._data[key] = ch
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


CHANNEL_CACHE = _ChannelCache()


def averaged_channel(ens: InteractionEnsemble, params: SimulationParams,
                     use_cache: bool = True) -> Channel:
    """Probability-weighted mixture of the per-type channels."""
    key = fingerprint(ens, params) if use_cache else None
    if key is not None:
        hit = CHANNEL_CACHE.get(key)
        if hit is not None:
            return hit
    d2 = ens.dim_s ** 2
    total = np.zeros((d2, d2), dtype=complex)
    for s in ens.specs:
        if s.p == 0.0:
            continue
        total = total + s.p * single_channel(ens, s, params).super
    ch = Channel(total, ens.dim_s, params.dt)
    if key is not None:
        CHANNEL_CACHE.put(key, ch)
    return ch


def evolve_stroboscopic(ch: Channel, rho0: np.ndarray, n: int) -> Trajectory:
    """States after 0, 1, ..., n applications of ``ch``."""
    rho0 = opalg.as_operator(rho0)
    if rho0.shape[0] != ch.dim_s:
        raise ModelError(f"state dimension {rho0.shape[0]} != channel dimension {ch.dim_s}")
    if n < 0:
        raise ModelError("n must be nonnegative")
    states = [rho0]
    v = opalg.vec(rho0)
    for _ in range(n):
        v = ch.super @ v
        states.append(opalg.unvec(v, ch.dim_s))
    return Trajectory(ch.dt * np.arange(n + 1), states)


def snap_tau(tau: float, params: SimulationParams) -> tuple[int, float]:
    """Index and time of the sub-interval boundary nearest to ``tau``."""
    if not 0.0 <= tau <= params.dt:
        raise ModelError(f"tau={tau} outside [0, dt]")
    j = int(round(tau / params.dt * params.substeps))
    j = min(max(j, 0), params.substeps)
    return j, params.dt * j / params.substeps


def partial_unitaries(ens: InteractionEnsemble, k, params: SimulationParams) -> list[np.ndarray]:
    """U(tau_j) for every sub-interval boundary j = 0..substeps.

    The last entry includes the kick, so it equals :func:`cycle_unitary`.
    """
    s = ens.spec(k)
    u = np.eye(ens.dim_s * s.ancilla_dim, dtype=complex)
    out = [u]
    for step in _substep_unitaries(ens, k, params):
        u = step @ u
        out.append(u)
    kick = kick_unitary(ens, k)
    if kick is not None:
        out[-1] = kick @ out[-1]
    return out


def exact_midcycle(ens: InteractionEnsemble, k, rho_start: np.ndarray, tau: float,
                   params: SimulationParams) -> tuple[np.ndarray, float]:
    """Exact reduced state a time ``tau`` into a cycle.

    ``tau`` is snapped to the nearest sub-interval boundary; the snapped
    value is returned alongside the state.
    """
    j, snapped = snap_tau(tau, params)
    u = partial_unitaries(ens, k, params)[j]
    s = ens.spec(k)
    joint = u @ np.kron(rho_start, s.rho_a) @ opalg.dag(u)
    return opalg.partial_trace(joint, [ens.dim_s, s.ancilla_dim], keep=0), snapped
