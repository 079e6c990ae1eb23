"""Small-dt expansion of the averaged channel and its generator.

Everything here is expressed with dt factored out: the cycle unitary is
``sum_n dt**n U_n`` and the averaged channel is ``sum_n dt**n phi_n``.
Interaction profiles are piecewise polynomials in xi, so the Dyson terms
are built by exact piecewise-polynomial matrix integration and moment
integrals use Gauss-Legendre rules that are exact for the degrees involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product as iproduct

import numpy as np
from numpy.polynomial import Polynomial

from . import opalg
from .cycle import Channel
from .errors import ModelError, UnsupportedError
from .model import (InteractionEnsemble, SwitchingFunction, free_hamiltonian,
                    interaction_hamiltonian)
from .numerics import Numerics

MAX_DYSON_ORDER = 7


# --- scalar quadrature -------------------------------------------------------

def _require_smooth(g: SwitchingFunction) -> None:
    if g.kind == "impulse":
        raise UnsupportedError("impulse switchings have no moment integrals; kicks bypass the series")


@lru_cache(maxsize=64)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _merged_breaks(*gs: SwitchingFunction) -> np.ndarray:
    pts = np.concatenate([g.breakpoints for g in gs] + [np.array([0.0, 1.0])])
    return np.unique(pts)


def _nodes_for(*gs: SwitchingFunction) -> int:
    return 2 * max(g.degree for g in gs) + 4


def integrate(f, breaks: np.ndarray, n: int, lo: float = 0.0, hi: float = 1.0) -> float:
    """Piecewise Gauss-Legendre integral of a vectorized ``f`` over [lo, hi]."""
    x, w = _gauss(n)
    inner = breaks[(breaks > lo) & (breaks < hi)]
    edges = np.concatenate([[lo], inner, [hi]])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        total += half * float(np.dot(w, f(half * x + 0.5 * (a + b))))
    return total


@dataclass(frozen=True)
class MomentIntegrals:
    g0: float
    g1: float
    g2: float


def moment_integrals(g: SwitchingFunction) -> MomentIntegrals:
    """G0 = int g, G1 = int (xi - 1/2) g, G2 = int xi g over [0, 1]."""
    _require_smooth(g)
    br, n = _merged_breaks(g), _nodes_for(g) + 1
    g0 = integrate(g, br, n)
    g1 = integrate(lambda x: (x - 0.5) * g(x), br, n)
    g2 = integrate(lambda x: x * g(x), br, n)
    return MomentIntegrals(g0, g1, g2)


def g3_double_integral(ga: SwitchingFunction, gb: SwitchingFunction) -> float:
    """(1/2) int_0^1 dxi1 ga(xi1) int_0^xi1 dxi2 gb(xi2)."""
    _require_smooth(ga)
    _require_smooth(gb)
    br = _merged_breaks(ga, gb)
    n_in = _nodes_for(gb)
    n_out = _nodes_for(ga, gb) + 2

    def outer(xs):
        inner = np.array([integrate(gb, br, n_in, 0.0, float(x)) for x in xs])
        return ga(xs) * inner

    return 0.5 * integrate(outer, br, n_out)


def g3_table(gs) -> np.ndarray:
    return np.array([[g3_double_integral(a, b) for b in gs] for a in gs])


# --- Dyson terms ---------------------------------------------------------------

def _require_series_model(ens: InteractionEnsemble, k=None) -> None:
    specs = ens.specs if k is None else (ens.spec(k),)
    for s in specs:
        if s.has_kick:
            raise UnsupportedError(
                f"spec {s.label!r} has an impulsive kick; series expansions need a bounded H(xi)"
            )
        for t in s.terms:
            _require_smooth(t.switching)


def _local_coeffs(g: SwitchingFunction, a: float, b: float) -> np.ndarray:
    """Ascending coefficients of g(a + (b - a) s) in s on one piece."""
    if g.kind == "constant":
        return np.array([g.value])
    if g.kind == "polynomial":
        if not g.coefficients:
            return np.array([0.0])
        return (Polynomial(g.coefficients)(Polynomial([a, b - a]))).coef
    ya, yb = float(g(a)), float(g(b))
    return np.array([ya, yb - ya])


def _matpoly_mul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.zeros((p.shape[0] + q.shape[0] - 1,) + p.shape[1:], dtype=complex)
    for i in range(p.shape[0]):
        for j in range(q.shape[0]):
            out[i + j] += p[i] @ q[j]
    return out


def dyson_terms(ens: InteractionEnsemble, k, order: int) -> list[np.ndarray]:
    """Operators U_0..U_order with U(dt) = sum_n dt**n U_n.

    U_n = (-i/hbar)**n times the ordered integral of H(xi_1)...H(xi_n) over
    1 > xi_1 > ... > xi_n > 0.
    """
    if not 0 <= order <= MAX_DYSON_ORDER:
        raise ModelError(f"Dyson order must be in [0, {MAX_DYSON_ORDER}]")
    _require_series_model(ens, k)
    s = ens.spec(k)
    d = ens.dim_s * s.ancilla_dim
    h_free = free_hamiltonian(ens, k)
    breaks = _merged_breaks(*[t.switching for t in s.terms]) if s.terms else np.array([0.0, 1.0])
    pref = -1j / ens.hbar
    start = [np.eye(d, dtype=complex)] + [np.zeros((d, d), dtype=complex) for _ in range(order)]
    for a, b in zip(breaks[:-1], breaks[1:]):
        # H on this piece as a matrix polynomial in the local variable s
        hp = [h_free.copy()]
        for t in s.terms:
            c = _local_coeffs(t.switching, a, b)
            while len(hp) < len(c):
                hp.append(np.zeros((d, d), dtype=complex))
            for m, cm in enumerate(c):
                hp[m] = hp[m] + cm * t.op
        hp = pref * np.array(hp)
        v_prev = start[0][None]
        nxt = [start[0]]
        for n in range(1, order + 1):
            integrand = _matpoly_mul(hp, v_prev)
            m = np.arange(integrand.shape[0])[:, None, None]
            v = np.concatenate([start[n][None], (b - a) * integrand / (m + 1)])
            nxt.append(v.sum(axis=0))
            v_prev = v
        start = nxt
    return start


def channel_coefficients(ens: InteractionEnsemble, order: int) -> list[np.ndarray]:
    """Superoperators phi_0..phi_order of the averaged channel's dt-series."""
    _require_series_model(ens)
    d2 = ens.dim_s ** 2
    out = [np.zeros((d2, d2), dtype=complex) for _ in range(order + 1)]
    for s in ens.specs:
        if s.p == 0.0:
            continue
        u = dyson_terms(ens, s, order)
        for n in range(order + 1):
            for m in range(n + 1):
                out[n] = out[n] + s.p * opalg.reduced_sandwich(u[m], u[n - m], s.rho_a, ens.dim_s)
    return out


# --- generators ------------------------------------------------------------------

def liouvillian_exact(ch: Channel, numerics: Numerics | None = None) -> np.ndarray:
    """(1/dt) times the principal logarithm of the channel."""
    return opalg.mat_log_principal(ch.super, numerics) / ch.dt


def weak_compositions(total: int, parts: int):
    """Ordered tuples of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in weak_compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True, eq=False)
class LiouvillianSeries:
    coefficients: tuple
    order: int
    dt_reference: float | None = None

    def truncated(self, dt: float, order: int | None = None) -> np.ndarray:
        m = self.order if order is None else order
        return sum(dt ** j * self.coefficients[j] for j in range(m + 1))


def liouvillian_series(phis, order: int, dt_reference: float | None = None) -> LiouvillianSeries:
    """Generator coefficients L_0..L_order from channel coefficients.

    L_M = phi_{M+1} - sum_{n=1}^{M} 1/(n+1)! sum over weak compositions
    beta of M-n into n+1 parts of the ordered product L_beta1 ... L_beta(n+1).
    """
    if len(phis) < order + 2:
        raise ModelError(f"order {order} needs channel coefficients up to {order + 1}, "
                         f"got {len(phis) - 1}")
    ls: list[np.ndarray] = []
    prod_cache: dict = {}

    def chain(beta):
        if beta not in prod_cache:
            prod_cache[beta] = ls[beta[0]] if len(beta) == 1 else ls[beta[0]] @ chain(beta[1:])
        return prod_cache[beta]

    for big_m in range(order + 1):
        acc = np.array(phis[big_m + 1], dtype=complex)
        for n in range(1, big_m + 1):
            term = sum(chain(b) for b in weak_compositions(big_m - n, n + 1))
            acc = acc - term / math.factorial(n + 1)
        ls.append(acc)
    return LiouvillianSeries(tuple(ls), order, dt_reference)


@dataclass(frozen=True, eq=False)
class GeneratorParts:
    h0: np.ndarray
    h_eff0: np.ndarray
    h1_parts: tuple
    h_eff1: np.ndarray
    dissipator: np.ndarray
    hbar: float = 1.0

    def l0(self) -> np.ndarray:
        return opalg.hamiltonian_superop(self.h_eff0, self.hbar)

    def l1(self) -> np.ndarray:
        return opalg.hamiltonian_superop(self.h_eff1, self.hbar) + 0.5 * self.dissipator


def _ancilla_average(x: np.ndarray, rho_a: np.ndarray, dim_s: int) -> np.ndarray:
    """Tr_A((1 (x) rho_a) x)."""
    m = rho_a.shape[0]
    return opalg.partial_trace(np.kron(np.eye(dim_s), rho_a) @ x, [dim_s, m], keep=0)


def _comm(a, b):
    return a @ b - b @ a


def _g0_operator(s) -> np.ndarray:
    d = s.terms[0].op.shape[0] if s.terms else None
    if d is None:
        return None
    return sum(moment_integrals(t.switching).g0 * t.op for t in s.terms)


def g0_interaction(ens: InteractionEnsemble, k) -> np.ndarray:
    """Time average of the interaction Hamiltonian of spec ``k``."""
    s = ens.spec(k)
    d = ens.dim_s * s.ancilla_dim
    g = _g0_operator(s)
    return np.zeros((d, d), dtype=complex) if g is None else g


def double_commutator_reduced(g: np.ndarray, rho_a: np.ndarray, dim_s: int) -> np.ndarray:
    """System superoperator of rho -> Tr_A([g, [g, rho (x) rho_a]])."""
    eye = np.eye(g.shape[0], dtype=complex)
    g2 = g @ g
    return (opalg.reduced_sandwich(g2, eye, rho_a, dim_s)
            - 2 * opalg.reduced_sandwich(g, opalg.dag(g), rho_a, dim_s)
            + opalg.reduced_sandwich(eye, opalg.dag(g2), rho_a, dim_s))


def generator_parts(ens: InteractionEnsemble) -> GeneratorParts:
    """Explicit zeroth and first order Hamiltonians and the dissipator."""
    _require_series_model(ens)
    ds, hb = ens.dim_s, ens.hbar
    pre = -1j / hb
    h0 = np.zeros((ds, ds), dtype=complex)
    h1 = np.zeros_like(h0)
    h2 = np.zeros_like(h0)
    h3 = np.zeros_like(h0)
    dbl = np.zeros((ds * ds, ds * ds), dtype=complex)
    for s in ens.specs:
        if s.p == 0.0 or not s.terms:
            continue
        m = s.ancilla_dim
        hs_joint = np.kron(ens.h_system, np.eye(m))
        ha_joint = np.kron(np.eye(ds), s.h_ancilla)
        moms = [moment_integrals(t.switching) for t in s.terms]
        ops = [t.op for t in s.terms]
        g0 = sum(mo.g0 * op for mo, op in zip(moms, ops))
        x1 = sum(mo.g1 * pre * _comm(op, hs_joint) for mo, op in zip(moms, ops))
        x2 = sum(mo.g2 * pre * _comm(op, ha_joint) for mo, op in zip(moms, ops))
        table = g3_table([t.switching for t in s.terms])
        x3 = np.zeros_like(g0)
        for i, j in iproduct(range(len(ops)), repeat=2):
            if i != j and table[i, j] != 0.0:
                x3 = x3 + table[i, j] * pre * _comm(ops[i], ops[j])
        h0 = h0 + s.p * _ancilla_average(g0, s.rho_a, ds)
        h1 = h1 + s.p * _ancilla_average(x1, s.rho_a, ds)
        h2 = h2 + s.p * _ancilla_average(x2, s.rho_a, ds)
        h3 = h3 + s.p * _ancilla_average(x3, s.rho_a, ds)
        dbl = dbl + s.p * double_commutator_reduced(g0, s.rho_a, ds)
    h0, h1, h2, h3 = (opalg.hermitize(h) for h in (h0, h1, h2, h3))
    c0 = opalg.commutator_superop(h0)
    dissipator = (c0 @ c0 - dbl) / hb ** 2
    return GeneratorParts(h0, ens.h_system + h0, (h1, h2, h3), h1 + h2 + h3, dissipator, hb)


def dissipator_variance_form(ens: InteractionEnsemble) -> np.ndarray:
    """Dissipator built as the ensemble variance of the averaged kick C_k.

    C_k = (-i/hbar)[G0(H_SA_k), .] acts on the joint space.  The average
    <<X>>_k reattaches rho_a after averaging X over the whole ensemble, and
    D = sum_k p_k Tr_A((<<C_k^2>>_k - <<C_k>>_k^2)[. (x) rho_a]).
    """
    _require_series_model(ens)
    ds, hb = ens.dim_s, ens.hbar
    att, tr, cs = [], [], []
    for s in ens.specs:
        m = s.ancilla_dim
        att.append(opalg.attach_superop(s.rho_a, ds))
        tr.append(opalg.trace_out_superop(ds, m))
        cs.append((-1j / hb) * opalg.commutator_superop(g0_interaction(ens, s)))

    def red(power: int) -> np.ndarray:
        out = np.zeros((ds * ds, ds * ds), dtype=complex)
        for s, e, t, c in zip(ens.specs, att, tr, cs):
            if s.p != 0.0:
                out = out + s.p * t @ np.linalg.matrix_power(c, power) @ e
        return out

    mean_c, mean_c2 = red(1), red(2)
    d = np.zeros((ds * ds, ds * ds), dtype=complex)
    for s, e, t in zip(ens.specs, att, tr):
        if s.p == 0.0:
            continue
        avg_c = e @ mean_c @ t
        avg_c2 = e @ mean_c2 @ t
        var = avg_c2 - avg_c @ avg_c
        d = d + s.p * t @ var @ e
    return d


def truncated_generator(parts: GeneratorParts, dt: float) -> np.ndarray:
    """-(i/hbar)[H_eff0 + dt H_eff1, .] + (dt/2) D."""
    h = parts.h_eff0 + dt * parts.h_eff1
    return opalg.hamiltonian_superop(h, parts.hbar) + 0.5 * dt * parts.dissipator


# --- energy scales ----------------------------------------------------------------

def max_over_xi(f, n_grid: int = 256) -> float:
    """Maximum of a scalar function on [0, 1]: grid plus parabolic refinement."""
    xs = np.linspace(0.0, 1.0, n_grid)
    ys = np.array([f(x) for x in xs])
    i = int(np.argmax(ys))
    best = float(ys[i])
    if 0 < i < n_grid - 1:
        y0, y1, y2 = ys[i - 1], ys[i], ys[i + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            h = xs[1] - xs[0]
            xv = xs[i] + 0.5 * h * (y0 - y2) / denom
            best = max(best, float(f(float(np.clip(xv, 0.0, 1.0)))))
    return best


def interaction_norm_max(ens: InteractionEnsemble, k, norm=opalg.spectral_norm) -> float:
    s = ens.spec(k)
    if not s.terms:
        return 0.0
    return max_over_xi(lambda x: norm(interaction_hamiltonian(ens, k, x)))


def energy_scale(ens: InteractionEnsemble) -> float:
    """Largest spectral norm among H_S, every H_A and every max_xi H_SA(xi)."""
    vals = [opalg.spectral_norm(ens.h_system)]
    for s in ens.specs:
        vals.append(opalg.spectral_norm(s.h_ancilla))
        vals.append(interaction_norm_max(ens, s))
    return float(max(vals))
