"""Lindblad form of the leading-order dissipator and the rate bound.

Each ancilla state is diagonalized, rho_A = sum_alpha lambda_alpha
|alpha><alpha|. Off-diagonal blocks <beta|G0|alpha> of the time-averaged
interaction become jump operators with weight q = p_k lambda_alpha, and the
diagonal blocks are mixed by the eigenvectors of the variance form
Q = diag(q) - q q^T.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import opalg
from .errors import NumericsError
from .export import dumps_json
from .model import InteractionEnsemble
from .numerics import Numerics, resolve
from .series import GeneratorParts, energy_scale, g0_interaction

RECONSTRUCTION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Mode:
    kind: str            # "offdiag" or "diag"
    operator: np.ndarray
    weight: float        # q_(k,alpha) or gamma_m
    rate: float          # dt * weight * E_n**2 / hbar**2
    energy: float        # spectral norm of the operator
    index: tuple         # (k, alpha, beta) or (m,)


@dataclass(frozen=True, eq=False)
class LindbladDecomposition:
    q: np.ndarray
    q_index: list                     # (spec label, alpha) per entry of q
    qmatrix: np.ndarray
    gammas: np.ndarray
    eigvecs: np.ndarray               # columns v_m
    offdiag_modes: list
    diag_modes: list
    dt: float
    hbar: float
    reconstruction_error: float
    degenerate_specs: list = field(default_factory=list)

    @property
    def modes(self) -> list:
        return list(self.offdiag_modes) + list(self.diag_modes)

    @property
    def rates(self) -> np.ndarray:
        return np.array([m.rate for m in self.modes])

    def dissipator(self) -> np.ndarray:
        """(2/hbar^2) [sum q L(offdiag) + sum gamma L(A_m)] as a superoperator."""
        d = self.q_dim_s
        out = np.zeros((d * d, d * d), dtype=complex)
        for m in self.modes:
            out = out + m.weight * opalg.lindblad_superop(m.operator)
        return 2.0 / self.hbar ** 2 * out

    @property
    def q_dim_s(self) -> int:
        return self.diag_modes[0].operator.shape[0] if self.diag_modes else \
            self.offdiag_modes[0].operator.shape[0]


@dataclass(frozen=True)
class RateBound:
    gamma_max: float
    tau_min: float
    avg_dim: float
    qnorm2: float
    energy_scale: float
    satisfied: bool
    worst_ratio: float
    hamiltonian_scale: float = 0.0
    mode_scale: float = 0.0


def sorted_eigh(rho: np.ndarray, clamp: float):
    """Eigenpairs in descending order with a deterministic tie-break."""
    w, v = np.linalg.eigh(0.5 * (rho + opalg.dag(rho)))
    w = np.where(np.abs(w) < clamp, 0.0, w)
    cols = []
    for i in range(len(w)):
        vec = v[:, i]
        # fix the phase so the largest-magnitude component is real positive
        j = int(np.argmax(np.abs(vec) > np.abs(vec).max() - 1e-12))
        vec = vec * np.exp(-1j * np.angle(vec[j]))
        cols.append(vec)
    keys = []
    for i, vec in enumerate(cols):
        keys.append((-round(float(w[i]), 12),
                     tuple(np.round(vec.real, 12)), tuple(np.round(vec.imag, 12))))
    order = sorted(range(len(w)), key=lambda i: keys[i])
    return w[order], np.stack([cols[i] for i in order], axis=1)


def _block(g: np.ndarray, dim_s: int, va: np.ndarray, vb: np.ndarray) -> np.ndarray:
    """<va| g |vb> as an operator on the system."""
    eye = np.eye(dim_s)
    left = np.kron(eye, va.conj()[None, :])
    right = np.kron(eye, vb[:, None])
    return left @ g @ right


def decompose(ens: InteractionEnsemble, parts: GeneratorParts, dt: float,
              numerics: Numerics | None = None, check: bool = True) -> LindbladDecomposition:
    num = resolve(numerics)
    ds, hb = ens.dim_s, ens.hbar
    q, q_index, diag_blocks, offdiag = [], [], [], []
    degenerate = []
    for s in ens.specs:
        lam, vecs = sorted_eigh(s.rho_a, num.eigenvalue_clamp)
        if len(lam) > 1 and np.min(np.abs(np.diff(lam))) < 1e-8:
            degenerate.append(s.label)
        g = g0_interaction(ens, s)
        m = s.ancilla_dim
        for a in range(m):
            qa = s.p * float(lam[a])
            q.append(qa)
            q_index.append((s.label, a))
            diag_blocks.append(_block(g, ds, vecs[:, a], vecs[:, a]))
            for b in range(m):
                if b != a:
                    offdiag.append(((s.label, a, b), qa, _block(g, ds, vecs[:, b], vecs[:, a])))
    q = np.array(q)
    qmat = np.diag(q) - np.outer(q, q)
    gam, v = np.linalg.eigh(qmat)
    order = np.argsort(-gam, kind="stable")
    gam, v = gam[order], v[:, order]
    for i in range(v.shape[1]):
        j = int(np.argmax(np.abs(v[:, i])))
        if v[j, i] < 0:
            v[:, i] = -v[:, i]

    def rate(weight, op):
        e = opalg.spectral_norm(op)
        return dt * weight * e * e / hb ** 2, e

    off_modes = []
    for idx, qa, op in offdiag:
        r, e = rate(qa, op)
        off_modes.append(Mode("offdiag", op, qa, r, e, idx))
    diag_modes = []
    for mi in range(len(gam)):
        op = sum(v[i, mi] * diag_blocks[i] for i in range(len(q)))
        op = opalg.hermitize(op, num)
        r, e = rate(float(gam[mi]), op)
        diag_modes.append(Mode("diag", op, float(gam[mi]), r, e, (mi,)))
    dec = LindbladDecomposition(q, q_index, qmat, gam, v, off_modes, diag_modes, dt, hb,
                                0.0, degenerate)
    err = float(np.max(np.abs(dec.dissipator() - parts.dissipator)))
    dec = LindbladDecomposition(q, q_index, qmat, gam, v, off_modes, diag_modes, dt, hb,
                                err, degenerate)
    if check and err > RECONSTRUCTION_TOL * max(1.0, float(np.max(np.abs(parts.dissipator)))):
        raise NumericsError(f"Lindblad reconstruction mismatch {err:.3e}")
    return dec


def rate_bound(ens: InteractionEnsemble, dt: float, dec: LindbladDecomposition) -> RateBound:
    """Universal bound on every decoherence rate at this order.

    E is the larger of the Hamiltonian energy scale and the largest mode
    norm. Mixing diagonal blocks can give a mode whose norm exceeds every
    Hamiltonian norm, and the bound only holds with E covering the modes.
    """
    e_ham = energy_scale(ens)
    e_mode = max((m.energy for m in dec.modes if m.weight > 0), default=0.0)
    e = max(e_ham, e_mode)
    avg_dim = float(sum(s.p * s.ancilla_dim for s in ens.specs))
    qn2 = float(np.dot(dec.q, dec.q))
    gmax = dt * e * e / ens.hbar ** 2 * (avg_dim - qn2)
    gmax = max(gmax, 0.0)
    rates = dec.rates
    worst = float(np.max(rates) / gmax) if gmax > 0 and rates.size else 0.0
    ok = bool(np.all(rates <= gmax + 1e-12))
    return RateBound(gmax, 1.0 / gmax if gmax > 0 else float("inf"), avg_dim, qn2, e, ok, worst,
                     e_ham, e_mode)


def variance_bilinear(q, x) -> float:
    """x^T Q x with Q = diag(q) - q q^T, the variance of x under q."""
    q = np.asarray(q, dtype=float)
    x = np.asarray(x, dtype=float)
    if q.shape != x.shape:
        raise ValueError(f"length mismatch: {q.shape} vs {x.shape}")
    qm = np.diag(q) - np.outer(q, q)
    return float(x @ qm @ x)


@dataclass(frozen=True, eq=False)
class CanonicalForm:
    rates: np.ndarray          # eigenvalues of the Kossakowski matrix, descending
    operators: list            # traceless jump operators, orthonormal
    hamiltonian: np.ndarray    # Hamiltonian part carried by the generator

    def superop(self, hbar: float = 1.0) -> np.ndarray:
        out = opalg.hamiltonian_superop(self.hamiltonian, hbar)
        for r, f in zip(self.rates, self.operators):
            out = out + r * opalg.lindblad_superop(f)
        return out


def _traceless_basis(d: int) -> list:
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for i in range(d):
        for j in range(d):
            if i != j:
                e = np.zeros((d, d), dtype=complex)
                e[i, j] = 1.0
                basis.append(e)
    for j in range(1, d):
        e = np.zeros((d, d), dtype=complex)
        e[:j, :j] = np.eye(j)
        e[j, j] = -j
        basis.append(e / np.sqrt(j * (j + 1)))
    return basis


def canonicalize(generator: np.ndarray, hbar: float = 1.0) -> CanonicalForm:
    """Orthogonalized GKSL form of any Lindblad generator."""
    d = opalg.superop_dim(generator)
    f = _traceless_basis(d)
    n = len(f)
    c = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            c[i, j] = np.vdot(opalg.vec(opalg.superop_sandwich(f[i], opalg.dag(f[j]))), opalg.vec(generator))
    k = c[1:, 1:]
    k = 0.5 * (k + opalg.dag(k))
    w, u = np.linalg.eigh(k)
    order = np.argsort(-w, kind="stable")
    w, u = w[order], u[:, order]
    ops = [sum(u[i, m] * f[i + 1] for i in range(n - 1)) for m in range(n - 1)]
    ff = sum(c[i, 0] * f[i] for i in range(1, n)) / np.sqrt(d)
    h = hbar * (opalg.dag(ff) - ff) / 2j
    return CanonicalForm(w.real, ops, 0.5 * (h + opalg.dag(h)))


def report_dict(dec: LindbladDecomposition, bound: RateBound | None = None) -> dict:
    out = {
        "dt": dec.dt,
        "hbar": dec.hbar,
        "rate_convention": "Gamma_n = dt * weight * ||F_n||^2 / hbar^2, the coefficient of the "
                           "normalized jump operator once the (dt/2) prefactor of D is included",
        "q": [float(x) for x in dec.q],
        "q_index": [[str(a), int(b)] for a, b in dec.q_index],
        "qmatrix": dec.qmatrix.tolist(),
        "gammas": [float(x) for x in dec.gammas],
        "offdiag_modes": [
            {"spec": m.index[0], "alpha": int(m.index[1]), "beta": int(m.index[2]),
             "weight": m.weight, "rate": m.rate, "energy": m.energy,
             "operator": opalg.as_operator(m.operator)}
            for m in dec.offdiag_modes],
        "diag_modes": [
            {"m": int(m.index[0]), "gamma": m.weight, "rate": m.rate, "energy": m.energy,
             "operator": opalg.as_operator(m.operator)}
            for m in dec.diag_modes if m.weight > 1e-12],
        "reconstruction_error": dec.reconstruction_error,
        "degenerate_ancilla_spectra": list(dec.degenerate_specs),
    }
    if bound is not None:
        out["bound"] = {"gamma_max": bound.gamma_max,
                        "tau_min": bound.tau_min if np.isfinite(bound.tau_min) else None,
                        "avg_dim": bound.avg_dim, "qnorm2": bound.qnorm2,
                        "energy_scale": bound.energy_scale,
                        "hamiltonian_scale": bound.hamiltonian_scale,
                        "mode_scale": bound.mode_scale, "satisfied": bound.satisfied,
                        "worst_ratio": bound.worst_ratio}
    return out


def report_json(dec: LindbladDecomposition, bound: RateBound | None = None) -> str:
    return dumps_json(report_dict(dec, bound))
