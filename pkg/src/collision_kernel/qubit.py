"""Qubit system, qubit ancillas: Bloch-vector form of the truncated dynamics.

The joint Hamiltonian of a type-k collision is

    H_k(xi) = hbar w_S . sigma_S + hbar w_Ak . sigma_A + hbar sigma_A^a J_k(xi)[a, b] sigma_S^b

with J_k(xi) = sum_i g_i(xi) M_i a sum of switching functions times constant
3x3 real matrices (first index on the ancilla, second on the system). The
truncated generator then acts on the system Bloch vector as

    a' = 2 (w_eff0 + dt w_eff1) x a - 2 dt B a + 2 dt b,

the rotation sense fixed by rho' = -(i/hbar)[hbar w . sigma, rho].

Also hosts the Caves-Milburn repeated position measurement, whose system and
probe are truncated harmonic oscillators coupled by an end-of-cycle kick.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import opalg
from .errors import ModelError
from .model import (InteractionEnsemble, InteractionSpec, InteractionTerm, Kick,
                    SwitchingFunction)
from .series import g3_double_integral, moment_integrals

LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0


@dataclass(frozen=True, eq=False)
class QubitType:
    p: float
    omega_a: np.ndarray
    coupling: tuple            # ((SwitchingFunction, 3x3 real matrix), ...)
    bloch_a: np.ndarray
    label: str = "A"

    def __post_init__(self):
        object.__setattr__(self, "omega_a", np.asarray(self.omega_a, dtype=float).reshape(3))
        object.__setattr__(self, "bloch_a", np.asarray(self.bloch_a, dtype=float).reshape(3))
        object.__setattr__(self, "coupling", tuple(
            (g, np.asarray(m, dtype=float).reshape(3, 3)) for g, m in self.coupling))


@dataclass(frozen=True, eq=False)
class QubitEnsemble:
    omega_s: np.ndarray
    types: tuple
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omega_s", np.asarray(self.omega_s, dtype=float).reshape(3))
        object.__setattr__(self, "types", tuple(self.types))

    def violations(self) -> list[str]:
        out = []
        total = sum(t.p for t in self.types)
        if abs(total - 1.0) > 1e-12:
            out.append(f"probabilities sum to {total:.15g}")
        for t in self.types:
            if np.linalg.norm(t.bloch_a) > 1 + 1e-12:
                out.append(f"type {t.label!r}: |R| = {np.linalg.norm(t.bloch_a):.6g} > 1")
        return out


@dataclass(frozen=True, eq=False)
class BlochCoefficients:
    omega_s: np.ndarray
    w0: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    d0: np.ndarray
    d1: np.ndarray
    bmat: np.ndarray
    bvec: np.ndarray

    @property
    def w_eff0(self) -> np.ndarray:
        return self.omega_s + self.w0

    @property
    def w_eff1(self) -> np.ndarray:
        return self.w1 + self.w2 + self.w3

    def rhs_matrix(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """(A, c) with a' = A a + c."""
        w = self.w_eff0 + dt * self.w_eff1
        cross = np.einsum("ijk,j->ik", LEVI_CIVITA, w)   # (w x a)_i = eps_ijk w_j a_k
        return 2.0 * cross - 2.0 * dt * self.bmat, 2.0 * dt * self.bvec


@dataclass(frozen=True, eq=False)
class BlochTrajectory:
    times: np.ndarray
    points: np.ndarray
    scenario: dict = field(default_factory=dict)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)


def _moment_matrices(t: QubitType):
    j0, j1, j2 = (np.zeros((3, 3)) for _ in range(3))
    for g, m in t.coupling:
        mo = moment_integrals(g)
        j0 += mo.g0 * m
        j1 += mo.g1 * m
        j2 += mo.g2 * m
    return j0, j1, j2


def bloch_coefficients(qe: QubitEnsemble) -> BlochCoefficients:
    """Coefficients of the Bloch equation from the moment integrals of J_k.

    With J0, J1, J2 the G0, G1, G2 moments of J_k and R_k the ancilla Bloch
    vector (all sums weighted by p_k):

        w0 = sum R J0
        w1 = 2 sum (R J1) x w_S
        w2 = 2 sum (w_A x R) J2
        w3_m = 2 sum eps_mgn G3(J(xi_1)^a_g J(xi_2)^a_n)
        D0_e = sum eps_mne R_g eps_gab J0^a_m J0^b_n
        D1 = sum J0^T J0 - w0 w0^T
        B = Tr(D1) I - D1,  b = D0
    """
    eps = LEVI_CIVITA
    w0, w1, w2, w3, d0 = (np.zeros(3) for _ in range(5))
    second = np.zeros((3, 3))
    for t in qe.types:
        r, wa = t.bloch_a, t.omega_a
        j0, j1, j2 = _moment_matrices(t)
        w0 += t.p * (r @ j0)
        w1 += t.p * 2.0 * np.cross(r @ j1, qe.omega_s)
        w2 += t.p * 2.0 * (np.cross(wa, r) @ j2)
        for gi, mi in t.coupling:
            for gj, mj in t.coupling:
                # J(xi_1) carries M_i, J(xi_2) carries M_j
                c = g3_double_integral(gi, gj)
                if c != 0.0:
                    w3 += t.p * 2.0 * c * np.einsum("mgn,ag,an->m", eps, mi, mj)
        d0 += t.p * np.einsum("mne,g,gab,am,bn->e", eps, r, eps, j0, j0)
        second += t.p * j0.T @ j0
    d1 = second - np.outer(w0, w0)
    bmat = np.einsum("bma,nag,mn->bg", eps, eps, d1)
    return BlochCoefficients(qe.omega_s.copy(), w0, w1, w2, w3, d0, d1, bmat, d0.copy())


def b_matrix_trace_form(d1: np.ndarray) -> np.ndarray:
    """Tr(D1) I - D1^T, equal to the epsilon contraction of D1."""
    return np.trace(d1) * np.eye(3) - d1.T


def bloch_rhs(coeffs: BlochCoefficients, dt: float, a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    w = coeffs.w_eff0 + dt * coeffs.w_eff1
    return 2.0 * np.cross(w, a) - 2.0 * dt * coeffs.bmat @ a + 2.0 * dt * coeffs.bvec


def integrate_bloch(coeffs: BlochCoefficients, dt: float, a0, t_end: float, step: float,
                    scenario: dict | None = None) -> BlochTrajectory:
    """Classical fixed-step RK4 integration of the Bloch equation."""
    if step <= 0:
        raise ModelError("step must be positive")
    n_full = int(np.floor(t_end / step + 1e-9))
    steps = [step] * n_full
    rem = t_end - n_full * step
    if rem > 1e-12 * max(1.0, t_end):
        steps.append(rem)
    a = np.asarray(a0, dtype=float).copy()
    times, pts = [0.0], [a.copy()]
    f = lambda x: bloch_rhs(coeffs, dt, x)
    t = 0.0
    for h in steps:
        k1 = f(a)
        k2 = f(a + 0.5 * h * k1)
        k3 = f(a + 0.5 * h * k2)
        k4 = f(a + h * k3)
        a = a + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        times.append(t)
        pts.append(a.copy())
    return BlochTrajectory(np.array(times), np.array(pts), dict(scenario or {}))


def qubit_generator(coeffs: BlochCoefficients, dt: float) -> np.ndarray:
    """Superoperator of the density-matrix form of the Bloch equation (hbar cancels).

    -i[(w_eff0 + dt w_eff1).sigma, rho] + dt D0.sigma - (dt/2) D1_mn [s_m, [s_n, rho]]
    """
    w = coeffs.w_eff0 + dt * coeffs.w_eff1
    h = sum(w[i] * opalg.PAULIS[i] for i in range(3))
    out = opalg.hamiltonian_superop(h, 1.0)
    affine = sum(coeffs.d0[i] * opalg.PAULIS[i] for i in range(3))
    # rho -> Tr(rho) * affine, i.e. vec(affine) vec(I)^T
    out = out + dt * np.outer(opalg.vec(affine), opalg.vec(np.eye(2)))
    cs = [opalg.commutator_superop(s) for s in opalg.PAULIS]
    for m in range(3):
        for n in range(3):
            if coeffs.d1[m, n] != 0.0:
                out = out - 0.5 * dt * coeffs.d1[m, n] * cs[m] @ cs[n]
    return out


# --- conversion to the generic model ---------------------------------------------------

def coupling_operator(m: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """hbar sum_ab M[a, b] sigma_S^b (x) sigma_A^a on the [system, ancilla] space."""
    out = np.zeros((4, 4), dtype=complex)
    for a in range(3):
        for b in range(3):
            if m[a, b] != 0.0:
                out += m[a, b] * np.kron(opalg.PAULIS[b], opalg.PAULIS[a])
    return hbar * out


def pauli_dot(w, hbar: float = 1.0) -> np.ndarray:
    return hbar * sum(float(w[i]) * opalg.PAULIS[i] for i in range(3))


def to_ensemble(qe: QubitEnsemble) -> InteractionEnsemble:
    specs = []
    for t in qe.types:
        terms = tuple(InteractionTerm(g, coupling_operator(m, qe.hbar)) for g, m in t.coupling)
        specs.append(InteractionSpec(t.label, t.p, opalg.bloch_to_density(t.bloch_a),
                                     pauli_dot(t.omega_a, qe.hbar), terms))
    return InteractionEnsemble(2, pauli_dot(qe.omega_s, qe.hbar), tuple(specs), qe.hbar)


def _switch(switching) -> SwitchingFunction:
    if switching is None:
        return SwitchingFunction.constant(1.0)
    if isinstance(switching, SwitchingFunction):
        return switching
    return SwitchingFunction.constant(float(switching))


def zz_ensemble(omega_s: float, omega_a: float, switching=None, bloch_a=(0, 0, 0),
                hbar: float = 1.0) -> QubitEnsemble:
    m = np.zeros((3, 3))
    m[2, 2] = 1.0
    t = QubitType(1.0, (0, 0, omega_a), ((_switch(switching), m),), bloch_a)
    return QubitEnsemble((0, 0, omega_s), (t,), hbar)


def xx_ensemble(omega_s: float, omega_a: float, switching=None, bloch_a=(0.5, 0, 0),
                hbar: float = 1.0) -> QubitEnsemble:
    m = np.zeros((3, 3))
    m[0, 0] = 1.0
    t = QubitType(1.0, (0, 0, omega_a), ((_switch(switching), m),), bloch_a)
    return QubitEnsemble((0, 0, omega_s), (t,), hbar)


def ss_ensemble(omega_s: float, omega_a: float, switching=None, bloch_a=(0, 0, 0.5),
                hbar: float = 1.0) -> QubitEnsemble:
    t = QubitType(1.0, (0, 0, omega_a), ((_switch(switching), np.eye(3)),), bloch_a)
    return QubitEnsemble((0, 0, omega_s), (t,), hbar)


# --- closed forms -------------------------------------------------------------------------

def _rotate_decay(a0, omega: float, rate_xy: float, t: float):
    c, s = np.cos(2 * omega * t), np.sin(2 * omega * t)
    e = np.exp(-rate_xy * t)
    # counterclockwise about +z for omega > 0
    return e * (a0[0] * c - a0[1] * s), e * (a0[1] * c + a0[0] * s)


def zz_rate(j0: float, sz: float, dt: float) -> float:
    return 2.0 * dt * (1.0 - sz * sz) * j0 * j0


def analytic_zz(omega_s: float, omega_a: float, j0: float, sz: float, dt: float,
                a0, t: float) -> np.ndarray:
    """ZZ coupling: a_z is conserved, a_x, a_y precess at 2w and decay at Gamma."""
    a0 = np.asarray(a0, dtype=float)
    omega = omega_s + j0 * sz
    ax, ay = _rotate_decay(a0, omega, zz_rate(j0, sz, dt), t)
    return np.array([ax, ay, a0[2]])


def ss_rates(j0: float, r: float, dt: float, convention: str = "bloch") -> tuple[float, float]:
    """(Gamma_1, Gamma_2) for the isotropic coupling with R = r z.

    ``"bloch"`` reads the rates off B = J0^2 ((2 - R^2) I + R R^T): a_z relaxes
    at Gamma_1 = 4 dt J0^2 and a_x, a_y decay at Gamma_1 + Gamma_2 with
    Gamma_2 = -2 dt J0^2 R^2. ``"text"`` returns the table values
    Gamma_1 = 2 dt J0^2, Gamma_2 = dt J0^2 (1 - R^2), which do not solve the
    Bloch equation; they are kept for reference only.
    """
    if convention == "bloch":
        return 4.0 * dt * j0 * j0, -2.0 * dt * j0 * j0 * r * r
    if convention == "text":
        return 2.0 * dt * j0 * j0, dt * j0 * j0 * (1.0 - r * r)
    raise ValueError(f"unknown convention {convention!r}")


def analytic_ss(omega_s: float, omega_a: float, j0: float, r: float, dt: float, a0, t: float,
                convention: str = "bloch") -> np.ndarray:
    """Isotropic coupling with the ancilla Bloch vector r z.

    The transverse components precess at 2(w_S + J0 r) and decay at
    Gamma_1 + Gamma_2; a_z relaxes to r at Gamma_1 (see :func:`ss_rates`).
    """
    a0 = np.asarray(a0, dtype=float)
    g1, g2 = ss_rates(j0, r, dt, convention)
    ax, ay = _rotate_decay(a0, omega_s + j0 * r, g1 + g2, t)
    return np.array([ax, ay, r + (a0[2] - r) * np.exp(-g1 * t)])


def xx_generator(omega_s: float, omega_a: float, j0: float, j2: float, sx: float, sy: float,
                 dt: float, j1: float = 0.0) -> BlochCoefficients:
    """Bloch coefficients of the XX coupling from its closed-form scalars.

    w_x^(0) = J0 <s_x>, the first-order x rotation -2 J2 w_A <s_y> (multiplied
    by dt in the Bloch equation), Gamma = 2 dt J0^2 (1 - <s_x>^2) on a_y, a_z.
    A nonzero G1 moment ``j1`` adds the y rotation -2 w_S J1 <s_x>.
    """
    d1 = np.zeros((3, 3))
    d1[0, 0] = j0 * j0 * (1.0 - sx * sx)
    return BlochCoefficients(
        omega_s=np.array([0.0, 0.0, omega_s]),
        w0=np.array([j0 * sx, 0.0, 0.0]),
        w1=np.array([0.0, -2.0 * omega_s * j1 * sx, 0.0]),
        w2=np.array([-2.0 * j2 * omega_a * sy, 0.0, 0.0]),
        w3=np.zeros(3),
        d0=np.zeros(3),
        d1=d1,
        bmat=b_matrix_trace_form(d1),
        bvec=np.zeros(3),
    )


def xx_rate(j0: float, sx: float, dt: float) -> float:
    return 2.0 * dt * j0 * j0 * (1.0 - sx * sx)


# --- Caves-Milburn -------------------------------------------------------------------------

def ladder(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def oscillator_position(dim: int) -> np.ndarray:
    a = ladder(dim)
    return (a + a.conj().T) / np.sqrt(2.0)


def probe_momentum(dim: int, sigma: float, hbar: float = 1.0) -> np.ndarray:
    """Momentum of a truncated oscillator whose ground state has <P^2> = hbar^2 / (2 sigma)."""
    a = ladder(dim)
    mw = hbar / sigma
    return 1j * np.sqrt(mw * hbar / 2.0) * (a.conj().T - a)


@dataclass(frozen=True, eq=False)
class CavesMilburnScenario:
    ensemble: InteractionEnsemble
    prefactor: float
    x_s: np.ndarray
    p_a: np.ndarray
    moments: dict


def caves_milburn_scenario(sigma: float, tau: float, dt: float, oscillator_dim: int = 24,
                           system_dim: int = 4, omega: float = 1.0,
                           hbar: float = 1.0) -> CavesMilburnScenario:
    """Repeated position kicks exp(-i (dt/tau) X_S P_A / hbar) after free evolution.

    Returns the model and the predicted double-commutator prefactor
    dt <P_A^2> / (2 hbar^2 tau^2) = dt / (4 tau^2 sigma).
    """
    if oscillator_dim < 8:
        raise ModelError(f"oscillator_dim must be >= 8, got {oscillator_dim}")
    if sigma <= 0 or tau <= 0 or dt <= 0:
        raise ModelError("sigma, tau and dt must be positive")
    x = oscillator_position(system_dim)
    p = probe_momentum(oscillator_dim, sigma, hbar)
    rho_a = np.zeros((oscillator_dim, oscillator_dim), dtype=complex)
    rho_a[0, 0] = 1.0
    p1 = float(np.trace(rho_a @ p).real)
    p2 = float(np.trace(rho_a @ p @ p).real)
    target = hbar ** 2 / (2.0 * sigma)
    scale = dt / tau
    # the kick only sees P through exp(-i k P); compare with the Gaussian at the largest k
    xs = np.linalg.eigvalsh(x)
    k = scale * (xs.max() - xs.min()) / hbar
    w, v = np.linalg.eigh(p)
    chi = complex(v[0, :] @ np.diag(np.exp(-1j * k * w)) @ v[0, :].conj())
    chi_gauss = np.exp(-0.5 * k * k * target / hbar ** 2)
    if abs(p2 - target) > 0.01 * target or abs(chi.real - chi_gauss) > 0.01 * chi_gauss:
        raise ModelError(
            f"probe truncation dim={oscillator_dim} too small: <P^2>={p2:.6g}, target {target:.6g}, "
            f"characteristic function {chi.real:.6g} vs {chi_gauss:.6g}"
        )
    h_s = hbar * omega * np.diag(np.arange(system_dim)).astype(complex)
    kick = Kick(np.kron(x, p), scale)
    spec = InteractionSpec("probe", 1.0, rho_a, np.zeros_like(rho_a), (), kick)
    ens = InteractionEnsemble(system_dim, h_s, (spec,), hbar)
    pref = dt * p2 / (2.0 * hbar ** 2 * tau ** 2)
    return CavesMilburnScenario(ens, pref, x, p,
                                {"p1": p1, "p2": p2, "target_p2": target, "k_max": k,
                                 "chi": chi.real, "chi_gauss": chi_gauss})


def double_commutator_prefactor(generator: np.ndarray, x: np.ndarray,
                                hbar: float = 1.0) -> tuple[float, float]:
    """Fit generator - (Hamiltonian part) = -c [x, [x, .]]; returns (c, relative residual)."""
    h, _ = opalg.fit_hamiltonian(generator, hbar)
    rest = generator - opalg.hamiltonian_superop(h, hbar)
    cx = opalg.commutator_superop(x)
    basis = -(cx @ cx)
    c = float(np.real(np.vdot(basis, rest) / np.vdot(basis, basis)))
    resid = float(np.linalg.norm(rest - c * basis) / max(np.linalg.norm(rest), 1e-300))
    return c, resid
