"""Dense operator and superoperator algebra.

Operators are square complex ``numpy`` arrays. Superoperators are
``d**2 x d**2`` arrays acting on column-stacked vectorizations, so that

    vec(A @ rho @ B) == superop_sandwich(A, B) @ vec(rho)

with ``superop_sandwich(A, B) = kron(B.T, A)``. This is the only
vectorization convention in the package.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import BranchCutError, ModelError, NumericsError
from .numerics import Numerics, resolve

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def as_operator(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"operator must be square, got shape {a.shape}")
    return a


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(m).T


def vec(m: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(m).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ModelError(f"vector of length {v.size} is not a vectorized {dim}x{dim}")
    return v.reshape(dim, dim, order="F")


def superop_dim(s: np.ndarray) -> int:
    d = int(round(np.sqrt(s.shape[0])))
    if s.shape != (d * d, d * d):
        raise ModelError(f"superoperator shape {s.shape} is not (d^2, d^2)")
    return d


def apply_superop(s: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return unvec(s @ vec(rho), rho.shape[0])


def kron(*ops: np.ndarray) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def partial_trace(m: np.ndarray, dims: Sequence[int], keep: int | Sequence[int]) -> np.ndarray:
    """Trace out every subsystem of ``m`` except those listed in ``keep``.

    ``dims`` is the tensor layout, e.g. ``[dim_s, dim_a]`` with the system
    first; ``keep=0`` returns the system marginal.
    """
    m = np.asarray(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise ModelError(f"operator shape {m.shape} does not match layout {dims}")
    keep = [keep] if np.isscalar(keep) else list(keep)
    n = len(dims)
    if any(not 0 <= k < n for k in keep):
        raise ModelError(f"keep={keep} out of range for {n} subsystems")
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    t = m.reshape(dims + dims)
    kept = [dims[i] for i in keep]
    d = int(np.prod(kept))
    return np.einsum("".join(row) + "".join(col) + "->" + out, t).reshape(d, d)


def superop_sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix of the map rho -> a @ rho @ b."""
    if a.shape != b.shape:
        raise ModelError(f"sandwich factors differ in shape: {a.shape} vs {b.shape}")
    return np.kron(np.transpose(b), a)


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Matrix of rho -> [h, rho]."""
    eye = np.eye(h.shape[0], dtype=complex)
    return superop_sandwich(h, eye) - superop_sandwich(eye, h)


def hamiltonian_superop(h: np.ndarray, hbar: float = 1.0) -> np.ndarray:
    """Matrix of rho -> -(i/hbar) [h, rho]."""
    return (-1j / hbar) * commutator_superop(h)


def lindblad_superop(x: np.ndarray) -> np.ndarray:
    """Matrix of L(x)[rho] = x rho x^+ - {x^+ x, rho}/2."""
    eye = np.eye(x.shape[0], dtype=complex)
    xdx = dag(x) @ x
    return (superop_sandwich(x, dag(x))
            - 0.5 * superop_sandwich(xdx, eye)
            - 0.5 * superop_sandwich(eye, xdx))


def reduced_sandwich(x: np.ndarray, y: np.ndarray, rho_a: np.ndarray, dim_s: int) -> np.ndarray:
    """System superoperator of rho -> Tr_A(x (rho (x) rho_a) y^+).

    ``x`` and ``y`` act on the joint space ordered [system, ancilla].
    """
    dim_a = rho_a.shape[0]
    xr = x.reshape(dim_s, dim_a, dim_s, dim_a)
    yr = np.conj(y).reshape(dim_s, dim_a, dim_s, dim_a)
    # t[i, k, j, l] maps rho[j, l] to out[i, k]
    t = np.einsum("ibja,ac,kblc->ikjl", xr, rho_a, yr)
    d2 = dim_s * dim_s
    return t.transpose(1, 0, 3, 2).reshape(d2, d2)


def attach_superop(rho_a: np.ndarray, dim_s: int) -> np.ndarray:
    """Matrix of rho -> rho (x) rho_a, from dim_s**2 to (dim_s*dim_a)**2."""
    dim_a = rho_a.shape[0]
    cols = []
    for j in range(dim_s * dim_s):
        e = np.zeros(dim_s * dim_s, dtype=complex)
        e[j] = 1.0
        cols.append(vec(np.kron(unvec(e, dim_s), rho_a)))
    return np.stack(cols, axis=1)


def trace_out_superop(dim_s: int, dim_a: int) -> np.ndarray:
    """Matrix of rho_sa -> Tr_A(rho_sa)."""
    d = dim_s * dim_a
    cols = []
    for j in range(d * d):
        e = np.zeros(d * d, dtype=complex)
        e[j] = 1.0
        cols.append(vec(partial_trace(unvec(e, d), [dim_s, dim_a], keep=0)))
    return np.stack(cols, axis=1)


def choi_matrix(s: np.ndarray) -> np.ndarray:
    """Choi matrix  sum_ij |i><j| (x) Phi(|i><j|)."""
    d = superop_dim(s)
    out = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            out += np.kron(e, apply_superop(s, e))
    return out


def mat_exp(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if not np.all(np.isfinite(m)):
        raise NumericsError("mat_exp: non-finite input entries")
    out = scipy.linalg.expm(m)
    if not np.all(np.isfinite(out)):
        raise NumericsError(
            f"mat_exp: exponential overflowed (input norm {np.linalg.norm(m, 2):.3e})"
        )
    return out


def mat_log_principal(m: np.ndarray, numerics: Numerics | None = None) -> np.ndarray:
    """Principal matrix logarithm (eigenvalue imaginary parts in (-pi, pi]).

    Uses an eigendecomposition, falling back to scipy's Schur-based
    ``logm`` when the eigenvector matrix is ill conditioned.
    """
    num = resolve(numerics)
    m = np.asarray(m, dtype=complex)
    w, v = np.linalg.eig(m)
    mags = np.abs(w)
    if np.any(mags <= num.singular):
        raise NumericsError(
            f"mat_log_principal: matrix is singular (min |eigenvalue| = {mags.min():.3e})"
        )
    gap = np.pi - np.abs(np.angle(w))
    on_cut = gap < num.branch
    if np.any(on_cut):
        bad = w[on_cut][0]
        raise BranchCutError(
            f"eigenvalue {bad:.6g} lies on the negative real axis; the logarithm "
            "branch is ambiguous (reduce dt)"
        )
    if np.linalg.cond(v) > num.eig_condition:
        out, _ = scipy.linalg.logm(m, disp=False)
        return np.asarray(out, dtype=complex)
    return v @ np.diag(np.log(w)) @ np.linalg.inv(v)


def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(np.asarray(m), compute_uv=False)))


def spectral_norm(m: np.ndarray) -> float:
    m = np.asarray(m)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def asymmetry(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - dag(m)))) if np.size(m) else 0.0


def is_hermitian(m: np.ndarray, tol: float) -> bool:
    return asymmetry(m) <= tol


def hermitize(m: np.ndarray, numerics: Numerics | None = None) -> np.ndarray:
    """Return ``(m + m^+)/2`` after checking the asymmetry is only drift."""
    num = resolve(numerics)
    m = np.asarray(m, dtype=complex)
    a = asymmetry(m)
    if a > num.hermitian_repair:
        raise NumericsError(
            f"hermitize: asymmetry {a:.3e} exceeds repair tolerance {num.hermitian_repair:.1e}"
        )
    return 0.5 * (m + dag(m))


def density_violations(rho: np.ndarray, tol: float) -> list[str]:
    """Human-readable list of the ways ``rho`` fails to be a density matrix."""
    out = []
    if asymmetry(rho) > tol:
        out.append(f"not hermitian (asymmetry {asymmetry(rho):.3e})")
        return out
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        out.append(f"trace {tr:.12g} != 1")
    lo = float(np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min())
    if lo < -tol:
        out.append(f"negative eigenvalue {lo:.3e}")
    return out


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    return np.array([np.trace(rho @ s).real for s in PAULIS])


def bloch_to_density(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (np.eye(2) + a[0] * SIGMA_X + a[1] * SIGMA_Y + a[2] * SIGMA_Z)


def hermitian_basis(dim: int) -> list[np.ndarray]:
    """Orthonormal (Hilbert-Schmidt) basis of Hermitian dim x dim matrices."""
    basis = []
    for i in range(dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(dim):
        for j in range(i + 1, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = e[j, i] = 1 / np.sqrt(2)
            basis.append(e)
            f = np.zeros((dim, dim), dtype=complex)
            f[i, j] = -1j / np.sqrt(2)
            f[j, i] = 1j / np.sqrt(2)
            basis.append(f)
    return basis


def fit_hamiltonian(generator: np.ndarray, hbar: float = 1.0) -> tuple[np.ndarray, float]:
    """Least-squares Hamiltonian part of a generator.

    Returns ``(h, residual)`` where ``h`` is the traceless Hermitian matrix
    minimizing ``||generator - hamiltonian_superop(h)||_F`` and ``residual``
    is that minimum (Frobenius norm).
    """
    d = superop_dim(generator)
    basis = [b for b in hermitian_basis(d)]
    cols = np.stack([vec(hamiltonian_superop(b, hbar)) for b in basis], axis=1)
    target = vec(generator)
    a = np.concatenate([cols.real, cols.imag])
    y = np.concatenate([target.real, target.imag])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    h = sum(c * b for c, b in zip(coef, basis))
    h = h - np.trace(h) / d * np.eye(d)
    resid = float(np.linalg.norm(generator - hamiltonian_superop(h, hbar)))
    return h, resid
