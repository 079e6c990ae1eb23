"""Declarative description of a repeated-interaction model.

A model is an :class:`InteractionEnsemble`: a system Hamiltonian plus a list
of ancilla types. Each :class:`InteractionSpec` carries the probability of
meeting that ancilla, its initial state, its free Hamiltonian and the
interaction Hamiltonian over one cycle, written in normalized time
``xi = t/dt`` as a sum of switching functions times constant operators.
A spec may additionally end its cycle with an impulsive kick.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import opalg
from .errors import ModelError, UnsupportedError
from .export import dumps_json, matrix_to_json
from .numerics import Numerics, resolve

MAX_POLY_DEGREE = 16
MAX_SERIES_ORDER = 6

SWITCHING_KINDS = ("constant", "polynomial", "tabulated", "impulse")


@dataclass(frozen=True, eq=False)
class SwitchingFunction:
    """Real profile g(xi) of an interaction over xi in [0, 1].

    Polynomial coefficients are in ascending powers of xi. Tabulated
    samples are taken on a uniform grid including both endpoints and are
    linearly interpolated.
    """

    kind: str
    coefficients: tuple[float, ...] = ()
    samples: tuple[float, ...] = ()
    value: float = 1.0
    strength: float = 0.0

    @classmethod
    def constant(cls, value: float = 1.0) -> "SwitchingFunction":
        return cls("constant", value=float(value))

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "SwitchingFunction":
        return cls("polynomial", coefficients=tuple(float(c) for c in coefficients))

    @classmethod
    def tabulated(cls, samples: Sequence[float]) -> "SwitchingFunction":
        return cls("tabulated", samples=tuple(float(s) for s in samples))

    @classmethod
    def impulse(cls, strength: float) -> "SwitchingFunction":
        return cls("impulse", strength=float(strength))

    @property
    def degree(self) -> int:
        if self.kind == "polynomial":
            return max(len(self.coefficients) - 1, 0)
        if self.kind == "tabulated":
            return 1
        return 0

    @property
    def breakpoints(self) -> np.ndarray:
        if self.kind == "tabulated" and len(self.samples) >= 2:
            return np.linspace(0.0, 1.0, len(self.samples))
        return np.array([0.0, 1.0])

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "constant":
            return np.full_like(xi, self.value)
        if self.kind == "polynomial":
            if not self.coefficients:
                return np.zeros_like(xi)
            return np.polynomial.polynomial.polyval(xi, self.coefficients)
        if self.kind == "tabulated":
            return np.interp(xi, self.breakpoints, self.samples)
        raise UnsupportedError("impulse switching has no pointwise value; use a Kick")

    def scaled(self, factor: float) -> "SwitchingFunction":
        return SwitchingFunction(
            self.kind,
            coefficients=tuple(factor * c for c in self.coefficients),
            samples=tuple(factor * s for s in self.samples),
            value=factor * self.value,
            strength=factor * self.strength,
        )

    def violations(self) -> list[str]:
        out = []
        if self.kind not in SWITCHING_KINDS:
            return [f"unknown switching kind {self.kind!r}"]
        if self.kind == "polynomial" and len(self.coefficients) - 1 > MAX_POLY_DEGREE:
            out.append(f"polynomial degree {len(self.coefficients) - 1} > {MAX_POLY_DEGREE}")
        if self.kind == "tabulated" and len(self.samples) < 2:
            out.append("tabulated switching needs at least 2 samples")
        vals = list(self.coefficients) + list(self.samples) + [self.value, self.strength]
        if not np.all(np.isfinite(vals)):
            out.append("non-finite switching parameters")
        return out


@dataclass(frozen=True, eq=False)
class InteractionTerm:
    """One product term g(xi) * op of an interaction Hamiltonian."""

    switching: SwitchingFunction
    op: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "op", np.asarray(self.op, dtype=complex))


@dataclass(frozen=True, eq=False)
class Kick:
    """Impulsive coupling applying exp(-i * scale * generator / hbar) at cycle end."""

    generator: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "generator", np.asarray(self.generator, dtype=complex))
        object.__setattr__(self, "scale", float(self.scale))


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    label: str
    p: float
    rho_a: np.ndarray
    h_ancilla: np.ndarray
    terms: tuple[InteractionTerm, ...] = ()
    kick: Kick | None = None

    def __post_init__(self):
        object.__setattr__(self, "rho_a", np.asarray(self.rho_a, dtype=complex))
        object.__setattr__(self, "h_ancilla", np.asarray(self.h_ancilla, dtype=complex))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "p", float(self.p))

    @property
    def ancilla_dim(self) -> int:
        return int(self.rho_a.shape[0])

    @property
    def has_kick(self) -> bool:
        return self.kick is not None


@dataclass(frozen=True, eq=False)
class InteractionEnsemble:
    dim_s: int
    h_system: np.ndarray
    specs: tuple[InteractionSpec, ...]
    hbar: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "h_system", np.asarray(self.h_system, dtype=complex))
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "dim_s", int(self.dim_s))
        object.__setattr__(self, "hbar", float(self.hbar))

    def spec(self, k) -> InteractionSpec:
        """Look a spec up by label, or by position when ``k`` is an int."""
        if isinstance(k, InteractionSpec):
            return k
        for s in self.specs:
            if s.label == k:
                return s
        if isinstance(k, (int, np.integer)) and 0 <= k < len(self.specs):
            return self.specs[k]
        raise ModelError(f"no interaction spec labelled {k!r}")

    @property
    def labels(self) -> list[str]:
        return [s.label for s in self.specs]

    @property
    def has_kicks(self) -> bool:
        return any(s.has_kick for s in self.specs)


@dataclass(frozen=True)
class SimulationParams:
    dt: float
    n_cycles: int = 1
    substeps: int = 64
    series_order: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ModelError(f"dt must be positive, got {self.dt}")
        if self.n_cycles < 0:
            raise ModelError(f"n_cycles must be >= 0, got {self.n_cycles}")
        if self.substeps < 1:
            raise ModelError(f"substeps must be >= 1, got {self.substeps}")
        if not 0 <= self.series_order <= MAX_SERIES_ORDER:
            raise ModelError(f"series_order must be in [0, {MAX_SERIES_ORDER}]")


def free_hamiltonian(ens: InteractionEnsemble, k) -> np.ndarray:
    """H_S (x) 1 + 1 (x) H_A on the joint space of spec ``k``."""
    s = ens.spec(k)
    eye_s = np.eye(ens.dim_s, dtype=complex)
    eye_a = np.eye(s.ancilla_dim, dtype=complex)
    return np.kron(ens.h_system, eye_a) + np.kron(eye_s, s.h_ancilla)


def interaction_hamiltonian(ens: InteractionEnsemble, k, xi: float) -> np.ndarray:
    s = ens.spec(k)
    d = ens.dim_s * s.ancilla_dim
    out = np.zeros((d, d), dtype=complex)
    for term in s.terms:
        out = out + float(term.switching(xi)) * term.op
    return out


def smooth_hamiltonian(ens: InteractionEnsemble, k, xi: float) -> np.ndarray:
    """Pointwise joint Hamiltonian ignoring any end-of-cycle kick."""
    return free_hamiltonian(ens, k) + interaction_hamiltonian(ens, k, xi)


def joint_hamiltonian(ens: InteractionEnsemble, k, xi: float) -> np.ndarray:
    """H_S (x) 1 + 1 (x) H_A + H_SA(xi) for spec ``k``."""
    if not 0.0 <= xi <= 1.0:
        raise ModelError(f"xi={xi} outside [0, 1]")
    if ens.spec(k).has_kick:
        raise UnsupportedError(
            f"spec {ens.spec(k).label!r} has an impulsive kick; it has no pointwise Hamiltonian"
        )
    return smooth_hamiltonian(ens, k, xi)


@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


def validate(ens: InteractionEnsemble, numerics: Numerics | None = None) -> list[Violation]:
    """Check every model invariant; an empty list means the model is valid."""
    num = resolve(numerics)
    out: list[Violation] = []

    def bad(loc, msg):
        out.append(Violation(loc, msg))

    def check_op(loc, m, dim, hermitian=True):
        if m.ndim != 2 or m.shape != (dim, dim):
            bad(loc, f"shape {m.shape} != ({dim}, {dim})")
            return False
        if not np.all(np.isfinite(m)):
            bad(loc, "non-finite entries")
            return False
        if hermitian and opalg.asymmetry(m) > num.hermitian:
            bad(loc, f"not hermitian (asymmetry {opalg.asymmetry(m):.3e})")
        return True

    if ens.dim_s < 1:
        bad("dim_s", f"must be positive, got {ens.dim_s}")
        return out
    if not (ens.hbar > 0 and np.isfinite(ens.hbar)):
        bad("hbar", f"must be positive, got {ens.hbar}")
    check_op("h_system", ens.h_system, ens.dim_s)
    if not ens.specs:
        bad("specs", "at least one interaction spec required")
        return out
    seen = set()
    for i, s in enumerate(ens.specs):
        loc = f"specs[{i}]({s.label})"
        if s.label in seen:
            bad(loc, f"duplicate label {s.label!r}")
        seen.add(s.label)
        if not 0.0 <= s.p <= 1.0:
            bad(loc + ".p", f"probability {s.p} outside [0, 1]")
        m = s.ancilla_dim
        if check_op(loc + ".rho_a", s.rho_a, m):
            for msg in opalg.density_violations(s.rho_a, num.density):
                bad(loc + ".rho_a", msg)
        check_op(loc + ".h_ancilla", s.h_ancilla, m)
        d = ens.dim_s * m
        for j, t in enumerate(s.terms):
            tl = f"{loc}.h_int[{j}]"
            check_op(tl + ".op", t.op, d)
            for msg in t.switching.violations():
                bad(tl + ".switching", msg)
            if t.switching.kind == "impulse":
                bad(tl + ".switching", "impulse switching is only allowed inside a kick")
        if s.kick is not None:
            check_op(loc + ".kick.generator", s.kick.generator, d)
            if not np.isfinite(s.kick.scale):
                bad(loc + ".kick.scale", "non-finite")
    total = sum(s.p for s in ens.specs)
    if abs(total - 1.0) > num.probability:
        bad("specs.p", f"probabilities sum to {total:.15g}, not 1")
    return out


def require_valid(ens: InteractionEnsemble, numerics: Numerics | None = None) -> None:
    report = validate(ens, numerics)
    if report:
        raise ModelError("invalid model:\n  " + "\n  ".join(map(str, report)))


# --- JSON model format -------------------------------------------------------

_TOP_KEYS = {"dim_s", "hbar", "h_system", "specs"}
_SPEC_KEYS = {"label", "p", "ancilla_dim", "rho_a", "h_ancilla", "h_int", "kick"}
_SWITCH_KEYS = {
    "constant": {"kind", "value"},
    "polynomial": {"kind", "coefficients"},
    "tabulated": {"kind", "samples"},
    "impulse": {"kind", "strength"},
}


def _check_keys(obj, allowed, required, where):
    if not isinstance(obj, dict):
        raise ModelError(f"{where}: expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise ModelError(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise ModelError(f"{where}: missing keys {sorted(missing)}")


def matrix_from_json(obj, where: str) -> np.ndarray:
    try:
        a = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{where}: malformed matrix ({exc})") from None
    if a.ndim != 3 or a.shape[2] != 2 or a.shape[0] != a.shape[1]:
        raise ModelError(f"{where}: expected a square matrix of [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def switching_to_json(g: SwitchingFunction) -> dict:
    if g.kind == "constant":
        return {"kind": "constant", "value": g.value}
    if g.kind == "polynomial":
        return {"kind": "polynomial", "coefficients": list(g.coefficients)}
    if g.kind == "tabulated":
        return {"kind": "tabulated", "samples": list(g.samples)}
    return {"kind": "impulse", "strength": g.strength}


def switching_from_json(obj, where: str) -> SwitchingFunction:
    if not isinstance(obj, dict) or obj.get("kind") not in _SWITCH_KEYS:
        raise ModelError(f"{where}: switching needs kind in {list(_SWITCH_KEYS)}")
    kind = obj["kind"]
    _check_keys(obj, _SWITCH_KEYS[kind], {"kind"}, where)
    if kind == "constant":
        return SwitchingFunction.constant(obj.get("value", 1.0))
    if kind == "polynomial":
        return SwitchingFunction.polynomial(obj.get("coefficients", []))
    if kind == "tabulated":
        return SwitchingFunction.tabulated(obj.get("samples", []))
    return SwitchingFunction.impulse(obj.get("strength", 0.0))


def ensemble_to_dict(ens: InteractionEnsemble) -> dict:
    specs = []
    for s in ens.specs:
        d = {
            "label": s.label,
            "p": s.p,
            "ancilla_dim": s.ancilla_dim,
            "rho_a": matrix_to_json(s.rho_a),
            "h_ancilla": matrix_to_json(s.h_ancilla),
            "h_int": [{"switching": switching_to_json(t.switching), "op": matrix_to_json(t.op)}
                      for t in s.terms],
        }
        if s.kick is not None:
            d["kick"] = {"generator": matrix_to_json(s.kick.generator), "scale": s.kick.scale}
        specs.append(d)
    return {"dim_s": ens.dim_s, "hbar": ens.hbar,
            "h_system": matrix_to_json(ens.h_system), "specs": specs}


def ensemble_from_dict(obj) -> InteractionEnsemble:
    _check_keys(obj, _TOP_KEYS, _TOP_KEYS - {"hbar"}, "model")
    specs = []
    for i, so in enumerate(obj["specs"]):
        where = f"specs[{i}]"
        _check_keys(so, _SPEC_KEYS, _SPEC_KEYS - {"kick", "h_int"}, where)
        terms = []
        for j, to in enumerate(so.get("h_int", [])):
            tw = f"{where}.h_int[{j}]"
            _check_keys(to, {"switching", "op"}, {"switching", "op"}, tw)
            terms.append(InteractionTerm(switching_from_json(to["switching"], tw + ".switching"),
                                         matrix_from_json(to["op"], tw + ".op")))
        kick = None
        if so.get("kick") is not None:
            _check_keys(so["kick"], {"generator", "scale"}, {"generator"}, where + ".kick")
            kick = Kick(matrix_from_json(so["kick"]["generator"], where + ".kick.generator"),
                        so["kick"].get("scale", 1.0))
        rho_a = matrix_from_json(so["rho_a"], where + ".rho_a")
        if int(so["ancilla_dim"]) != rho_a.shape[0]:
            raise ModelError(f"{where}: ancilla_dim {so['ancilla_dim']} != rho_a size {rho_a.shape[0]}")
        specs.append(InteractionSpec(str(so["label"]), float(so["p"]), rho_a,
                                     matrix_from_json(so["h_ancilla"], where + ".h_ancilla"),
                                     tuple(terms), kick))
    return InteractionEnsemble(int(obj["dim_s"]), matrix_from_json(obj["h_system"], "h_system"),
                               tuple(specs), float(obj.get("hbar", 1.0)))


def dumps_model(ens: InteractionEnsemble) -> str:
    return dumps_json(ensemble_to_dict(ens))


def loads_model(text: str) -> InteractionEnsemble:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model is not valid JSON: {exc}") from None
    return ensemble_from_dict(obj)


def load_model(path) -> InteractionEnsemble:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def save_model(ens: InteractionEnsemble, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(ens))


# --- convenience builders ----------------------------------------------------

def product_spec(label: str, p: float, rho_a, h_ancilla, j_s, j_a,
                 switching: SwitchingFunction | None = None) -> InteractionSpec:
    """Spec with H_SA(xi) = g(xi) J_S (x) J_A."""
    g = switching or SwitchingFunction.constant()
    return InteractionSpec(label, p, rho_a, h_ancilla,
                           (InteractionTerm(g, np.kron(j_s, j_a)),))


def single_spec_ensemble(h_system, spec: InteractionSpec, hbar: float = 1.0) -> InteractionEnsemble:
    h = np.asarray(h_system, dtype=complex)
    return InteractionEnsemble(h.shape[0], h, (spec,), hbar)
