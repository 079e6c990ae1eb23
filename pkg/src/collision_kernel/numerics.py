"""Centralized numerical tolerances.

Every tolerance used by the library lives in a single :class:`Numerics`
record. Functions accept an optional ``numerics`` argument and fall back to
:func:`default_numerics`, which honours the ``COLLISION_KERNEL_NUMERICS``
environment variable (``default`` or ``strict``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

ENV_VAR = "COLLISION_KERNEL_NUMERICS"


@dataclass(frozen=True)
class Numerics:
    # largest |m - m^dagger| that hermitize() will silently repair
    hermitian_repair: float = 1e-8
    # eigenvalue counts as on the log branch cut when |arg(l) -+ pi| < branch
    branch: float = 1e-6
    # eigenvalues smaller than this are treated as zero (singular channel)
    singular: float = 1e-12
    # eigenvector condition number above which logm falls back to Schur form
    eig_condition: float = 1e8
    # hermiticity check for operators flagged hermitian
    hermitian: float = 1e-10
    # trace and positivity checks for density matrices
    density: float = 1e-10
    # sum of probabilities
    probability: float = 1e-12
    # Choi eigenvalue floor for complete positivity
    choi_floor: float = 1e-9
    # trace preservation of channels
    trace_preservation: float = 1e-10
    # ancilla eigenvalues below this are clamped to zero
    eigenvalue_clamp: float = 1e-12

    def with_overrides(self, **kwargs: float) -> "Numerics":
        unknown = set(kwargs) - set(self.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown numerics fields: {sorted(unknown)}")
        for key, value in kwargs.items():
            if not (0.0 < float(value) < 1.0) and key != "eig_condition":
                raise ValueError(f"{key}={value} outside (0, 1)")
        return replace(self, **{k: float(v) for k, v in kwargs.items()})


DEFAULT = Numerics()
STRICT = Numerics(
    hermitian_repair=1e-10,
    branch=1e-5,
    eig_condition=1e6,
    hermitian=1e-12,
    density=1e-12,
    choi_floor=1e-11,
    trace_preservation=1e-12,
)

PROFILES = {"default": DEFAULT, "strict": STRICT}


def default_numerics() -> Numerics:
    name = os.environ.get(ENV_VAR, "default").strip().lower() or "default"
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(
            f"{ENV_VAR}={name!r}; expected one of {sorted(PROFILES)}"
        ) from None


def resolve(numerics: Numerics | None) -> Numerics:
    return default_numerics() if numerics is None else numerics
