"""Random model generators used by tests, demos and the CLI's seeded runs."""

from __future__ import annotations

import numpy as np

from .model import (InteractionEnsemble, InteractionSpec, InteractionTerm,
                    SwitchingFunction)


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (a + a.conj().T)
    n = np.linalg.norm(h, 2)
    return scale * h / n if n > 0 else h


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def random_pure(rng: np.random.Generator, dim: int) -> np.ndarray:
    return random_density(rng, dim, rank=1)


def random_switching(rng: np.random.Generator, max_degree: int = 3) -> SwitchingFunction:
    kind = rng.integers(3)
    if kind == 0:
        return SwitchingFunction.constant(rng.uniform(0.5, 1.5))
    if kind == 1:
        deg = int(rng.integers(1, max_degree + 1))
        return SwitchingFunction.polynomial(rng.uniform(-1.0, 1.0, size=deg + 1))
    # 1, 2, 4 or 8 pieces, so kinks sit on power-of-two substep boundaries
    n = int(rng.choice([2, 3, 5, 9]))
    return SwitchingFunction.tabulated(rng.uniform(-1.0, 1.0, size=n))


def random_spec(rng: np.random.Generator, label: str, p: float, dim_s: int, dim_a: int,
                n_terms: int = 2, scale: float = 1.0, max_degree: int = 3) -> InteractionSpec:
    d = dim_s * dim_a
    terms = []
    for _ in range(n_terms):
        g = random_switching(rng, max_degree)
        op = random_hermitian(rng, d, scale)
        peak = np.max(np.abs(g(np.linspace(0, 1, 65))))
        terms.append(InteractionTerm(g, op / max(peak, 1e-12) / n_terms))
    return InteractionSpec(label, p, random_density(rng, dim_a),
                           random_hermitian(rng, dim_a, scale), tuple(terms))


def random_ensemble(rng: np.random.Generator, dim_s: int | None = None,
                    dims_a=(2, 3), n_specs: int | None = None, scale: float = 1.0,
                    n_terms: int = 2, max_degree: int = 3) -> InteractionEnsemble:
    """Random model with every operator of spectral norm about ``scale``.

    Interaction terms are normalized so that max_xi ||H_SA(xi)|| <= scale.
    """
    dim_s = int(rng.choice([2, 3])) if dim_s is None else dim_s
    n_specs = int(rng.integers(1, 4)) if n_specs is None else n_specs
    p = rng.dirichlet(np.ones(n_specs))
    p[-1] = 1.0 - p[:-1].sum()
    specs = []
    for i in range(n_specs):
        dim_a = int(rng.choice(dims_a))
        specs.append(random_spec(rng, f"k{i}", float(p[i]), dim_s, dim_a,
                                 n_terms, scale, max_degree))
    return InteractionEnsemble(dim_s, random_hermitian(rng, dim_s, scale), tuple(specs))
