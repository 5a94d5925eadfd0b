"""Bath update for single-site translation-invariant DMFT.

Given the self-energy measure ``mu`` and the lattice data seen from one
site (coupling row ``W`` to the deleted-site environment ``H_perp``), the
new hybridization satisfies

.. math:: \\|W\\|^2 C[\\nu](z) = W (z - H_\\perp - \\Sigma(z))^{-1} W^T,
          \\qquad \\Sigma(z) = U^2 C[\\mu](z),

and ``nu`` is recovered exactly as a finite discrete probability measure:
diagonalizing ``H_perp`` splits the right-hand side into scalar resolvents
``1/(z - h_j - Sigma(z))``, each of which is the Cauchy transform of an
arrowhead spectral measure.  Equivalently the whole map is one
eigendecomposition of a finite self-adjoint embedding matrix that couples
every environment site to a replica level per atom of ``mu``; both routes
are implemented and agree to machine precision.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fock import HubbardSpec
from .ipt import effective_levels
from .measures import DiscreteMeasure, cauchy_transform, mixture

#: Relative weight below which an eigen-atom is a symmetry-forbidden zero.
WEIGHT_DROP = 1e-14

#: Largest vertex count for which transitivity is verified by orbit search.
MAX_ORBIT_SEARCH = 12


class LatticeError(ValueError):
    """Invalid lattice data."""


class NotVertexTransitiveError(LatticeError):
    """The Hubbard graph has no automorphism moving the site across all vertices."""


@dataclass(frozen=True)
class LatticeSpec:
    """Single-site lattice data: coupling vector, environment matrix, U, beta."""

    coupling: np.ndarray
    environment: np.ndarray
    u: float
    beta: float

    def __init__(self, coupling, environment, u, beta, allow_disconnected=False):
        coupling = np.atleast_1d(np.asarray(coupling, dtype=float)).copy()
        environment = np.atleast_2d(np.asarray(environment, dtype=float)).copy()
        n = coupling.size
        if environment.shape != (n, n):
            raise LatticeError("environment must be square and match the coupling length")
        if not np.allclose(environment, environment.T, atol=1e-12):
            raise LatticeError("environment matrix must be symmetric")
        if beta <= 0:
            raise LatticeError("beta must be positive")
        if not allow_disconnected and not np.any(coupling != 0.0):
            raise LatticeError(
                "coupling vanishes; pass allow_disconnected=True for the atomic limit"
            )
        coupling.setflags(write=False)
        environment.setflags(write=False)
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "environment", environment)
        object.__setattr__(self, "u", float(u))
        object.__setattr__(self, "beta", float(beta))

    @cached_property
    def w_norm_sq(self) -> float:
        return float(self.coupling @ self.coupling)

    @property
    def is_disconnected(self) -> bool:
        return self.w_norm_sq == 0.0

    @cached_property
    def _heads(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues of the environment and squared coupling components."""
        vals, vecs = np.linalg.eigh(self.environment)
        c = (vecs.T @ self.coupling) ** 2
        return vals, c


def _has_automorphism_mapping(t: np.ndarray, site: int, target: int) -> bool:
    """Backtracking search for a hopping-preserving permutation with site -> target."""
    n = t.shape[0]
    profiles = [tuple(sorted(t[i])) for i in range(n)]
    if profiles[site] != profiles[target]:
        return False
    order = [site] + [v for v in range(n) if v != site]
    assigned = {site: target}
    used = {target}

    def extend(k: int) -> bool:
        if k == n:
            return True
        v = order[k]
        for w in range(n):
            if w in used or profiles[v] != profiles[w]:
                continue
            if all(t[v, u] == t[w, wu] for u, wu in assigned.items()):
                assigned[v] = w
                used.add(w)
                if extend(k + 1):
                    return True
                del assigned[v]
                used.remove(w)
        return False

    return extend(1)


def _check_vertex_transitive(t: np.ndarray, site: int) -> None:
    for target in range(t.shape[0]):
        if target != site and not _has_automorphism_mapping(t, site, target):
            raise NotVertexTransitiveError(
                f"no hopping-preserving automorphism maps site {site} to {target}"
            )


def lattice_from_hubbard(
    spec: HubbardSpec, site: int = 0, assume_transitive: bool = False
) -> LatticeSpec:
    """Extract (W, H_perp) seen from one site of a vertex-transitive model.

    ``W`` holds the hoppings from ``site`` to every other vertex and
    ``H_perp`` is the hopping matrix of the graph with ``site`` deleted.
    Transitivity is verified by automorphism-orbit search on graphs with at
    most 12 vertices; larger graphs require ``assume_transitive=True``.
    """
    if not (0 <= site < spec.n_sites):
        raise LatticeError(f"site {site} outside the vertex range")
    t = spec.hopping_matrix()
    if not assume_transitive:
        if spec.n_sites > MAX_ORBIT_SEARCH:
            raise LatticeError(
                f"transitivity check limited to {MAX_ORBIT_SEARCH} vertices; "
                "pass assume_transitive=True to attest it"
            )
        _check_vertex_transitive(t, site)
    others = [v for v in range(spec.n_sites) if v != site]
    coupling = t[site, others]
    env = t[np.ix_(others, others)]
    return LatticeSpec(
        coupling,
        env,
        u=spec.on_site_u,
        beta=spec.beta,
        allow_disconnected=not np.any(coupling != 0.0),
    )


def bath_update(mu: DiscreteMeasure, lattice: LatticeSpec) -> DiscreteMeasure:
    """Hybridization probability measure of the environment with self-energy
    ``U^2 C[mu]`` on every site.

    Exact: per environment eigenmode ``h_j`` with coupling weight ``c_j``,
    the arrowhead spectral measure of ``1/(z - h_j - Sigma(z))`` enters with
    coefficient ``c_j / ||W||^2``.  Symmetry-forbidden eigen-atoms (relative
    weight below 1e-14) are dropped and the result is renormalized to unit
    mass.  The disconnected limit returns the zero measure.
    """
    if lattice.is_disconnected:
        return DiscreteMeasure.zero()
    heads, c = lattice._heads
    w2 = lattice.w_norm_sq
    sigma_measure = mu.scaled(lattice.u**2)
    parts = []
    for h, cj in zip(heads, c):
        if cj < WEIGHT_DROP * w2:
            continue
        eff = effective_levels(sigma_measure, shift=float(h))
        parts.append((cj / w2, eff.to_measure()))
    nu = mixture(parts)
    keep = nu.weights >= WEIGHT_DROP
    nu = DiscreteMeasure(nu.positions[keep], nu.weights[keep])
    return nu.scaled(1.0 / nu.mass)


def build_embedding(mu: DiscreteMeasure, lattice: LatticeSpec) -> np.ndarray:
    """Self-adjoint embedding whose resolvent restricts to
    ``(z - H_perp - Sigma(z) I)^{-1}`` on the environment block.

    Each of the ``P - 1`` environment sites couples with strength
    ``U sqrt(a_k)`` to its own copy of a replica level at every atom
    ``(eps_k, a_k)`` of ``mu``.
    """
    p1 = lattice.coupling.size
    k = mu.n_atoms
    size = p1 * (1 + k)
    m = np.zeros((size, size))
    m[:p1, :p1] = lattice.environment
    arms = lattice.u * np.sqrt(mu.weights)
    for i in range(p1):
        base = p1 + i * k
        for a in range(k):
            m[i, base + a] = m[base + a, i] = arms[a]
            m[base + a, base + a] = mu.positions[a]
    return m


def bath_update_via_embedding(mu: DiscreteMeasure, lattice: LatticeSpec) -> DiscreteMeasure:
    """Bath update by direct eigendecomposition of the embedding matrix."""
    if lattice.is_disconnected:
        return DiscreteMeasure.zero()
    emb = build_embedding(mu, lattice)
    vals, vecs = np.linalg.eigh(emb)
    w_tilde = np.zeros(emb.shape[0])
    w_tilde[: lattice.coupling.size] = lattice.coupling
    weights = (vecs.T @ w_tilde) ** 2
    w2 = lattice.w_norm_sq
    keep = weights >= WEIGHT_DROP * w2
    nu = DiscreteMeasure(vals[keep], weights[keep] / w2)
    return nu.scaled(1.0 / nu.mass)


def hybridization_moments(mu: DiscreteMeasure, lattice: LatticeSpec) -> tuple[float, float]:
    """Closed-form first and second moments of the bath-update output."""
    w, env = lattice.coupling, lattice.environment
    w2 = lattice.w_norm_sq
    m1 = float(w @ env @ w) / w2
    m2 = (float(w @ env @ env @ w) + lattice.u**2 * mu.mass * w2) / w2
    return m1, m2


def resolvent_check(mu: DiscreteMeasure, lattice: LatticeSpec, z: complex) -> float:
    """Residual between the Schur-complement resolvent and the measure route."""
    z = complex(z)
    if z.imag <= 0:
        raise LatticeError("resolvent check needs Im(z) > 0")
    sigma = lattice.u**2 * cauchy_transform(mu, z) if not mu.is_zero else 0.0
    n = lattice.coupling.size
    mat = z * np.eye(n) - lattice.environment - sigma * np.eye(n)
    direct = lattice.coupling @ np.linalg.solve(mat, lattice.coupling)
    via_measure = lattice.w_norm_sq * cauchy_transform(bath_update(mu, lattice), z)
    return float(abs(direct - via_measure))
