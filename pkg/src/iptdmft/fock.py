"""Brute-force second quantization on small Fock spaces.

Exact many-body machinery used as the testing oracle: Hubbard and Anderson
impurity Hamiltonians on occupation-number bases, Gibbs states, Källén-
Lehmann Green's functions, exact self-energies, and Matsubara Fourier
coefficients.  Everything is dense/deterministic and guarded to desk-scale
dimensions (Fock dimension at most 4096).

Conventions: spin-orbital index ``2 * site + spin`` with spin up = 0 and
down = 1; basis states are little-endian occupation bitstrings (bit ``j``
of the basis index is the occupation of spin-orbital ``j``); annihilation
operators carry the Jordan-Wigner sign ``(-1)**(number of occupied modes
below j)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .measures import DiscreteMeasure

MAX_FOCK_DIM = 4096


class FockError(ValueError):
    """Invalid model specification or dimension guard violation."""


def _popcount(a: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(a)
    return np.array([int(x).bit_count() for x in a], dtype=np.int64)


@lru_cache(maxsize=16)
def annihilation_operators(n_modes: int) -> tuple[sp.csr_matrix, ...]:
    """Jordan-Wigner annihilation matrices a_0 .. a_{n_modes-1}."""
    dim = 1 << n_modes
    if dim > MAX_FOCK_DIM:
        raise FockError(f"{n_modes} modes exceed the Fock dimension guard {MAX_FOCK_DIM}")
    states = np.arange(dim, dtype=np.int64)
    ops = []
    for j in range(n_modes):
        src = states[(states >> j) & 1 == 1]
        dst = src ^ (1 << j)
        signs = np.where(_popcount(src & ((1 << j) - 1)) % 2 == 0, 1.0, -1.0)
        ops.append(sp.csr_matrix((signs, (dst, src)), shape=(dim, dim)))
    return tuple(ops)


def number_diagonal(n_modes: int) -> np.ndarray:
    """Diagonal of the total number operator in the occupation basis."""
    return _popcount(np.arange(1 << n_modes, dtype=np.int64)).astype(float)


def dgamma(h0: np.ndarray) -> np.ndarray:
    """Second quantization of a one-body Hamiltonian: sum h0[p,q] a†_p a_q."""
    h0 = np.asarray(h0, dtype=float)
    n_modes = h0.shape[0]
    if h0.shape != (n_modes, n_modes) or not np.allclose(h0, h0.T, atol=1e-12):
        raise FockError("one-body Hamiltonian must be real symmetric")
    ops = annihilation_operators(n_modes)
    dim = 1 << n_modes
    out = sp.csr_matrix((dim, dim))
    for p in range(n_modes):
        for q in range(n_modes):
            if h0[p, q] != 0.0:
                out = out + h0[p, q] * (ops[p].T @ ops[q])
    return out.toarray()


@dataclass(frozen=True)
class HubbardSpec:
    """Hubbard model on a finite graph: edges carry hoppings, sites carry U."""

    n_sites: int
    edges: tuple[tuple[int, int, float], ...]
    on_site_u: float
    beta: float
    chem_potential: float = 0.0

    def __init__(self, n_sites, edges, on_site_u, beta, chem_potential=0.0):
        edges = tuple((int(i), int(j), float(t)) for i, j, t in edges)
        if n_sites < 1:
            raise FockError("need at least one site")
        if beta <= 0:
            raise FockError("beta must be positive")
        seen = set()
        for i, j, _ in edges:
            if i == j:
                raise FockError(f"self-loop at site {i}")
            if not (0 <= i < n_sites and 0 <= j < n_sites):
                raise FockError(f"edge ({i},{j}) outside the vertex range")
            key = frozenset((i, j))
            if key in seen:
                raise FockError(f"duplicate edge ({i},{j})")
            seen.add(key)
        object.__setattr__(self, "n_sites", int(n_sites))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "on_site_u", float(on_site_u))
        object.__setattr__(self, "beta", float(beta))
        object.__setattr__(self, "chem_potential", float(chem_potential))

    @classmethod
    def ring(cls, n_sites: int, t: float, u: float, beta: float, chem_potential=None):
        """Cycle graph C_n with uniform hopping; default filling is mu = U/2."""
        if n_sites < 3:
            raise FockError("a ring needs at least 3 sites")
        edges = [(i, (i + 1) % n_sites, t) for i in range(n_sites)]
        mu = u / 2 if chem_potential is None else chem_potential
        return cls(n_sites, edges, on_site_u=u, beta=beta, chem_potential=mu)

    @property
    def n_modes(self) -> int:
        return 2 * self.n_sites

    def hopping_matrix(self) -> np.ndarray:
        """Site-level symmetric hopping matrix T."""
        t = np.zeros((self.n_sites, self.n_sites))
        for i, j, tij in self.edges:
            t[i, j] = t[j, i] = tij
        return t

    def one_body(self) -> np.ndarray:
        """Spin-orbital one-body matrix (hoppings, spin diagonal)."""
        t = self.hopping_matrix()
        h0 = np.zeros((self.n_modes, self.n_modes))
        h0[0::2, 0::2] = t
        h0[1::2, 1::2] = t
        return h0


def interaction_diagonal(n_sites: int, u: float, site_offset: int = 0, n_modes: int | None = None):
    """Diagonal of sum_i U n_{i,up} n_{i,down} over the given sites."""
    if n_modes is None:
        n_modes = 2 * (site_offset + n_sites)
    states = np.arange(1 << n_modes, dtype=np.int64)
    diag = np.zeros(states.size)
    for i in range(site_offset, site_offset + n_sites):
        up = (states >> (2 * i)) & 1
        down = (states >> (2 * i + 1)) & 1
        diag += u * (up & down)
    return diag


def build_hubbard(spec: HubbardSpec) -> np.ndarray:
    """Dense many-body Hubbard Hamiltonian on the 4**n_sites Fock space."""
    if (1 << spec.n_modes) > MAX_FOCK_DIM:
        raise FockError(f"{spec.n_sites} sites exceed the dimension guard")
    h = dgamma(spec.one_body())
    h[np.diag_indices_from(h)] += interaction_diagonal(spec.n_sites, spec.on_site_u)
    return h


@dataclass(frozen=True)
class AimSpec:
    """Anderson impurity model: Hubbard impurity + diagonal bath + coupling.

    Bath level b contributes two degenerate spin-orbitals at energy
    ``bath_energies[b]``; ``couplings[i, b]`` is the (real, spin-diagonal)
    hopping between impurity site i and bath level b.
    """

    impurity: HubbardSpec
    bath_energies: tuple[float, ...]
    couplings: np.ndarray

    def __init__(self, impurity, bath_energies, couplings):
        bath_energies = tuple(float(e) for e in bath_energies)
        couplings = np.atleast_2d(np.asarray(couplings, dtype=float))
        if couplings.shape != (impurity.n_sites, len(bath_energies)):
            raise FockError("couplings must be (impurity sites) x (bath levels)")
        couplings = couplings.copy()
        couplings.setflags(write=False)
        object.__setattr__(self, "impurity", impurity)
        object.__setattr__(self, "bath_energies", bath_energies)
        object.__setattr__(self, "couplings", couplings)

    @property
    def n_bath(self) -> int:
        return len(self.bath_energies)

    @property
    def n_modes(self) -> int:
        return 2 * (self.impurity.n_sites + self.n_bath)

    def one_body(self) -> np.ndarray:
        """Block spin-orbital matrix [[H0_imp, V], [V^T, H0_bath]]."""
        n_imp = self.impurity.n_sites
        h0 = np.zeros((self.n_modes, self.n_modes))
        h0[: 2 * n_imp, : 2 * n_imp] = self.impurity.one_body()
        for b, eps in enumerate(self.bath_energies):
            for sigma in (0, 1):
                k = 2 * (n_imp + b) + sigma
                h0[k, k] = eps
                for i in range(n_imp):
                    h0[2 * i + sigma, k] = h0[k, 2 * i + sigma] = self.couplings[i, b]
        return h0


def build_aim(spec: AimSpec) -> np.ndarray:
    """Dense Anderson-impurity Hamiltonian dGamma(H0) + impurity interaction."""
    if spec.n_modes > 12:
        raise FockError("AIM guard: at most 12 spin-orbitals")
    h = dgamma(spec.one_body())
    diag = interaction_diagonal(
        spec.impurity.n_sites, spec.impurity.on_site_u, n_modes=spec.n_modes
    )
    h[np.diag_indices_from(h)] += diag
    return h


def hybridization(spec: AimSpec, z: complex) -> np.ndarray:
    """Impurity-orbital hybridization V (z - H0_bath)^-1 V^T."""
    denom = z - np.asarray(spec.bath_energies)
    return (spec.couplings / denom) @ spec.couplings.T


# ---------------------------------------------------------------------------
# spectral decomposition and Green's functions


@dataclass(frozen=True)
class SpectralDecomposition:
    """Joint eigendata of a number-conserving Hamiltonian and its Gibbs state.

    Columns of ``vectors`` are eigenvectors in the occupation basis, each
    with a definite particle number (the Hamiltonian is diagonalized sector
    by sector).  ``weights`` are the Gibbs weights at ``(beta, mu)``.
    """

    energies: np.ndarray
    numbers: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray
    beta: float
    mu: float
    n_modes: int

    @property
    def dim(self) -> int:
        return self.energies.size

    def grand_energies(self) -> np.ndarray:
        return self.energies - self.mu * self.numbers

    def mode_matrix(self, j: int) -> np.ndarray:
        """Annihilator of spin-orbital j in the eigenbasis."""
        a = annihilation_operators(self.n_modes)[j]
        return self.vectors.T @ (a @ self.vectors)


def gibbs(h: np.ndarray, beta: float, mu: float, n_modes: int) -> SpectralDecomposition:
    """Sector-wise eigendecomposition and Gibbs weights exp(-beta(E - mu N))/Z.

    Requires ``[H, N] = 0``; exponentials are shifted by the minimum of
    ``E - mu N`` so large ``beta`` cannot overflow.
    """
    if beta <= 0:
        raise FockError("beta must be positive")
    h = np.asarray(h)
    if sp.issparse(h):
        h = h.toarray()
    dim = h.shape[0]
    if dim != (1 << n_modes):
        raise FockError("Hamiltonian dimension does not match the mode count")
    numbers = number_diagonal(n_modes)
    off_sector = np.abs(h[numbers[:, None] != numbers[None, :]])
    if off_sector.size and off_sector.max() > 1e-10 * (1 + np.abs(h).max()):
        raise FockError("Hamiltonian does not commute with the number operator")

    energies = np.empty(dim)
    particle = np.empty(dim, dtype=np.int64)
    vectors = np.zeros((dim, dim))
    filled = 0
    for n in range(n_modes + 1):
        idx = np.flatnonzero(numbers == n)
        if idx.size == 0:
            continue
        vals, vecs = np.linalg.eigh(h[np.ix_(idx, idx)])
        # deterministic gauge: first significant component positive
        for c in range(vecs.shape[1]):
            col = vecs[:, c]
            lead = np.flatnonzero(np.abs(col) > 1e-8)
            if lead.size and col[lead[0]] < 0:
                vecs[:, c] = -col
        sl = slice(filled, filled + idx.size)
        energies[sl] = vals
        particle[sl] = n
        vectors[idx, sl] = vecs
        filled += idx.size

    order = np.argsort(energies, kind="stable")
    energies, particle, vectors = energies[order], particle[order], vectors[:, order]

    grand = energies - mu * particle
    shifted = -beta * (grand - grand.min())
    unnorm = np.exp(shifted)
    z = unnorm.sum()
    weights = unnorm / z
    log_weights = shifted - np.log(z)
    return SpectralDecomposition(
        energies=energies,
        numbers=particle,
        vectors=vectors,
        weights=weights,
        log_weights=log_weights,
        beta=beta,
        mu=mu,
        n_modes=n_modes,
    )


def kl_greens(decomp: SpectralDecomposition, z: complex, grand_canonical: bool = False):
    """Källén-Lehmann one-body Green's function at a complex frequency.

    Entries ``sum_{s,s'} (rho_s + rho_s')/(z + E_s - E_s') <s|a_p s'><s'|a†_q s>``.
    With ``grand_canonical=True`` the energies are ``E - mu N`` (the Green's
    function of the grand-canonical Hamiltonian, the one the Matsubara
    coefficients interpolate).
    """
    z = complex(z)
    if z.imag == 0:
        raise FockError("kl_greens requires Im(z) != 0")
    e = decomp.grand_energies() if grand_canonical else decomp.energies
    kernel = (decomp.weights[:, None] + decomp.weights[None, :]) / (
        z + e[:, None] - e[None, :]
    )
    n = decomp.n_modes
    amats = [decomp.mode_matrix(p) for p in range(n)]
    out = np.empty((n, n), dtype=complex)
    for p in range(n):
        for q in range(p, n):
            val = np.sum(kernel * (amats[p] * amats[q]))
            out[p, q] = val
            out[q, p] = val  # real mode matrices: symmetric under p<->q
    return out


def matsubara_frequency(n: int, beta: float) -> float:
    return (2 * n + 1) * np.pi / beta


def matsubara_coefficients(
    decomp: SpectralDecomposition, n_range: Sequence[int]
) -> list[np.ndarray]:
    """Matsubara Fourier coefficients of the imaginary-time Green's function.

    Computed by integrating the Källén-Lehmann representation of the
    Matsubara Green's function term by term over ``tau in [0, beta)``:

        G_n[p,q] = sum_{s,s'} (rho_s + e^{beta(E~_s - E~_s')} rho_s)
                   <s|a_p s'><s'|a†_q s> / (i w_n + E~_s - E~_s')

    with grand-canonical energies ``E~ = E - mu N``.  The second weight is
    evaluated by exponent arithmetic, which keeps the route independent of
    `kl_greens` (where ``rho_s'`` enters directly).
    """
    beta = decomp.beta
    e = decomp.grand_energies()
    diff = e[:, None] - e[None, :]
    # rho_s * exp(beta (E~_s - E~_s')) via exponents, never overflowing
    kms_weight = np.exp(decomp.log_weights[:, None] + beta * diff)
    coeff = decomp.weights[:, None] + kms_weight
    n_modes = decomp.n_modes
    amats = [decomp.mode_matrix(p) for p in range(n_modes)]
    out = []
    for n in n_range:
        z = 1j * matsubara_frequency(n, beta)
        kernel = coeff / (z + diff)
        g = np.empty((n_modes, n_modes), dtype=complex)
        for p in range(n_modes):
            for q in range(p, n_modes):
                val = np.sum(kernel * (amats[p] * amats[q]))
                g[p, q] = val
                g[q, p] = val
        out.append(g)
    return out


def self_energy_exact(
    decomp: SpectralDecomposition,
    h0: np.ndarray,
    z: complex,
    grand_canonical: bool = False,
) -> np.ndarray:
    """Exact self-energy (z - H0) - G(z)^{-1} of the decomposed system."""
    g = kl_greens(decomp, z, grand_canonical=grand_canonical)
    cond = np.linalg.cond(g)
    if cond > 1e12:
        warnings.warn(f"Green's function nearly singular (cond={cond:.2e})", stacklevel=2)
    h_eff = np.asarray(h0, dtype=float)
    if grand_canonical:
        h_eff = h_eff - decomp.mu * np.eye(h_eff.shape[0])
    return (z * np.eye(h_eff.shape[0]) - h_eff) - np.linalg.inv(g)


def scalar_greens_measure(
    decomp: SpectralDecomposition,
    mode: int,
    grand_canonical: bool = False,
    weight_floor: float = 1e-14,
) -> DiscreteMeasure:
    """Spectral measure of the diagonal Green's function entry G[mode, mode].

    ``G(z) = C[m](z)`` with atoms at the energy differences ``E_s' - E_s``
    and weights ``(rho_s + rho_s') |<s|a_mode s'>|^2``; total mass 1 by the
    canonical anticommutation relations.  Weights below ``weight_floor``
    (relative) are eigensolver noise and dropped.
    """
    e = decomp.grand_energies() if grand_canonical else decomp.energies
    a = decomp.mode_matrix(mode)
    w = (decomp.weights[:, None] + decomp.weights[None, :]) * a**2
    x = e[None, :] - e[:, None]
    w = w.ravel()
    keep = w > weight_floor
    return DiscreteMeasure(x.ravel()[keep], w[keep])
