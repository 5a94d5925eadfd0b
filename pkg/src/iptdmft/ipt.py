"""Second-order (IPT) impurity solver as measure operations.

For a hybridization carried by a finite measure, the effective-level
resolvent identity

.. math:: C[\\xi](z) = \\frac{1}{z - c - C[\\delta](z)}

is realized exactly by eigendecomposing the symmetric arrowhead matrix
with head ``c``, arms ``sqrt(w_k)`` and tail ``x_k``: the eigenvalues are
the levels of the probability measure ``xi`` and the squared first-row
eigenvector components are its weights, strictly interlacing the input
atoms.  The impurity self-energy then follows from Fermi reweighting, a
triple convolution, and the inverse reweighting; the output measure ``mu``
has mass at most one and the self-energy is ``U^2 C[mu](z)`` (the on-site
repulsion enters only through that prefactor).

The Matsubara-side quadrature oracle integrates the imaginary-time
propagator cubed directly and serves as the independent cross-check of
the measure pipeline.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .measures import DiscreteMeasure, MeasureError, cauchy_transform, convolve, fermi_reweight


class IptError(ValueError):
    """Invalid IPT solver input."""


@dataclass(frozen=True)
class EffectiveLevels:
    """Levels and weights of the resolvent measure of ``z - c - C[delta](z)``.

    ``K`` input atoms produce exactly ``K + 1`` levels; the weights sum to
    one, and the levels strictly interlace the input atom positions.
    """

    levels: np.ndarray
    weights: np.ndarray
    shift: float
    source_positions: np.ndarray

    def to_measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.levels, self.weights)

    def interlaces_strictly(self) -> bool:
        """Strict alternation level < atom < level < ... < atom < level."""
        lo, hi = self.levels[:-1], self.levels[1:]
        return bool(np.all(lo < self.source_positions) and np.all(self.source_positions < hi))


def effective_levels(delta: DiscreteMeasure, shift: float = 0.0) -> EffectiveLevels:
    """Eigendecompose the arrowhead realization of ``1/(z - shift - C[delta])``.

    The zero measure maps to the single level at ``shift`` with weight one
    (the analytic limit of a vanishing hybridization).
    """
    if delta.is_zero:
        return EffectiveLevels(
            levels=np.array([float(shift)]),
            weights=np.array([1.0]),
            shift=float(shift),
            source_positions=np.empty(0),
        )
    if np.any(delta.weights <= 0):
        raise IptError("effective levels need strictly positive weights")
    k = delta.n_atoms
    arrow = np.zeros((k + 1, k + 1))
    arrow[0, 0] = shift
    arms = np.sqrt(delta.weights)
    arrow[0, 1:] = arms
    arrow[1:, 0] = arms
    arrow[np.arange(1, k + 1), np.arange(1, k + 1)] = delta.positions
    vals, vecs = np.linalg.eigh(arrow)
    weights = vecs[0] ** 2
    weights = weights / weights.sum()
    return EffectiveLevels(
        levels=vals, weights=weights, shift=float(shift), source_positions=delta.positions
    )


def ipt_map(nu: DiscreteMeasure, w_norm_sq: float, beta: float) -> DiscreteMeasure:
    """Map a hybridization probability measure to the self-energy measure.

    Steps: scale ``nu`` by the lattice coupling strength to get the
    hybridization measure, find the effective levels at half filling
    (shift 0), divide by the Fermi factor, convolve three times, and
    multiply the Fermi factor back.  The self-energy itself is
    ``U^2 * C[result]``; the result is independent of U.
    """
    if w_norm_sq <= 0:
        raise IptError("w_norm_sq must be positive")
    if beta <= 0:
        raise IptError("beta must be positive")
    if not nu.is_probability():
        raise IptError(f"ipt_map needs a probability measure, got mass {nu.mass}")
    xi = effective_levels(nu.scaled(w_norm_sq), shift=0.0).to_measure()
    xi_weighted = fermi_reweight(xi, beta, "divide")
    cubed = convolve(convolve(xi_weighted, xi_weighted), xi_weighted)
    return fermi_reweight(cubed, beta, "multiply")


def ipt_map_via_residues(nu: DiscreteMeasure, w_norm_sq: float, beta: float) -> DiscreteMeasure:
    """Independent route to `ipt_map`: accumulate the closed-form residues.

    Materializes every ordered level triple ``(k1, k2, k3)`` with weight

        (1 + e^{-beta s}) / prod_i (1 + e^{-beta eps_i}) * prod_i |P_{1,ki}|^2

    at position ``s = eps_1 + eps_2 + eps_3``, evaluated in log space.
    """
    eff = effective_levels(nu.scaled(w_norm_sq), shift=0.0)
    eps, wts = eff.levels, eff.weights
    s = eps[:, None, None] + eps[None, :, None] + eps[None, None, :]
    log_w = np.log(wts)
    log_num = np.logaddexp(0.0, -beta * s)
    log_den = np.logaddexp(0.0, -beta * eps)
    log_weight = (
        log_w[:, None, None]
        + log_w[None, :, None]
        + log_w[None, None, :]
        + log_num
        - log_den[:, None, None]
        - log_den[None, :, None]
        - log_den[None, None, :]
    )
    return DiscreteMeasure(s.ravel(), np.exp(log_weight).ravel())


def sigma_ipt(mu: DiscreteMeasure, u: float, z) -> complex:
    """IPT self-energy U^2 C[mu](z) at half filling (static U/2 shift absorbed)."""
    return u**2 * cauchy_transform(mu, z)


def _stable_propagator(levels: np.ndarray, weights: np.ndarray, beta: float, tau: float):
    """Imaginary-time propagator -sum_k w_k e^{-tau e_k}/(1 + e^{-beta e_k})."""
    exponent = -tau * levels - np.logaddexp(0.0, -beta * levels)
    return -np.sum(weights * np.exp(exponent))


def ipt_matsubara_oracle(
    delta: DiscreteMeasure,
    u: float,
    beta: float,
    n: int,
    error_bound: float = 1e-8,
) -> complex:
    """Quadrature route to the IPT self-energy at the n-th Matsubara node.

    Builds the imaginary-time propagator from the effective levels of
    ``delta`` and integrates ``U^2 e^{i w_n tau} g(tau)^3`` adaptively over
    ``[0, beta]``, using oscillatory-weight quadrature for the phase.
    """
    if beta <= 0:
        raise IptError("beta must be positive")
    if u == 0:
        return 0.0 + 0.0j
    eff = effective_levels(delta, shift=0.0)
    levels, wts = eff.levels, eff.weights
    omega = (2 * n + 1) * np.pi / beta

    def gcubed(tau):
        return _stable_propagator(levels, wts, beta, tau) ** 3

    re, re_err = quad(
        gcubed, 0.0, beta, weight="cos", wvar=omega, limit=400, epsabs=1e-11, epsrel=1e-11
    )
    im, im_err = quad(
        gcubed, 0.0, beta, weight="sin", wvar=omega, limit=400, epsabs=1e-11, epsrel=1e-11
    )
    if max(re_err, im_err) > error_bound:
        warnings.warn(
            f"IPT quadrature error estimate {max(re_err, im_err):.2e} exceeds "
            f"{error_bound:.2e}",
            stacklevel=2,
        )
    return u**2 * complex(re, im)
