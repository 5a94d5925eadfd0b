"""Nevanlinna-Pick interpolation on the upper half-plane.

Machinery for deciding whether analytic functions from the open upper
half-plane into its closure can interpolate prescribed values at prescribed
nodes: the Cayley transform moves the problem to the unit disc, Blaschke
factors implement the one-point Schur reduction, and iterating the
reduction classifies the data into ``NO_SOLUTION``, ``UNIQUE_SOLUTION``
or ``INDETERMINATE``.  Data sampled from a rational Pick function with a
``K``-atom measure at ``K + 2`` or more nodes always classifies as unique;
``matsubara_uniqueness_check`` applies this to Matsubara-frequency samples.
"""
from __future__ import annotations

import cmath
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measures import PickRepresentation

#: Half-width of the numerical band around the unit circle inside which a
#: transformed pivot triggers the unique-solution hypothesis.  The band is
#: only a trigger: uniqueness itself is decided by reconstructing the
#: candidate solution and checking it against the data, so the band can be
#: generous without misclassifying.
CIRCLE_TOL = 1e-3

#: Sup-norm tolerance (on disc-transported data) for accepting the
#: reconstructed candidate solution.
RECONSTRUCTION_TOL = 1e-5

#: Schur-step denominators smaller than this are numerically meaningless.
DENOM_TOL = 1e-13


class InterpolationError(ValueError):
    """Invalid interpolation data."""


class InconclusiveStep(ArithmeticError):
    """A Schur step hit a numerically ill-conditioned denominator.

    Attributes
    ----------
    index : int
        1-based index (in the original data) of the offending point.
    """

    def __init__(self, index: int):
        super().__init__(f"ill-conditioned Schur denominator at data point {index}")
        self.index = index


class UnimodularPivot(ArithmeticError):
    """Pivot value on the unit circle: the constant/unique branch applies."""


class PivotOutsideDisc(ArithmeticError):
    """Pivot value outside the closed disc: the data is infeasible."""


def cayley(z: complex) -> complex:
    """Biholomorphism (z - i)/(z + i) from the upper half-plane onto the disc."""
    if z == -1j:
        raise InterpolationError("cayley transform has a pole at -i")
    return (z - 1j) / (z + 1j)


def cayley_inv(z: complex) -> complex:
    """Inverse Cayley transform i(1 + z)/(1 - z)."""
    if z == 1:
        raise InterpolationError("inverse cayley transform has a pole at 1")
    return 1j * (1 + z) / (1 - z)


def blaschke(a: complex, z: complex) -> complex:
    """Disc automorphism b_a(z) = (z - a)/(1 - conj(a) z), vanishing at ``a``."""
    if abs(a) >= 1:
        raise InterpolationError("blaschke parameter must lie inside the open disc")
    return (z - a) / (1 - np.conj(a) * z)


def blaschke_inv(a: complex, w: complex) -> complex:
    """Explicit inverse of ``blaschke(a, .)``: (w + a)/(1 + conj(a) w)."""
    if abs(a) >= 1:
        raise InterpolationError("blaschke parameter must lie inside the open disc")
    return (w + a) / (1 + np.conj(a) * w)


@dataclass(frozen=True)
class InterpolationProblem:
    """Nodes in the open upper half-plane, values in its closure."""

    nodes: tuple[complex, ...]
    values: tuple[complex, ...]

    def __init__(self, nodes: Sequence[complex], values: Sequence[complex]):
        nodes = tuple(complex(z) for z in nodes)
        values = tuple(complex(w) for w in values)
        if len(nodes) != len(values) or not nodes:
            raise InterpolationError("need equally many nodes and values, at least one")
        if any(z.imag <= 0 for z in nodes):
            raise InterpolationError("nodes must lie in the open upper half-plane")
        if any(w.imag < 0 for w in values):
            raise InterpolationError("values must lie in the closed upper half-plane")
        if len(set(nodes)) != len(nodes):
            raise InterpolationError("nodes must be pairwise distinct")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.nodes)

    def to_disc(self) -> tuple[list[complex], list[complex]]:
        return [cayley(z) for z in self.nodes], [cayley(w) for w in self.values]


class Verdict(enum.Enum):
    NO_SOLUTION = "no_solution"
    UNIQUE_SOLUTION = "unique_solution"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class Classification:
    """Outcome of the Schur classification.

    ``depth`` counts the pivots examined.  For ``NO_SOLUTION`` the witness
    is the 1-based index of the data point whose transformed value left the
    closed disc (or broke the forced-constant branch); for
    ``UNIQUE_SOLUTION`` it is the stabilization index at which the
    transformed values reached the unit circle.
    """

    verdict: Verdict
    depth: int
    witness: int | None = None


def schur_step(
    disc_nodes: Sequence[complex], disc_values: Sequence[complex]
) -> tuple[list[complex], list[complex]]:
    """One Schur reduction of a disc interpolation problem.

    Consumes the first point: any solution ``f`` of the original data
    corresponds to the solution ``f1 = b_{w1}(f)/b_{z1}`` of the reduced
    data, and conversely ``f = b_{w1}^{-1}(b_{z1} f1)``.  Raises
    `UnimodularPivot` when ``|w1| = 1`` (constant branch) and
    `PivotOutsideDisc` when ``|w1| > 1`` (infeasible data).
    """
    if len(disc_nodes) < 2:
        raise InterpolationError("schur_step needs at least two points")
    z1, w1 = disc_nodes[0], disc_values[0]
    mod = abs(w1)
    if mod > 1 + CIRCLE_TOL:
        raise PivotOutsideDisc(f"pivot value has modulus {mod} > 1")
    if mod >= 1 - CIRCLE_TOL:
        raise UnimodularPivot(f"pivot value has modulus {mod} ~ 1")
    new_nodes = list(disc_nodes[1:])
    new_values = []
    for k, (zk, wk) in enumerate(zip(new_nodes, disc_values[1:]), start=2):
        denom = 1 - np.conj(w1) * wk
        if abs(denom) < DENOM_TOL:
            raise InconclusiveStep(k)
        new_values.append(((wk - w1) / denom) / blaschke(z1, zk))
    return new_nodes, new_values


def classify(
    problem: InterpolationProblem,
    max_depth: int | None = None,
    circle_tol: float = CIRCLE_TOL,
    reconstruction_tol: float = RECONSTRUCTION_TOL,
) -> Classification:
    """Three-way classification of an upper-half-plane interpolation problem.

    The data is transported to the unit disc by the Cayley transform and
    the Schur reduction is iterated.  A pivot with modulus above
    ``1 + circle_tol`` proves infeasibility.  A pivot within ``circle_tol``
    of the circle forces the reduced function to be that unimodular
    constant (maximum modulus); the forced constant is then lifted back
    through the Möbius chain and the data is uniquely solvable iff the
    lifted function reproduces every data point within
    ``reconstruction_tol`` -- this is the numerically stable equivalent of
    requiring all later transformed values to coincide with the pivot.  If
    the pivots stay strictly inside the disc for ``max_depth`` steps
    (default: number of points - 1) the classification is indeterminate.
    """
    if max_depth is None:
        max_depth = len(problem) - 1
    nodes, values = problem.to_disc()
    nodes0, values0 = list(nodes), list(values)
    chain: list[tuple[complex, complex]] = []
    depth = 0
    while True:
        depth += 1
        w1 = values[0]
        mod = abs(w1)
        if mod > 1 + circle_tol:
            return Classification(Verdict.NO_SOLUTION, depth=depth, witness=depth)
        if mod >= 1 - circle_tol:
            err = max(
                abs(_lift(chain, zd, w1) - wd) for zd, wd in zip(nodes0, values0)
            )
            if err <= reconstruction_tol:
                return Classification(Verdict.UNIQUE_SOLUTION, depth=depth, witness=depth)
            if mod >= 1:
                # a unimodular pivot forces a constant the data contradicts
                return Classification(Verdict.NO_SOLUTION, depth=depth, witness=depth)
            # pivot close to the circle but not actually stabilized: reduce on
        if len(values) == 1 or depth > max_depth:
            return Classification(Verdict.INDETERMINATE, depth=depth - 1)
        z1 = nodes[0]
        new_values = []
        for k, (zk, wk) in enumerate(zip(nodes[1:], values[1:]), start=depth + 1):
            denom = 1 - np.conj(w1) * wk
            if abs(denom) < DENOM_TOL:
                raise InconclusiveStep(k)
            new_values.append(((wk - w1) / denom) / blaschke(z1, zk))
        chain.append((z1, w1))
        nodes = nodes[1:]
        values = new_values


def _lift(chain: list[tuple[complex, complex]], z_disc: complex, value: complex) -> complex:
    """Lift a reduced-problem value at ``z_disc`` through consumed Schur pivots."""
    for z1, w1 in reversed(chain):
        value = blaschke_inv(w1, blaschke(z1, z_disc) * value)
    return value


def matsubara_frequency(n: int, beta: float) -> float:
    """The n-th fermionic Matsubara frequency (2n + 1) pi / beta."""
    return (2 * n + 1) * np.pi / beta


def matsubara_uniqueness_check(pick: PickRepresentation, beta: float) -> Classification:
    """Classify a Pick function sampled at its first K + 2 Matsubara nodes.

    ``pick`` must have no linear part and a measure with ``K`` atoms; the
    data ``(i w_n, pick(i w_n))`` for ``n = 0..K+1`` then pins the function
    down uniquely, and the classifier is expected to report that.
    """
    if beta <= 0:
        raise InterpolationError("beta must be positive")
    if pick.linear != 0:
        raise InterpolationError("uniqueness check expects a pure-measure Pick function")
    k = pick.measure.n_atoms
    nodes = [1j * matsubara_frequency(n, beta) for n in range(k + 2)]
    values = [pick(z) for z in nodes]
    return classify(InterpolationProblem(nodes, values))
