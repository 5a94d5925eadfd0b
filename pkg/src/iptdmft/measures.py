"""Discrete positive measures on the real line and operations built on them.

A finite positive Borel measure with finite support is stored as sorted
atoms ``(x_k, w_k)`` with ``w_k > 0``.  These measures carry hybridization
functions and self-energies through their Cauchy transforms

.. math:: C[m](z) = \\sum_k \\frac{w_k}{z - x_k},

so that ``-C[m]`` maps the open upper half-plane into the closed upper
half-plane (it is a Pick function).  The module provides the measure
algebra the solver loop needs: moments, convolution, Fermi reweighting,
the exact one-dimensional order-2 Wasserstein distance, moment-preserving
atom-count compression, and moment recovery from the large-``iy``
expansion of a Pick function.
"""
from __future__ import annotations

import heapq
import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

#: Relative tolerance below which two atom positions are considered coincident.
#: Eigendecomposition-produced degenerate positions must collapse deterministically.
MERGE_RTOL = 1e-12


class MeasureError(ValueError):
    """Invalid measure construction or operation input."""


def _canonicalize(positions: np.ndarray, weights: np.ndarray):
    """Sort atoms, drop zero weights, merge coincident positions.

    Positions within ``MERGE_RTOL * (1 + |x|)`` of their left neighbour are
    merged into the weight barycenter, which preserves mass and first moment.
    """
    if positions.shape != weights.shape or positions.ndim != 1:
        raise MeasureError("positions and weights must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(weights))):
        raise MeasureError("atoms must be finite")
    if np.any(weights < 0):
        raise MeasureError("weights must be nonnegative")
    keep = weights > 0
    positions, weights = positions[keep], weights[keep]
    if positions.size == 0:
        return positions, weights
    order = np.argsort(positions, kind="stable")
    positions, weights = positions[order], weights[order]

    gaps = np.diff(positions)
    tol = MERGE_RTOL * (1.0 + np.abs(positions[:-1]))
    if not np.any(gaps <= tol):
        return positions, weights
    # cluster id increases only where the gap exceeds tolerance
    cluster = np.concatenate([[0], np.cumsum(gaps > tol)])
    n = cluster[-1] + 1
    w_out = np.zeros(n)
    np.add.at(w_out, cluster, weights)
    xw = np.zeros(n)
    np.add.at(xw, cluster, weights * positions)
    return xw / w_out, w_out


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite positive measure ``sum_k w_k * delta(x_k)`` with sorted atoms."""

    positions: np.ndarray
    weights: np.ndarray

    def __init__(self, positions, weights):
        pos, wt = _canonicalize(
            np.asarray(positions, dtype=float), np.asarray(weights, dtype=float)
        )
        pos.setflags(write=False)
        wt.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "weights", wt)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "DiscreteMeasure":
        atoms = list(atoms)
        if not atoms:
            return cls.zero()
        pos, wt = zip(*atoms)
        return cls(pos, wt)

    @classmethod
    def delta(cls, position: float, weight: float = 1.0) -> "DiscreteMeasure":
        return cls([position], [weight])

    @classmethod
    def zero(cls) -> "DiscreteMeasure":
        return cls([], [])

    @property
    def n_atoms(self) -> int:
        return self.positions.size

    @property
    def is_zero(self) -> bool:
        return self.positions.size == 0

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    def scaled(self, factor: float) -> "DiscreteMeasure":
        """Measure with every weight multiplied by ``factor >= 0``."""
        if factor < 0:
            raise MeasureError("scaling factor must be nonnegative")
        return DiscreteMeasure(self.positions, factor * self.weights)

    def reflected(self) -> "DiscreteMeasure":
        """Pushforward under x -> -x."""
        return DiscreteMeasure(-self.positions[::-1], self.weights[::-1])

    def is_probability(self, tol: float = 1e-9) -> bool:
        return abs(self.mass - 1.0) <= tol

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return (
            self.positions.shape == other.positions.shape
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self) -> str:
        return f"DiscreteMeasure({self.n_atoms} atoms, mass={self.mass:.6g})"

    def close_to(self, other: "DiscreteMeasure", tol: float = 1e-12) -> bool:
        return (
            self.n_atoms == other.n_atoms
            and np.allclose(self.positions, other.positions, atol=tol, rtol=tol)
            and np.allclose(self.weights, other.weights, atol=tol, rtol=tol)
        )


def cauchy_transform(m: DiscreteMeasure, z):
    """Evaluate ``sum_k w_k / (z - x_k)`` off the real axis.

    For Im(z) > 0 the result has nonpositive imaginary part, so the negative
    of the transform is Pick-valued.  ``z`` may be a scalar or an array.
    """
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise MeasureError("cauchy_transform requires Im(z) != 0")
    if m.is_zero:
        out = np.zeros_like(z)
        return out[()] if out.ndim == 0 else out
    out = np.sum(m.weights / (z[..., None] - m.positions), axis=-1)
    return out[()] if out.ndim == 0 else out


def moment(m: DiscreteMeasure, k: int) -> float:
    """k-th moment ``sum_k w_k x_k**k``; order 0 is the total mass."""
    if k < 0:
        raise MeasureError("moment order must be >= 0")
    if m.is_zero:
        return 0.0
    if k == 0:
        return m.mass
    return float(np.sum(m.weights * m.positions**k))


def convolve(m1: DiscreteMeasure, m2: DiscreteMeasure) -> DiscreteMeasure:
    """Convolution product: atoms at pairwise position sums, product weights."""
    if m1.is_zero or m2.is_zero:
        raise MeasureError("convolve requires nonempty measures")
    pos = (m1.positions[:, None] + m2.positions[None, :]).ravel()
    wt = (m1.weights[:, None] * m2.weights[None, :]).ravel()
    # pre-aggregate exactly equal sums to keep the constructor's merge cheap
    upos, inv = np.unique(pos, return_inverse=True)
    uwt = np.zeros_like(upos)
    np.add.at(uwt, inv, wt)
    return DiscreteMeasure(upos, uwt)


def _log1pexp(t: np.ndarray) -> np.ndarray:
    """log(1 + exp(t)), overflow safe."""
    return np.logaddexp(0.0, t)


def fermi_reweight(m: DiscreteMeasure, beta: float, mode: str) -> DiscreteMeasure:
    """Reweight atoms by the Fermi factor ``1 + exp(-beta*x)`` or its inverse.

    ``mode="divide"`` multiplies each weight by ``1/(1+e^{-beta x})`` (the
    logistic function of ``beta*x``); ``mode="multiply"`` is its exact
    algebraic inverse.  Both factors are evaluated as ``exp(∓log(1+e^{-bx}))``
    so the composition round-trips at machine precision and ``beta*|x|`` far
    beyond the exponent range stays finite in the divide branch.
    """
    if beta <= 0:
        raise MeasureError("beta must be positive")
    if m.is_zero:
        return m
    log_factor = _log1pexp(-beta * m.positions)
    if mode == "divide":
        sign = -1.0
    elif mode == "multiply":
        sign = 1.0
    else:
        raise MeasureError(f"unknown mode {mode!r}; expected 'divide' or 'multiply'")
    # reweight in log space: the factor alone may overflow double range even
    # when the reweighted mass is representable
    new_weights = np.exp(np.log(m.weights) + sign * log_factor)
    return DiscreteMeasure(m.positions, new_weights)


def wasserstein2(m1: DiscreteMeasure, m2: DiscreteMeasure, mass_tol: float = 1e-9) -> float:
    """Order-2 Wasserstein distance between two probability measures.

    Computed exactly through the monotone (inverse-CDF) coupling: the two
    piecewise-constant quantile functions are integrated in closed form on
    the common refinement of their jump grids.
    """
    for m in (m1, m2):
        if not m.is_probability(mass_tol):
            raise MeasureError(f"wasserstein2 requires probability measures, got mass {m.mass}")
    c1 = np.cumsum(m1.weights)
    c2 = np.cumsum(m2.weights)
    c1 /= c1[-1]
    c2 /= c2[-1]
    edges = np.unique(np.concatenate([[0.0], c1, c2]))
    seg = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    x1 = m1.positions[np.minimum(np.searchsorted(c1, mids), m1.n_atoms - 1)]
    x2 = m2.positions[np.minimum(np.searchsorted(c2, mids), m2.n_atoms - 1)]
    return float(np.sqrt(np.sum(seg * (x1 - x2) ** 2)))


def mixture(parts: Sequence[tuple[float, DiscreteMeasure]]) -> DiscreteMeasure:
    """Nonnegative combination ``sum_i coeff_i * m_i`` as an atom-union measure."""
    pos = np.concatenate([m.positions for _, m in parts]) if parts else np.empty(0)
    wt = np.concatenate([c * m.weights for c, m in parts]) if parts else np.empty(0)
    return DiscreteMeasure(pos, wt)


class CompressResult(NamedTuple):
    measure: DiscreteMeasure
    w2_cost: float  # exact W2(input, output); see `compress`


def compress(m: DiscreteMeasure, n_max: int) -> CompressResult:
    """Reduce to at most ``n_max`` atoms by greedy adjacent-pair merging.

    Each merge replaces the adjacent pair of least cost
    ``w_i w_j (x_i - x_j)^2 / (w_i + w_j)`` by its barycenter, preserving
    mass and first moment exactly and never increasing the second moment.
    Merged clusters stay contiguous and ordered, so the map sending every
    input atom to its cluster barycenter is monotone, hence optimal: the
    returned cost ``sqrt(sum of merge costs)`` equals W2(input, output).
    """
    if n_max < 1:
        raise MeasureError("n_max must be >= 1")
    if m.n_atoms <= n_max:
        return CompressResult(m, 0.0)
    x = m.positions.copy()
    w = m.weights.copy()
    n = x.size
    left = np.arange(n) - 1
    right = np.arange(n) + 1
    alive = np.ones(n, dtype=bool)
    version = np.zeros(n, dtype=np.int64)

    def pair_cost(i: int, j: int) -> float:
        return w[i] * w[j] * (x[i] - x[j]) ** 2 / (w[i] + w[j])

    heap = [(pair_cost(i, i + 1), i, version[i], version[i + 1]) for i in range(n - 1)]
    heapq.heapify(heap)
    cost2 = 0.0
    remaining = n
    while remaining > n_max:
        c, i, vi, vj = heapq.heappop(heap)
        j = right[i]
        if not alive[i] or j >= n or vi != version[i] or vj != version[j]:
            continue
        cost2 += c
        wij = w[i] + w[j]
        x[i] = (w[i] * x[i] + w[j] * x[j]) / wij
        w[i] = wij
        version[i] += 1
        alive[j] = False
        right[i] = right[j]
        if right[i] < n:
            left[right[i]] = i
            heapq.heappush(heap, (pair_cost(i, right[i]), i, version[i], version[right[i]]))
        if left[i] >= 0:
            k = left[i]
            heapq.heappush(heap, (pair_cost(k, i), k, version[k], version[i]))
        remaining -= 1
    out = DiscreteMeasure(x[alive], w[alive])
    return CompressResult(out, float(np.sqrt(cost2)))


def quantile_compress(m: DiscreteMeasure, n_max: int) -> CompressResult:
    """Reduce to at most ``n_max`` atoms by equal-mass quantile binning.

    The cumulative mass axis is cut into ``n_max`` equal slices (atoms are
    split across cuts) and each slice collapses to its barycenter.  Mass
    and first moment are preserved exactly and the second moment never
    increases.  Unlike greedy pair merging, the output depends W2-
    continuously on the input, which lets damped fixed-point iterations
    settle to machine precision instead of jittering at the quantization
    scale.  The slice map is monotone, so the reported cost is again the
    exact W2 distance between input and output.
    """
    if n_max < 1:
        raise MeasureError("n_max must be >= 1")
    if m.n_atoms <= n_max:
        return CompressResult(m, 0.0)
    cum = np.cumsum(m.weights)
    total = cum[-1]
    edges = total * np.arange(1, n_max) / n_max
    # cut points along the cumulative-mass axis: atom boundaries + bin edges
    cuts = np.unique(np.concatenate([[0.0], cum, edges]))
    left = cuts[:-1]
    piece_mass = np.diff(cuts)
    keep = piece_mass > 0
    left, piece_mass = left[keep], piece_mass[keep]
    atom = np.searchsorted(cum, left, side="right")
    piece_pos = m.positions[atom]
    # half-open bins [e_{k-1}, e_k); the cut construction guarantees no piece
    # straddles a bin edge, and exact cut reuse makes the assignment stable
    bin_id = np.searchsorted(edges, left, side="right")
    w_bin = np.zeros(n_max)
    xw_bin = np.zeros(n_max)
    x2w_bin = np.zeros(n_max)
    np.add.at(w_bin, bin_id, piece_mass)
    np.add.at(xw_bin, bin_id, piece_mass * piece_pos)
    np.add.at(x2w_bin, bin_id, piece_mass * piece_pos**2)
    nonzero = w_bin > 0
    bary = xw_bin[nonzero] / w_bin[nonzero]
    cost2 = float(np.sum(x2w_bin[nonzero] - w_bin[nonzero] * bary**2))
    out = DiscreteMeasure(bary, w_bin[nonzero])
    return CompressResult(out, float(np.sqrt(max(cost2, 0.0))))


@dataclass(frozen=True)
class PickRepresentation:
    """Integral representation ``f(z) = a z + b - C[measure](z)`` of a Pick function.

    ``a >= 0`` and ``b`` real; with a finite-moment measure this is the
    general form of a Pick function, and the physics objects of interest
    arise as ``G = -f`` with ``a = b = 0``.
    """

    linear: float
    constant: float
    measure: DiscreteMeasure

    def __post_init__(self):
        if self.linear < 0:
            raise MeasureError("linear coefficient must be >= 0")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        val = self.linear * z + self.constant - cauchy_transform(self.measure, z)
        return val[()] if np.ndim(val) == 0 else val


def asymptotic_moments(
    f: Callable[[complex], complex],
    order: int,
    scale: float,
    ladder_factor: float = 4.0,
    rungs: int = 20,
    consistency_rtol: float = 1e-5,
) -> np.ndarray:
    """Recover moments of the representing measure of a Pick function.

    ``f`` must evaluate a Pick function ``f(z) = a z + b - C[m](z)`` (for
    instance the negative of a Green's-function-like object) whose measure
    ``m`` has finite moments up to ``order`` and support within
    ``[-scale, scale]``.  The moments enter the expansion
    ``-f(iy) = m_{-2}(iy) + m_{-1} + m_0/(iy) + m_1/(iy)^2 + ...``,
    which is fitted on the geometric ladder ``y = y0 * 2^(j/4)``,
    ``j = 0..rungs-1`` with ``y0 = ladder_factor * (1 + scale)``.  Because
    the measure is real, even and odd moments separate into the real and
    imaginary parts of ``iy * (-f(iy))`` and are fitted independently, with
    buffer orders absorbing the truncation tail.  Returns
    ``[m_0, ..., m_order]``.

    Accuracy is relative to the resolvable size ``mass * (1 + scale)^k``;
    moments far below that scale drown in double-precision roundoff of the
    ``f`` evaluations.  A second fit on the upper half of the ladder
    cross-checks the low moments; disagreement beyond ``consistency_rtol``
    warns of ill-conditioning.
    """
    if order < 0:
        raise MeasureError("order must be >= 0")
    if scale < 0 or not np.isfinite(scale):
        raise MeasureError("scale must be finite and nonnegative")
    n_buffer = 8
    y0 = ladder_factor * (1.0 + scale)
    y = y0 * 2.0 ** (np.arange(rungs) / 4.0)
    vals = np.array([-f(1j * yy) for yy in y], dtype=complex)
    # g := iy * (-f(iy)) = a y^2 - i b y + sum_k m_k (iy)^{-k}
    g = 1j * y * vals
    h = 1.0 / y**2

    def fit(yy, hh, data, extra_col, n_terms):
        cols = np.column_stack([extra_col] + [hh**k for k in range(n_terms)])
        norm = np.linalg.norm(cols, axis=0)
        sol, *_ = np.linalg.lstsq(cols / norm, data, rcond=None)
        return sol / norm

    n_even = order // 2 + 1 + n_buffer
    n_odd = (order + 1) // 2 + n_buffer
    # Re g = a y^2 + m_0 - m_2 h + m_4 h^2 - ...
    even = fit(y, h, g.real, y**2, n_even)[1:] * (-1.0) ** np.arange(n_even)
    # y * Im g = -b y^2 - (m_1 - m_3 h + ...)
    odd = fit(y, h, g.imag * y, y**2, n_odd)[1:]
    odd = odd * (-((-1.0) ** np.arange(n_odd)))

    m = np.empty(order + 1)
    m[0::2] = even[: order // 2 + 1]
    m[1::2] = odd[: (order + 1) // 2]

    # the upper half of the ladder resolves only the low moments; refit there
    # with a short expansion and compare where both estimates are reliable
    half = rungs // 2
    check_upto = min(order, 2)
    ne, no = check_upto // 2 + 3, (check_upto + 1) // 2 + 3
    even_hi = fit(y[half:], h[half:], g.real[half:], y[half:] ** 2, ne)[1:]
    even_hi *= (-1.0) ** np.arange(ne)
    odd_hi = fit(y[half:], h[half:], g.imag[half:] * y[half:], y[half:] ** 2, no)[1:]
    odd_hi *= -((-1.0) ** np.arange(no))
    m_hi = np.empty(check_upto + 1)
    m_hi[0::2] = even_hi[: check_upto // 2 + 1]
    m_hi[1::2] = odd_hi[: (check_upto + 1) // 2]
    ref = np.maximum(np.abs(m[: check_upto + 1]), abs(m[0]) + 1e-300)
    if np.any(np.abs(m[: check_upto + 1] - m_hi) > consistency_rtol * ref):
        warnings.warn(
            "asymptotic moment extraction: ladder estimates disagree; "
            "result may be ill-conditioned",
            stacklevel=2,
        )
    return m


def write_measure_file(path, m: DiscreteMeasure) -> None:
    """Write a measure as a text document with 17-significant-digit atoms."""
    atoms = [
        [float(f"{x:.17g}"), float(f"{w:.17g}")]
        for x, w in zip(m.positions, m.weights)
    ]
    doc = {"atoms": atoms, "mass_check": float(f"{m.mass:.17g}")}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_measure_file(path) -> DiscreteMeasure:
    """Read a measure file written by `write_measure_file` (or by hand)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MeasureError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or "atoms" not in doc:
        raise MeasureError(f"{path}: expected an object with an 'atoms' field")
    atoms = doc["atoms"]
    try:
        m = DiscreteMeasure.from_atoms((float(x), float(w)) for x, w in atoms)
    except (TypeError, ValueError) as exc:
        raise MeasureError(f"{path}: malformed atoms array: {exc}") from exc
    mass_check = doc.get("mass_check")
    if mass_check is not None and abs(m.mass - mass_check) > 1e-9 * (1 + abs(mass_check)):
        raise MeasureError(
            f"{path}: mass_check {mass_check} does not match atom total {m.mass}"
        )
    return m
