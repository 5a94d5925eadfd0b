"""Measure algebra: construction laws, transforms, metric, compression."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iptdmft.measures import (
    DiscreteMeasure,
    MeasureError,
    PickRepresentation,
    asymptotic_moments,
    cauchy_transform,
    compress,
    convolve,
    fermi_reweight,
    mixture,
    moment,
    wasserstein2,
)

atom_lists = st.lists(
    st.tuples(
        st.floats(min_value=-50, max_value=50),
        st.floats(min_value=1e-3, max_value=10),
    ),
    min_size=1,
    max_size=8,
)


def random_measure(rng, n, spread=5.0):
    return DiscreteMeasure(spread * rng.standard_normal(n), rng.uniform(0.1, 1.0, n))


def random_probability(rng, n, spread=5.0):
    m = random_measure(rng, n, spread)
    return m.scaled(1.0 / m.mass)


# ---------------------------------------------------------------------------
# construction invariants


def test_atoms_sorted_merged_positive():
    m = DiscreteMeasure([3.0, -1.0, 3.0, 2.0], [0.5, 1.0, 0.25, 0.0])
    assert m.atoms() == [(-1.0, 1.0), (3.0, 0.75)]
    assert np.all(np.diff(m.positions) > 0)


def test_negative_weight_rejected():
    with pytest.raises(MeasureError):
        DiscreteMeasure([0.0], [-1.0])


def test_coincidence_tolerance_merges_by_barycenter():
    x = 1.0
    m = DiscreteMeasure([x, x + 1e-13], [1.0, 3.0])
    assert m.n_atoms == 1
    assert m.mass == pytest.approx(4.0, abs=0)
    assert m.positions[0] == pytest.approx(x + 0.75e-13, rel=1e-6)


def test_zero_measure():
    z = DiscreteMeasure.zero()
    assert z.is_zero and z.mass == 0.0
    assert cauchy_transform(z, 1j) == 0


@given(atom_lists)
@settings(deadline=None)
def test_construction_idempotent(atoms):
    m = DiscreteMeasure.from_atoms(atoms)
    again = DiscreteMeasure(m.positions, m.weights)
    assert m == again


# ---------------------------------------------------------------------------
# cauchy transform


def test_cauchy_delta_at_i():
    assert cauchy_transform(DiscreteMeasure.delta(0.0), 1j) == pytest.approx(-1j)


def test_cauchy_two_atoms_at_real_axis_offset():
    m = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
    # hand evaluation of 0.5/(2+1) + 0.5/(2-1) at z = 2 (reached via limit)
    val = cauchy_transform(m, 2.0 + 1e-12j)
    assert val == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_cauchy_rejects_real_z():
    with pytest.raises(MeasureError):
        cauchy_transform(DiscreteMeasure.delta(0.0), 2.0)


def test_cauchy_pick_property_and_reflection():
    rng = np.random.default_rng(7)
    m = random_measure(rng, 6)
    for _ in range(25):
        z = complex(rng.uniform(-5, 5), rng.uniform(0.1, 5))
        val = cauchy_transform(m, z)
        assert val.imag < 0
        assert cauchy_transform(m, np.conj(z)) == pytest.approx(np.conj(val))


def test_cauchy_vectorized_matches_scalar():
    rng = np.random.default_rng(8)
    m = random_measure(rng, 4)
    zs = rng.uniform(-2, 2, 5) + 1j * rng.uniform(0.5, 2, 5)
    vec = cauchy_transform(m, zs)
    assert vec == pytest.approx([cauchy_transform(m, z) for z in zs])


# ---------------------------------------------------------------------------
# moments


def test_moments_basic():
    assert moment(DiscreteMeasure.delta(2.5), 1) == pytest.approx(2.5)
    sym = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
    assert moment(sym, 1) == pytest.approx(0.0)
    assert moment(sym, 2) == pytest.approx(1.0)
    assert moment(sym, 0) == pytest.approx(sym.mass)


# ---------------------------------------------------------------------------
# convolution


def test_convolve_deltas():
    out = convolve(DiscreteMeasure.delta(1.5), DiscreteMeasure.delta(-0.5))
    assert out.atoms() == [(1.0, 1.0)]


def test_convolve_bernoulli_square():
    coin = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
    out = convolve(coin, coin)
    assert out.positions == pytest.approx([-2.0, 0.0, 2.0])
    assert out.weights == pytest.approx([0.25, 0.5, 0.25])


@given(atom_lists, atom_lists)
@settings(deadline=None, max_examples=50)
def test_convolve_mass_bilinear_and_commutative(a1, a2):
    m1, m2 = DiscreteMeasure.from_atoms(a1), DiscreteMeasure.from_atoms(a2)
    out = convolve(m1, m2)
    assert out.mass == pytest.approx(m1.mass * m2.mass, rel=1e-12)
    assert out.close_to(convolve(m2, m1), tol=1e-10)


def test_convolve_associative():
    rng = np.random.default_rng(11)
    for _ in range(10):
        a, b, c = (random_measure(rng, rng.integers(1, 5)) for _ in range(3))
        lhs = convolve(convolve(a, b), c)
        rhs = convolve(a, convolve(b, c))
        assert lhs.close_to(rhs, tol=1e-9)


# ---------------------------------------------------------------------------
# fermi reweighting


def test_fermi_divide_near_zero_beta_halves_weights():
    m = DiscreteMeasure([-3.0, 0.5, 4.0], [1.0, 2.0, 3.0])
    out = fermi_reweight(m, 1e-12, "divide")
    assert out.weights == pytest.approx(0.5 * m.weights, rel=1e-9)


def test_fermi_divide_at_origin():
    out = fermi_reweight(DiscreteMeasure.delta(0.0, 2.0), 3.7, "divide")
    assert out.weights[0] == pytest.approx(1.0)


@given(atom_lists, st.floats(min_value=0.01, max_value=12))
@settings(deadline=None, max_examples=50)
def test_fermi_multiply_inverts_divide(atoms, beta):
    # restrict to beta*|x| within the double exponent range, where the
    # divide factor stays representable and inversion is exact algebra
    m = DiscreteMeasure.from_atoms(atoms)
    back = fermi_reweight(fermi_reweight(m, beta, "divide"), beta, "multiply")
    assert back.close_to(m, tol=1e-12)


def test_fermi_extreme_arguments_stay_finite():
    m = DiscreteMeasure([-2000.0, 2000.0], [1.0, 1.0])
    out = fermi_reweight(m, 10.0, "divide")
    assert np.all(np.isfinite(out.weights))
    assert out.weights[-1] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# wasserstein


def test_w2_between_deltas():
    assert wasserstein2(DiscreteMeasure.delta(-1.5), DiscreteMeasure.delta(2.0)) == pytest.approx(
        3.5, abs=1e-12
    )


def test_w2_identity():
    rng = np.random.default_rng(3)
    m = random_probability(rng, 5)
    assert wasserstein2(m, m) == pytest.approx(0.0, abs=1e-12)


def test_w2_split_mass():
    m1 = DiscreteMeasure([0.0, 2.0], [0.5, 0.5])
    assert wasserstein2(m1, DiscreteMeasure.delta(1.0)) == pytest.approx(1.0, abs=1e-12)


def test_w2_rejects_non_probability():
    with pytest.raises(MeasureError):
        wasserstein2(DiscreteMeasure.delta(0.0, 2.0), DiscreteMeasure.delta(0.0))


def test_w2_metric_axioms_random_triples():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = random_probability(rng, rng.integers(1, 7))
        b = random_probability(rng, rng.integers(1, 7))
        c = random_probability(rng, rng.integers(1, 7))
        dab, dba = wasserstein2(a, b), wasserstein2(b, a)
        assert dab == pytest.approx(dba, abs=1e-12)
        assert wasserstein2(a, c) <= dab + wasserstein2(b, c) + 1e-12
        if dab < 1e-13:
            assert a.close_to(b, tol=1e-10)


def test_w2_against_quadrature_of_quantile_difference():
    # independent oracle: numerically integrate |F1^{-1}(q) - F2^{-1}(q)|^2
    rng = np.random.default_rng(6)
    for _ in range(10):
        m1 = random_probability(rng, rng.integers(1, 6))
        m2 = random_probability(rng, rng.integers(1, 6))
        qs = (np.arange(200000) + 0.5) / 200000

        def quantile(m, q):
            cum = np.cumsum(m.weights)
            cum /= cum[-1]
            return m.positions[np.minimum(np.searchsorted(cum, q), m.n_atoms - 1)]

        approx = np.sqrt(np.mean((quantile(m1, qs) - quantile(m2, qs)) ** 2))
        assert wasserstein2(m1, m2) == pytest.approx(approx, abs=1e-3)


# ---------------------------------------------------------------------------
# compression


def test_compress_noop_when_small():
    rng = np.random.default_rng(9)
    m = random_measure(rng, 5)
    res = compress(m, 5)
    assert res.measure == m and res.w2_cost == 0.0


def test_compress_two_atoms_to_barycenter():
    m = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
    res = compress(m, 1)
    assert res.measure.atoms() == [(0.0, 1.0)]
    assert res.w2_cost == pytest.approx(1.0)  # each half-mass moves distance 1


def test_compress_preserves_mass_mean_shrinks_variance():
    rng = np.random.default_rng(10)
    m = random_measure(rng, 100)
    res = compress(m, 10)
    out = res.measure
    assert out.n_atoms <= 10
    assert out.mass == pytest.approx(m.mass, rel=1e-14)
    assert moment(out, 1) == pytest.approx(moment(m, 1), rel=1e-12, abs=1e-12)
    assert moment(out, 2) <= moment(m, 2) + 1e-12
    # second-moment drop equals the accumulated squared merge cost
    assert moment(m, 2) - moment(out, 2) == pytest.approx(res.w2_cost**2, rel=1e-9)


def test_compress_cost_equals_w2_distance():
    rng = np.random.default_rng(12)
    m = random_probability(rng, 100)
    res = compress(m, 10)
    assert wasserstein2(m, res.measure) == pytest.approx(res.w2_cost, rel=1e-10)


@given(atom_lists)
@settings(deadline=None, max_examples=50)
def test_compress_idempotent_at_capacity(atoms):
    m = DiscreteMeasure.from_atoms(atoms)
    res = compress(m, m.n_atoms)
    assert res.measure == m


# ---------------------------------------------------------------------------
# mixtures


def test_mixture_convex_combination():
    a = DiscreteMeasure.delta(0.0)
    b = DiscreteMeasure.delta(1.0)
    mix = mixture([(0.25, a), (0.75, b)])
    assert mix.atoms() == [(0.0, 0.25), (1.0, 0.75)]
    assert mix.is_probability()


# ---------------------------------------------------------------------------
# asymptotic moment extraction


def test_asymptotic_moments_single_atom():
    m = DiscreteMeasure.delta(1.7)
    f = lambda z: -cauchy_transform(m, z)
    m0, m1 = asymptotic_moments(f, 1, scale=1.7)
    assert m0 == pytest.approx(1.0, rel=1e-9)
    assert m1 == pytest.approx(1.7, rel=1e-9)


def test_asymptotic_moments_symmetric_pair():
    m = DiscreteMeasure([-1.0, 1.0], [0.5, 0.5])
    f = lambda z: -cauchy_transform(m, z)
    got = asymptotic_moments(f, 2, scale=1.0)
    assert got == pytest.approx([1.0, 0.0, 1.0], abs=1e-9)


def test_asymptotic_moments_random_measures_order4():
    rng = np.random.default_rng(13)
    for _ in range(10):
        m = random_measure(rng, 5, spread=2.0)
        f = lambda z: -cauchy_transform(m, z)
        got = asymptotic_moments(f, 4, scale=float(np.max(np.abs(m.positions))))
        want = [moment(m, k) for k in range(5)]
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_asymptotic_moments_recovers_affine_part():
    m = DiscreteMeasure.delta(0.5, 2.0)
    pick = PickRepresentation(linear=0.3, constant=-1.2, measure=m)
    got = asymptotic_moments(pick, 2, scale=0.5)
    assert got == pytest.approx([2.0, 1.0, 0.5], rel=1e-8)


# ---------------------------------------------------------------------------
# pick representation


def test_pick_representation_upper_half_plane_values():
    rng = np.random.default_rng(14)
    rep = PickRepresentation(0.5, -2.0, random_measure(rng, 4))
    for _ in range(50):
        z = complex(rng.uniform(-4, 4), rng.uniform(1e-3, 4))
        assert rep(z).imag >= 0


def test_pick_representation_rejects_negative_linear():
    with pytest.raises(MeasureError):
        PickRepresentation(-0.1, 0.0, DiscreteMeasure.delta(0.0))
