"""Bath-update map: lattice extraction, embeddings, moment identities."""
import numpy as np
import pytest

from iptdmft.fock import HubbardSpec
from iptdmft.lattice import (
    LatticeError,
    LatticeSpec,
    NotVertexTransitiveError,
    bath_update,
    bath_update_via_embedding,
    build_embedding,
    hybridization_moments,
    lattice_from_hubbard,
    resolvent_check,
)
from iptdmft.measures import DiscreteMeasure, cauchy_transform, moment


def random_lattice(rng, n_env=None, u=None):
    n = int(rng.integers(2, 6)) if n_env is None else n_env
    env = rng.standard_normal((n, n))
    env = (env + env.T) / 2
    w = rng.standard_normal(n)
    while not np.any(w):
        w = rng.standard_normal(n)
    return LatticeSpec(
        w, env, u=float(rng.uniform(0.2, 3.0)) if u is None else u, beta=float(rng.uniform(0.5, 5))
    )


def random_measure(rng, n):
    return DiscreteMeasure(2 * rng.standard_normal(n), rng.uniform(0.05, 0.4, n))


# ---------------------------------------------------------------------------
# lattice extraction


def test_triangle_ring_extraction():
    spec = HubbardSpec.ring(3, t=1.0, u=2.0, beta=1.5)
    lat = lattice_from_hubbard(spec, site=0)
    assert lat.coupling == pytest.approx([1.0, 1.0])
    assert lat.environment == pytest.approx(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert lat.w_norm_sq == pytest.approx(2.0)


def test_ring_coupling_norm_and_path_environment():
    for n in (4, 6, 8):
        t = 0.7
        spec = HubbardSpec.ring(n, t=t, u=1.0, beta=2.0)
        lat = lattice_from_hubbard(spec, site=0)
        assert lat.w_norm_sq == pytest.approx(2 * t**2)
        # deleting a ring vertex leaves the path: tridiagonal environment
        expected = np.zeros((n - 1, n - 1))
        for i in range(n - 2):
            expected[i, i + 1] = expected[i + 1, i] = t
        assert lat.environment == pytest.approx(expected)


def test_non_transitive_graph_rejected():
    spec = HubbardSpec(3, [(0, 1, 1.0), (1, 2, 1.0)], on_site_u=1.0, beta=1.0)  # path
    with pytest.raises(NotVertexTransitiveError):
        lattice_from_hubbard(spec, site=0)


def test_large_graph_requires_attestation():
    edges = [(i, (i + 1) % 13, 1.0) for i in range(13)]
    big = HubbardSpec(13, edges, on_site_u=1.0, beta=1.0)
    with pytest.raises(LatticeError):
        lattice_from_hubbard(big, site=0)
    lat = lattice_from_hubbard(big, site=0, assume_transitive=True)
    assert lat.coupling.size == 12


def test_disconnected_requires_flag():
    with pytest.raises(LatticeError):
        LatticeSpec([0.0, 0.0], np.zeros((2, 2)), u=1.0, beta=1.0)
    lat = LatticeSpec([0.0, 0.0], np.zeros((2, 2)), u=1.0, beta=1.0, allow_disconnected=True)
    assert lat.is_disconnected


# ---------------------------------------------------------------------------
# bath update


def test_triangle_with_zero_self_energy():
    lat = lattice_from_hubbard(HubbardSpec.ring(3, 1.0, 2.0, 1.5))
    nu = bath_update(DiscreteMeasure.zero(), lat)
    # antisymmetric environment mode carries no coupling weight
    assert nu.atoms() == pytest.approx([(1.0, 1.0)])
    z = 0.5 + 1.2j
    assert lat.w_norm_sq * cauchy_transform(nu, z) == pytest.approx(2.0 / (z - 1.0))


def test_u_zero_reduces_to_environment_spectrum():
    rng = np.random.default_rng(0)
    lat = random_lattice(rng, u=0.0)
    mu = random_measure(rng, 3)
    nu = bath_update(mu, lat)
    nu0 = bath_update(DiscreteMeasure.zero(), lat)
    assert nu.close_to(nu0, tol=1e-12)


def test_mass_exactly_one():
    rng = np.random.default_rng(1)
    for _ in range(20):
        nu = bath_update(random_measure(rng, int(rng.integers(1, 5))), random_lattice(rng))
        assert nu.mass == pytest.approx(1.0, abs=1e-14)


def test_moment_identities():
    rng = np.random.default_rng(2)
    for _ in range(50):
        lat = random_lattice(rng)
        mu = random_measure(rng, int(rng.integers(1, 4)))
        nu = bath_update(mu, lat)
        m1, m2 = hybridization_moments(mu, lat)
        assert moment(nu, 1) == pytest.approx(m1, abs=1e-10)
        assert moment(nu, 2) == pytest.approx(m2, abs=1e-10)


def test_embedding_route_agrees():
    rng = np.random.default_rng(3)
    for _ in range(10):
        lat = random_lattice(rng)
        mu = random_measure(rng, int(rng.integers(1, 4)))
        a = bath_update(mu, lat)
        b = bath_update_via_embedding(mu, lat)
        assert a.close_to(b, tol=1e-9)


def test_embedding_resolvent_restriction():
    rng = np.random.default_rng(4)
    lat = random_lattice(rng, n_env=3)
    mu = random_measure(rng, 2)
    emb = build_embedding(mu, lat)
    for _ in range(5):
        z = complex(rng.uniform(-2, 2), rng.uniform(0.3, 2))
        full = np.linalg.inv(z * np.eye(emb.shape[0]) - emb)
        sigma = lat.u**2 * cauchy_transform(mu, z)
        target = np.linalg.inv((z - sigma) * np.eye(3) - lat.environment)
        assert np.abs(full[:3, :3] - target).max() < 1e-10


def test_pick_property_of_hybridization():
    rng = np.random.default_rng(5)
    lat = random_lattice(rng)
    nu = bath_update(random_measure(rng, 3), lat)
    for _ in range(50):
        z = complex(rng.uniform(-4, 4), rng.uniform(0.05, 3))
        assert (lat.w_norm_sq * cauchy_transform(nu, z)).imag <= 0


def test_resolvent_check_residuals():
    rng = np.random.default_rng(6)
    lat = lattice_from_hubbard(HubbardSpec.ring(3, 1.0, 2.0, 1.5))
    assert resolvent_check(DiscreteMeasure.zero(), lat, 2j) < 1e-12
    assert resolvent_check(DiscreteMeasure.zero(), lat, 1 + 1j) < 1e-12
    for _ in range(20):
        lat = random_lattice(rng)
        mu = random_measure(rng, int(rng.integers(1, 4)))
        z = complex(rng.uniform(-2, 2), rng.uniform(0.2, 2))
        assert resolvent_check(mu, lat, z) < 1e-9


def test_atom_growth_bound():
    rng = np.random.default_rng(7)
    for _ in range(10):
        lat = random_lattice(rng)
        k = int(rng.integers(1, 4))
        mu = random_measure(rng, k)
        nu = bath_update(mu, lat)
        assert nu.n_atoms <= lat.coupling.size * (k + 1)
        assert nu.n_atoms >= k + 1  # strictly more atoms than the self-energy


def test_disconnected_gives_zero_measure():
    lat = LatticeSpec([0.0], np.zeros((1, 1)), u=2.0, beta=1.0, allow_disconnected=True)
    assert bath_update(DiscreteMeasure.delta(0.0, 0.25), lat).is_zero
