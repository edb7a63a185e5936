import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acx.lattice import (
    BOUNDARY,
    EXTERIOR,
    INTERIOR,
    JetTable,
    LatticeDomain,
    LatticeError,
    ScalarField,
    directional_second,
    export_csv,
    fd_jet,
    fd_jets,
    import_csv,
    read_boundary_csv,
    restrict_to_slice,
    stencil_directions,
    upwind_first,
)
from acx.rng import CounterRng


@pytest.fixture
def disc():
    return LatticeDomain.ball(np.zeros(2), 1.0, 17)


@pytest.fixture
def box2():
    return LatticeDomain.box([-1, 1], 17, dim=2)


def quad_field(dom, q, p=None, c=0.0):
    x = dom.node_coords
    vals = 0.5 * np.einsum("ni,ij,nj->n", x, q, x) + c
    if p is not None:
        vals += x @ p
    return ScalarField(dom, vals)


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("make", [
    lambda: LatticeDomain.ball(np.zeros(2), 1.0, 17),
    lambda: LatticeDomain.box([-1, 1], 11, dim=2),
    lambda: LatticeDomain.ball(np.zeros(4), 1.0, 9),
])
def test_classification_partition_and_closure(make):
    dom = make()
    dom.validate()
    cls = dom.grid_class.ravel()
    assert set(np.unique(cls)) <= {EXTERIOR, BOUNDARY, INTERIOR}
    assert dom.interior_ids.size + dom.boundary_ids.size == dom.n_nodes
    # interior nodes never touch exterior within the unit box
    for off in np.ndindex(3, *(3,) * (dom.dim - 1)):
        o = np.array(off) - 1
        nb = dom.neighbor_ids(dom.interior_ids, o)
        assert np.all(nb >= 0)


def test_too_coarse_domain_rejected():
    with pytest.raises(LatticeError):
        LatticeDomain.ball(np.zeros(2), 1.0, 4)


def test_stencil_directions_primitive_and_signed_once():
    dirs = stencil_directions(2, 2)
    assert dirs.shape == (8, 2)
    tuples = {tuple(w) for w in dirs}
    for w in dirs:
        assert tuple(-w) not in tuples
        assert np.gcd.reduce(np.abs(w)[np.abs(w) > 0]) == 1


# ---------------------------------------------------------------------------
# jets
# ---------------------------------------------------------------------------

def test_jet_exact_on_affine(disc):
    p = np.array([1.5, -2.0])
    u = quad_field(disc, np.zeros((2, 2)), p=p, c=0.7)
    jet = fd_jet(u, disc.node_at(np.zeros(2)))
    assert np.allclose(jet.p, p)
    assert np.max(np.abs(jet.a)) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_jet_exact_on_quadratics(seed):
    dom = LatticeDomain.box([-1, 1], 9, dim=2)
    rng = CounterRng(seed)
    q = rng.symmetric(2)
    p = rng.normals((2,))
    u = quad_field(dom, q, p=p)
    node = dom.node_at(np.zeros(2))
    jet = fd_jet(u, node)
    assert np.allclose(jet.a, q, atol=1e-12)
    assert np.allclose(jet.p, p + q @ dom.node_coords[node], atol=1e-12)


def test_jet_taylor_bound_for_sine(box2):
    u = ScalarField.from_vectorized(box2, lambda X: np.sin(X[:, 0]))
    h = box2.h
    for node in box2.interior_ids[::5]:
        jet = fd_jet(u, int(node))
        exact = -np.sin(box2.node_coords[node, 0])
        assert abs(jet.a[0, 0] - exact) <= h ** 2 / 12 + 1e-12


def test_jet_rejects_masked_neighbor(disc):
    vals = np.zeros(disc.n_nodes)
    mask = np.zeros(disc.n_nodes, dtype=bool)
    center = disc.node_at(np.zeros(2))
    mask[disc.neighbor_ids(np.array([center]), np.array([1, 0]))[0]] = True
    u = ScalarField(disc, vals, mask)
    with pytest.raises(LatticeError):
        fd_jet(u, center)


def test_jet_table_matches_fd_jets(disc):
    u = ScalarField.from_vectorized(
        disc, lambda X: np.sin(X[:, 0]) * np.cos(1.3 * X[:, 1]))
    table = JetTable(disc, disc.interior_ids)
    p1, a1 = table.jets(u.values)
    p2, a2 = fd_jets(u)
    assert np.array_equal(p1, p2) and np.array_equal(a1, a2)


# ---------------------------------------------------------------------------
# directional second differences and upwinding
# ---------------------------------------------------------------------------

def test_directional_second_quadratic_exact(box2):
    rng = CounterRng(4)
    q = rng.symmetric(2)
    u = quad_field(box2, q)
    node = box2.node_at(np.zeros(2))
    for w in ([1, 0], [1, 1], [2, 1], [1, -2]):
        w = np.array(w)
        expect = (w @ q @ w) / (w @ w)
        assert directional_second(u, node, w) == pytest.approx(expect)
        assert directional_second(u, node, -w) == pytest.approx(expect)


def test_directional_second_of_squared_norm_is_two(disc):
    u = quad_field(disc, 2 * np.eye(2))
    node = disc.node_at(np.zeros(2))
    for w in ([1, 0], [2, 1], [1, 1]):
        assert directional_second(u, node, w) == pytest.approx(2.0)


def test_directional_second_rejects_domain_exit(disc):
    u = quad_field(disc, np.eye(2))
    edge = disc.interior_ids[0]
    with pytest.raises(LatticeError):
        directional_second(u, int(edge), [5, 5])


def test_upwind_exact_on_affine(box2):
    p = np.array([3.0, -2.0])
    u = quad_field(box2, np.zeros((2, 2)), p=p, c=1.0)
    node = box2.node_at(np.zeros(2))
    b = np.array([1.5, 0.5])
    assert upwind_first(u, node, b) == pytest.approx(b @ p)
    assert upwind_first(u, node, np.zeros(2)) == 0.0


def test_upwind_closed_form_for_half_square(box2):
    # forward difference of x^2/2 at x1: x1 + h/2
    u = ScalarField.from_vectorized(box2, lambda X: 0.5 * (X ** 2).sum(axis=1))
    node = box2.node_at(np.array([0.25, 0.0]))
    h = box2.h
    assert upwind_first(u, node, np.array([1.0, 0.0])) == pytest.approx(
        0.25 + h / 2)


# ---------------------------------------------------------------------------
# slice restriction
# ---------------------------------------------------------------------------

def test_restrict_squared_modulus():
    dom = LatticeDomain.ball(np.zeros(4), 1.0, 9)
    u = ScalarField.from_vectorized(dom, lambda X: X[:, 0] ** 2 + X[:, 1] ** 2)
    s = restrict_to_slice(u, 1)
    assert s.domain.dim == 2
    assert np.allclose(s.values, (s.domain.node_coords ** 2).sum(axis=1))


def test_restrict_constant_and_cross_term():
    dom = LatticeDomain.box([-1, 1], 9, dim=4)
    const = ScalarField(dom, np.full(dom.n_nodes, 2.5))
    assert np.allclose(restrict_to_slice(const, 1).values, 2.5)
    # Re(z1 z2) = x1 x2 - y1 y2 vanishes on the slice z2 = 0
    cross = ScalarField.from_vectorized(
        dom, lambda X: X[:, 0] * X[:, 2] - X[:, 1] * X[:, 3])
    assert np.max(np.abs(restrict_to_slice(cross, 1).values)) == 0.0


def test_restrict_rejects_missing_slice():
    dom = LatticeDomain.box([[0.1, 1.1]] * 4, 9)
    u = ScalarField(dom, np.zeros(dom.n_nodes))
    with pytest.raises(LatticeError):
        restrict_to_slice(u, 1)


# ---------------------------------------------------------------------------
# CSV interchange
# ---------------------------------------------------------------------------

def test_csv_round_trip_bitwise(tmp_path, disc):
    rng = CounterRng(8)
    u = ScalarField(disc, rng.normals((disc.n_nodes,)))
    path = tmp_path / "field.csv"
    export_csv(u, path)
    back = import_csv(path, disc)
    assert np.array_equal(back.values, u.values)


def test_csv_mask_round_trip(tmp_path, disc):
    vals = np.zeros(disc.n_nodes)
    mask = np.zeros(disc.n_nodes, dtype=bool)
    mask[disc.node_at(np.zeros(2))] = True
    u = ScalarField(disc, vals, mask)
    path = tmp_path / "masked.csv"
    export_csv(u, path)
    back = import_csv(path, disc)
    assert back.mask is not None and np.array_equal(back.mask, mask)


def test_boundary_csv(tmp_path, disc):
    import csv as _csv

    path = tmp_path / "bnd.csv"
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["c0", "c1", "value"])
        for i in disc.boundary_ids:
            x = disc.node_coords[i]
            w.writerow([f"{x[0]:.17g}", f"{x[1]:.17g}", f"{x[0] + x[1]:.17g}"])
    table = read_boundary_csv(path, disc)
    bx = disc.node_coords[disc.boundary_ids]
    assert np.allclose(table[disc.boundary_ids], bx.sum(axis=1))
