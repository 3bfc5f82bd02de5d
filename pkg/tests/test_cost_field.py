import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reactionmap.cost_field import (
    ConstantCost,
    Grid,
    IsotropicCost,
    MixedCost,
    PlausibilityCost,
    Polyline,
    TensorCost,
    edge_cost,
    eval_cost,
    read_field,
    write_field,
)
from reactionmap.errors import DegeneratePath, FormatError, NonUnitTangent, NotPSD, OutOfDomain

UNIT = Grid((2, 2), (1.0, 1.0), (0.0, 0.0))
E1 = np.array([1.0, 0.0])


def tensor_field(eps=0.21):
    return TensorCost(UNIT, np.broadcast_to(np.eye(2), (2, 2, 2, 2)).copy(), eps)


def random_fields(seed):
    """One field of each grid variant with random node data on a 4x4 grid."""
    rng = np.random.default_rng(seed)
    g = Grid((4, 4), (1 / 3, 1 / 3), (0.0, 0.0))
    B = rng.normal(size=(4, 4, 2, 2))
    psd = B @ np.swapaxes(B, -1, -2)
    cb = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], float)
    return [
        IsotropicCost(g, rng.uniform(0, 1, (4, 4)), 0.5, 3.0),
        TensorCost(g, psd, 0.1),
        MixedCost(g, rng.uniform(0.5, 2, (4, 4)), rng.uniform(0.1, 1, (4, 4)), psd + 0.2 * np.eye(2)),
        PlausibilityCost(g, cb, rng.uniform(0, 1, (4, 4, 4)), 0.7, 2.5),
    ]


def test_isotropic_full_whitematter_costs_cmin():
    cf = IsotropicCost(UNIT, np.ones((2, 2)), 0.3, 4.0)
    assert eval_cost(cf, [0.4, 0.6], E1) == pytest.approx(0.3, abs=1e-15)


def test_tensor_identity_any_direction():
    cf = tensor_field()
    for ang in np.linspace(0, np.pi, 7):
        tau = np.array([np.cos(ang), np.sin(ang)])
        assert eval_cost(cf, [0.5, 0.5], tau) == pytest.approx(1 / 1.1, abs=1e-12)


def test_plausibility_zero_costs_cmax():
    cf = PlausibilityCost(UNIT, [[1, 0], [0, 1]], np.zeros((2, 2, 2)), 0.5, 2.5)
    assert eval_cost(cf, [0.2, 0.2], [0.6, 0.8]) == 2.5


def test_plausibility_picks_nearest_codebook_direction():
    p = np.zeros((2, 2, 2))
    p[..., 0] = 1.0  # only the x direction is plausible
    cf = PlausibilityCost(UNIT, [[1, 0], [0, 1]], p, 0.5, 2.5)
    assert eval_cost(cf, [0.5, 0.5], [0.8, 0.6]) == 0.5
    assert eval_cost(cf, [0.5, 0.5], [0.6, 0.8]) == 2.5


def test_mixed_formula():
    A = np.broadcast_to(np.diag([4.0, 1.0]), (2, 2, 2, 2)).copy()
    cf = MixedCost(UNIT, np.full((2, 2), 2.0), np.full((2, 2), 0.5), A)
    # a * sqrt(tau^T A tau) + b with tau = e1 gives 2 * 2 + 0.5
    assert eval_cost(cf, [0.5, 0.5], E1) == pytest.approx(4.5)


def test_tangent_and_domain_checks():
    cf = ConstantCost(1.0, domain=((0, 0), (1, 1)))
    with pytest.raises(NonUnitTangent):
        eval_cost(cf, [0.5, 0.5], [1.0, 1e-4])
    with pytest.raises(OutOfDomain):
        eval_cost(cf, [1.5, 0.5], E1)


def test_tensor_regularisation_rejects_indefinite():
    D = np.broadcast_to(np.diag([1.0, -0.5]), (2, 2, 2, 2)).copy()
    with pytest.raises(NotPSD):
        TensorCost(UNIT, D, 0.1)


def test_degenerate_paths():
    with pytest.raises(DegeneratePath):
        Polyline([[0, 0]])
    with pytest.raises(DegeneratePath):
        Polyline([[0, 0], [0, 0]])


def test_polyline_injectivity_diagnostic():
    assert Polyline([[0, 0], [1, 0], [1, 1]]).is_injective()
    assert not Polyline([[0, 0], [1, 1], [1, 0], [0, 1]]).is_injective()


def test_constant_cost_edge():
    assert edge_cost(ConstantCost(2.0), Polyline([[0, 0], [3, 0]])) == pytest.approx(6.0, abs=1e-12)


def test_tensor_edge_of_length_1_1():
    assert edge_cost(tensor_field(), Polyline([[0, 0], [1.1, 0]])) == pytest.approx(1.0, abs=1e-9)


def test_affine_isotropic_edge_matches_closed_form():
    # w(x) = x along the segment [0, 1] x {0}; c = c_min + (c_max - c_min)(1 - x) integrates to the mean
    cf = IsotropicCost(UNIT, np.array([[0.0, 0.0], [1.0, 1.0]]), 1.0, 3.0)
    exact = 1.0 + (3.0 - 1.0) * 0.5
    assert abs(edge_cost(cf, Polyline([[0, 0], [1, 0]]), 64) - exact) <= 1e-6


def test_midpoint_rule_is_second_order_on_quadratic_profile():
    # w = x*y is reproduced exactly by bilinear interpolation; on the diagonal it is s^2
    cf = IsotropicCost(UNIT, np.array([[0.0, 0.0], [0.0, 1.0]]), 1.0, 3.0)
    path = Polyline([[0, 0], [1, 1]])
    exact = np.sqrt(2) * (3.0 - 2.0 / 3.0)
    errs = [abs(edge_cost(cf, path, n) - exact) for n in (8, 16, 32, 64)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders


def test_nearest_node_extension_outside_grid():
    cf = IsotropicCost(UNIT, np.array([[0.0, 0.0], [1.0, 1.0]]), 1.0, 3.0)
    assert cf([[5.0, 0.5]], [E1])[0] == pytest.approx(1.0)
    assert cf([[-5.0, 0.5]], [E1])[0] == pytest.approx(3.0)


path_points = st.lists(st.tuples(st.floats(-0.2, 1.2), st.floats(-0.2, 1.2)), min_size=2, max_size=5).filter(
    lambda p: all(np.hypot(a[0] - b[0], a[1] - b[1]) > 1e-3 for a, b in zip(p, p[1:]))
)


@given(st.integers(0, 2**16), path_points, st.integers(1, 20))
@settings(max_examples=80, deadline=None)
def test_sandwich_bound(seed, pts, n_sub):
    path = Polyline(pts)
    for cf in random_fields(seed):
        lo, hi = cf.bounds
        beta = edge_cost(cf, path, n_sub)
        assert lo * path.length - 1e-12 <= beta <= hi * path.length + 1e-12, cf.variant


@given(st.integers(0, 2**16), path_points)
@settings(max_examples=60, deadline=None)
def test_reversal_symmetry_for_symmetric_variants(seed, pts):
    path = Polyline(pts)
    for cf in random_fields(seed)[:3]:
        fwd, bwd = edge_cost(cf, path), edge_cost(cf, path.reversed())
        assert fwd == pytest.approx(bwd, rel=1e-12, abs=1e-14)


def test_plausibility_need_not_be_reversal_symmetric():
    p = np.zeros((2, 2, 2))
    p[..., 0] = 1.0
    cf = PlausibilityCost(UNIT, [[1, 0], [-1, 0]], p, 0.5, 2.5)
    path = Polyline([[0, 0.5], [1, 0.5]])
    assert edge_cost(cf, path) == pytest.approx(0.5)
    assert edge_cost(cf, path.reversed()) == pytest.approx(2.5)


@pytest.mark.parametrize("k", range(4))
def test_binary_field_round_trip(tmp_path, k):
    cf = random_fields(7)[k]
    write_field(tmp_path / "f.rmcf", cf)
    back = read_field(tmp_path / "f.rmcf")
    assert back.variant == cf.variant
    x = np.random.default_rng(1).uniform(0, 1, (50, 2))
    ang = np.random.default_rng(2).uniform(0, 2 * np.pi, 50)
    tau = np.column_stack([np.cos(ang), np.sin(ang)])
    np.testing.assert_allclose(cf(x, tau), back(x, tau), rtol=1e-14)


def test_constant_field_round_trip(tmp_path):
    write_field(tmp_path / "c.rmcf", ConstantCost(1.5, domain=((0, 0), (2, 2))))
    back = read_field(tmp_path / "c.rmcf")
    assert back.bounds == (1.5, 1.5)
    assert back.domain == ((0, 0), (2, 2))


def test_bad_magic(tmp_path):
    (tmp_path / "x.rmcf").write_bytes(b"NOTAFIELD")
    with pytest.raises(FormatError):
        read_field(tmp_path / "x.rmcf")
