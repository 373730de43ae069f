import warnings

import numpy as np
import pytest

from causalstates.diffmap import DiffusionConfig, diffusion_operator, spectral_decompose
from causalstates.embed import EmbeddingConfig, coefficients, state_gram
from causalstates.errors import ValidationError
from causalstates.gapfill import (GapDescriptor, GapfillConfig, ObservationMaps,
                                  TransitionOperator, blend_forward_backward,
                                  constrain_to_observations, extend_state_gram,
                                  find_gaps, fit_observation_maps, fit_transition,
                                  interpolate_gap, two_pass_refill)
from causalstates.kernels import KernelSpec, SourceKernelSpec, gram_pair
from causalstates.series import Block, LibraryConfig, MultiSeries, SourceMeta, build_library

from conftest import make_series


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


# ---------------------------------------------------------------------------
# transition fit
# ---------------------------------------------------------------------------

def test_constant_coordinates_give_identity():
    # several constant trajectories spanning the plane pin the operator to I
    tables = [np.tile(v, (6, 1)) for v in ([1.0, 0.0], [0.0, 1.0], [1.0, 1.0])]
    op = fit_transition(tables)
    assert np.abs(op.matrix - np.eye(2)).max() < 1e-6
    assert op.rmse < 1e-10


def test_rotation_recovered(rng):
    R = rotation(0.3)
    x = rng.standard_normal(2)
    states = [x := R @ x for _ in range(40)]
    op = fit_transition([np.array(states)])
    assert np.abs(op.matrix - R).max() < 1e-8


def test_pairs_straddling_gaps_excluded(rng):
    table = rng.standard_normal((10, 2))
    table[4] = np.nan
    op = fit_transition([table])
    # the fit saw 7 pairs; verify against an explicit normal-equation solve
    rows = [i for i in range(9) if i != 3 and i != 4]
    x, y = table[rows], table[[i + 1 for i in rows]]
    want = np.linalg.solve(x.T @ x + 1e-10 * np.eye(2), x.T @ y).T
    assert np.abs(op.matrix - want).max() < 1e-12


def test_insufficient_pairs():
    with pytest.raises(ValidationError, match="pairs"):
        fit_transition([np.full((1, 2), 1.0)])


def test_fit_is_first_order_optimal(rng):
    table = np.cumsum(rng.standard_normal((30, 2)), axis=0)
    op = fit_transition([table])
    x, y = table[:-1], table[1:]

    def objective(m):
        return np.sum((y - x @ m.T) ** 2) + 1e-10 * np.sum(m**2)

    base = objective(op.matrix)
    for _ in range(30):
        delta = 1e-6 * rng.standard_normal((2, 2))
        assert objective(op.matrix + delta) >= base - 1e-12


# ---------------------------------------------------------------------------
# observation maps
# ---------------------------------------------------------------------------

def test_observation_maps_recover_linear_source(rng):
    states = rng.standard_normal((40, 3))
    w_true = np.array([[2.0, -1.0, 0.5]])
    vals = states @ w_true.T + 4.0
    series = make_series([vals[:, 0]])
    maps = fit_observation_maps([states], series)
    assert np.abs(maps.weights[0] - w_true).max() < 1e-10
    assert maps.intercepts[0][0] == pytest.approx(4.0, abs=1e-10)
    assert maps.residuals[0] < 1e-10


def test_observation_maps_constant_source(rng):
    states = rng.standard_normal((30, 2))
    series = make_series([np.full(30, 7.5)])
    maps = fit_observation_maps([states], series)
    assert np.abs(maps.weights[0]).max() < 1e-10
    assert maps.intercepts[0][0] == pytest.approx(7.5)


def test_observation_maps_need_valid_samples(rng):
    states = rng.standard_normal((10, 2))
    series = make_series([np.full(10, np.nan)], valid=[np.zeros(10, bool)])
    with pytest.raises(ValidationError, match="valid samples"):
        fit_observation_maps([states], series)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def test_blend_endpoints_bit_for_bit(rng):
    fwd = rng.standard_normal((5, 3))
    bwd = rng.standard_normal((5, 3))
    path = blend_forward_backward(fwd, bwd)
    assert np.array_equal(path[0], fwd[0])
    assert np.array_equal(path[-1], bwd[-1])


def test_identity_gap_midpoint_and_thirds():
    tr = TransitionOperator(matrix=np.eye(2))
    a, b = np.array([0.0, 0.0]), np.array([3.0, 6.0])
    gap1 = GapDescriptor(block=0, start=1, length=1, left=0, right=2)
    assert np.allclose(interpolate_gap(gap1, tr, a, b), [[1.5, 3.0]])
    gap2 = GapDescriptor(block=0, start=1, length=2, left=0, right=3)
    assert np.allclose(interpolate_gap(gap2, tr, a, b), [[1.0, 2.0], [2.0, 4.0]])


def test_rotation_gap_lies_on_arc():
    R = rotation(0.25)
    tr = TransitionOperator(matrix=R)
    start = np.array([1.0, 0.0])
    G = 4
    end = np.linalg.matrix_power(R, G + 1) @ start
    gap = GapDescriptor(block=0, start=1, length=G, left=0, right=G + 1)
    pred = interpolate_gap(gap, tr, start, end)
    for g in range(1, G + 1):
        want = np.linalg.matrix_power(R, g) @ start
        assert np.abs(pred[g - 1] - want).max() < 1e-6


def test_singular_transition_falls_back_to_forward():
    tr = TransitionOperator(matrix=np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert tr.rank_deficient
    gap = GapDescriptor(block=0, start=1, length=1, left=0, right=2)
    with pytest.warns(UserWarning, match="forward"):
        pred = interpolate_gap(gap, tr, np.array([2.0, 1.0]), np.array([5.0, 5.0]))
    assert np.allclose(pred, [[2.0, 0.0]])  # pure forward step


def test_edge_gaps_use_single_direction():
    tr = TransitionOperator(matrix=2.0 * np.eye(1))
    left_only = GapDescriptor(block=0, start=5, length=2, left=4, right=None)
    assert np.allclose(interpolate_gap(left_only, tr, np.array([1.0]), None), [[2.0], [4.0]])
    right_only = GapDescriptor(block=0, start=0, length=2, left=None, right=2)
    assert np.allclose(interpolate_gap(right_only, tr, None, np.array([8.0])), [[2.0], [4.0]])


# ---------------------------------------------------------------------------
# norm-constrained refinement
# ---------------------------------------------------------------------------

def one_d_maps():
    return ObservationMaps(weights=[np.array([[1.0]])], intercepts=[np.array([0.0])],
                           residuals=[0.0])


def test_no_observations_returns_prediction():
    maps = one_d_maps()
    s = np.array([1.0, 2.0])
    maps2 = ObservationMaps(weights=[np.zeros((0, 2))], intercepts=[np.zeros(0)], residuals=[0.0])
    out = constrain_to_observations(s, [None], maps2, np.ones(1), 0.3)
    assert np.array_equal(out, s)


def test_interior_minimizer_taken():
    out = constrain_to_observations(np.array([1.0]), [np.array([1.05])], one_d_maps(),
                                    np.ones(1), 0.5)
    assert out[0] == pytest.approx(1.05, abs=1e-12)


def test_boundary_solution_scalar():
    out = constrain_to_observations(np.array([1.0]), [np.array([10.0])], one_d_maps(),
                                    np.ones(1), 0.5)
    assert out[0] == pytest.approx(1.5, abs=1e-10)


def check_kkt(s_hat, observed, maps, weights, eps):
    out = constrain_to_observations(s_hat, observed, maps, weights, eps)
    live = [d for d, v in enumerate(observed) if v is not None]
    o = np.vstack([maps.weights[d] for d in live])
    b = np.concatenate([maps.intercepts[d] for d in live])
    m = np.concatenate([np.atleast_1d(observed[d]) for d in live])
    w = np.concatenate([np.full(maps.weights[d].shape[0], weights[d]) for d in live])
    grad = 2 * (o * w[:, None]).T @ (o @ out + b - m)
    radius = eps * np.linalg.norm(s_hat)
    dist = np.linalg.norm(out - s_hat)
    if dist < radius * (1 - 1e-8):
        assert np.abs(grad).max() < 1e-8 * max(1.0, np.abs(m).max())
    else:
        assert abs(dist - radius) <= 1e-8 * max(radius, 1.0)
        step = out - s_hat
        cos = grad @ step / (np.linalg.norm(grad) * np.linalg.norm(step) + 1e-300)
        assert cos == pytest.approx(-1.0, abs=1e-6)
    return out


def test_kkt_random_instances(rng):
    for _ in range(100):
        m_dim = rng.integers(1, 5)
        n_src = rng.integers(1, 4)
        weights = rng.uniform(0.5, 2.0, n_src)
        maps = ObservationMaps(
            weights=[rng.standard_normal((rng.integers(1, 3), m_dim)) for _ in range(n_src)],
            intercepts=[rng.standard_normal(rng.integers(1, 3)) for _ in range(n_src)],
            residuals=[0.0] * n_src,
        )
        # intercept dims must match weight dims
        maps.intercepts = [rng.standard_normal(w.shape[0]) for w in maps.weights]
        observed = [rng.standard_normal(w.shape[0]) if rng.random() > 0.3 else None
                    for w in maps.weights]
        if all(v is None for v in observed):
            observed[0] = rng.standard_normal(maps.weights[0].shape[0])
        s_hat = rng.standard_normal(m_dim)
        check_kkt(s_hat, observed, maps, weights, float(rng.uniform(0.05, 0.5)))


# ---------------------------------------------------------------------------
# full refill
# ---------------------------------------------------------------------------

def sinusoid_series(n=400, period=40, mask1=None, mask2=None, rng=None):
    t = np.arange(n)
    s1 = np.sin(2 * np.pi * t / period)
    s2 = np.cos(2 * np.pi * t / period)
    v1 = np.ones(n, bool) if mask1 is None else mask1
    v2 = np.ones(n, bool) if mask2 is None else mask2
    a1, a2 = s1.copy(), s2.copy()
    a1[~v1] = np.nan
    a2[~v2] = np.nan
    block = Block([a1[:, None], a2[:, None]], [v1, v2])
    return MultiSeries([SourceMeta("s1"), SourceMeta("s2")], [block]), (s1, s2)


def run_pipeline(series, past=4, future=4):
    lib = build_library(series, LibraryConfig(past, future))
    spec = KernelSpec(sources=[SourceKernelSpec()] * series.n_sources)
    gp = gram_pair(lib, spec)
    A = coefficients(gp, EmbeddingConfig(1e-6))
    gcs = state_gram(A, gp)
    dconf = DiffusionConfig()
    emb = spectral_decompose(diffusion_operator(gcs), dconf)
    return lib, gcs, emb, dconf


def test_refill_no_gaps_is_identity():
    series, _ = sinusoid_series(n=200)
    lib, gcs, emb, dconf = run_pipeline(series)
    res = two_pass_refill(series, lib, emb, gcs, dconf, GapfillConfig())
    for d in range(2):
        assert np.array_equal(res.series.blocks[0].values[d], series.blocks[0].values[d])
        assert not res.imputed[0][d].any()
    # no truly missing data: the recompute is skipped, the embedding is reused
    assert res.embedding is emb
    assert res.n_pass2 == 0
    # edge stubs still get states and extend the proximity matrix
    assert res.updated_gram.shape[0] == 200
    assert np.isfinite(res.states[0]).all()


def test_refill_single_gap_bookkeeping():
    mask1 = np.ones(300, bool)
    mask1[150:153] = False
    series, (s1, s2) = sinusoid_series(n=300, mask1=mask1)
    lib, gcs, emb, dconf = run_pipeline(series)
    res = two_pass_refill(series, lib, emb, gcs, dconf, GapfillConfig())
    assert list(np.nonzero(res.imputed[0][0])[0]) == [150, 151, 152]
    assert not res.imputed[0][1].any()
    # untouched source bitwise identical
    assert np.array_equal(res.series.blocks[0].values[1], series.blocks[0].values[1])
    filled = res.series.blocks[0].values[0][150:153, 0]
    assert np.isfinite(filled).all()
    assert np.abs(filled - s1[150:153]).max() < 0.25
    assert res.updated_gram.shape[0] == 300
    assert res.n_pass2 == 3


def test_refill_idempotent():
    mask1 = np.ones(240, bool)
    mask1[100:102] = False
    series, _ = sinusoid_series(n=240, mask1=mask1)
    lib, gcs, emb, dconf = run_pipeline(series)
    res1 = two_pass_refill(series, lib, emb, gcs, dconf, GapfillConfig())
    # run again on the already-filled series
    lib2, gcs2, emb2, _ = run_pipeline(res1.series)
    res2 = two_pass_refill(res1.series, lib2, emb2, gcs2, dconf, GapfillConfig())
    for d in range(2):
        assert np.array_equal(res2.series.blocks[0].values[d], res1.series.blocks[0].values[d])
        assert not res2.imputed[0][d].any()


def test_imputed_never_overwrites_valid(rng):
    mask1 = rng.random(300) > 0.04
    mask2 = rng.random(300) > 0.04
    series, (s1, s2) = sinusoid_series(n=300, mask1=mask1, mask2=mask2)
    lib, gcs, emb, dconf = run_pipeline(series)
    res = two_pass_refill(series, lib, emb, gcs, dconf, GapfillConfig())
    assert np.array_equal(res.series.blocks[0].values[0][mask1], s1[mask1][:, None])
    assert np.array_equal(res.series.blocks[0].values[1][mask2], s2[mask2][:, None])
    assert np.array_equal(res.imputed[0][0], ~mask1)
    assert np.array_equal(res.imputed[0][1], ~mask2)


def test_extend_state_gram_is_psd_and_rank_preserving(rng):
    b = rng.standard_normal((6, 4))
    g = b @ b.T
    lift = rng.standard_normal((6, 3))
    ext = extend_state_gram(g, lift)
    assert ext.shape == (9, 9)
    assert np.abs(ext - ext.T).max() == 0.0
    assert np.linalg.eigvalsh(ext).min() > -1e-10
    assert np.linalg.matrix_rank(ext, tol=1e-9) == np.linalg.matrix_rank(g, tol=1e-9)


def test_find_gaps_descriptors():
    valid = np.ones(20, bool)
    valid[7] = False
    series = make_series([np.where(valid, 1.0, np.nan)], valid=[valid])
    known = [np.zeros(20, bool)]
    known[0][3:6] = True
    known[0][10:17] = True
    gaps = find_gaps(known, series)
    assert [(g.start, g.length, g.left, g.right) for g in gaps] == [
        (0, 3, None, 3), (6, 4, 5, 10), (17, 3, 16, None)]
    assert gaps[1].affected_sources == (0,)
    assert gaps[0].affected_sources == ()
