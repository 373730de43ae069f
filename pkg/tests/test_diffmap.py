import numpy as np
import pytest

from causalstates.diffmap import (DiffusionConfig, DiffusionEmbedding,
                                  diffusion_distance, diffusion_operator,
                                  select_components, spectral_decompose)
from causalstates.errors import NumericalError, ValidationError

from conftest import oracle_diffusion_operator, oracle_spectral


def decompose(gcs, **cfg):
    return spectral_decompose(diffusion_operator(gcs), DiffusionConfig(**cfg))


def random_gcs(rng, n):
    b = rng.random((n, n))
    g = b @ b.T
    return g / np.diag(g).max()


def test_operator_identity_gram():
    op = diffusion_operator(np.eye(3))
    assert np.allclose(op.matrix, np.eye(3), atol=1e-15)


def test_operator_uniform_gram():
    op = diffusion_operator(np.ones((3, 3)))
    assert np.allclose(op.matrix, np.full((3, 3), 1 / 3), atol=1e-15)


def test_operator_matches_two_stage_oracle(rng):
    g = random_gcs(rng, 5)
    op = diffusion_operator(g)
    p, r = oracle_diffusion_operator(g)
    assert np.abs(op.matrix - p).max() < 1e-14
    assert np.abs(op.matrix.sum(axis=1) - 1).max() < 1e-14
    assert (op.matrix >= 0).all()


def test_operator_clamps_negatives_and_reports():
    g = np.array([[1.0, 0.5, -1e-9], [0.5, 1.0, 0.4], [-1e-9, 0.4, 1.0]])
    op = diffusion_operator(g)
    assert op.clamped_max == pytest.approx(1e-9)
    assert (op.matrix >= 0).all()
    big = g.copy()
    big[0, 2] = big[2, 0] = -0.1
    with pytest.warns(UserWarning, match="clamped"):
        diffusion_operator(big)


def test_operator_rejects_isolated_state():
    g = np.zeros((3, 3))
    g[:2, :2] = 1.0
    with pytest.raises(NumericalError, match="state 2"):
        diffusion_operator(g)


def test_spectrum_identity_is_degenerate():
    with pytest.warns(UserWarning, match="degenerate"):
        emb = decompose(np.eye(4), n_components=1)
    assert emb.degenerate
    assert np.allclose(np.abs(emb.eigenvalues), 1.0)


def test_spectrum_rank_one():
    emb = decompose(np.ones((3, 3)))
    assert emb.eigenvalues[0] == pytest.approx(1.0, abs=1e-12)
    assert np.abs(emb.eigenvalues[1:]).max() < 1e-12
    assert np.allclose(emb.density, 1 / 3, atol=1e-12)
    assert np.abs(emb.psi0 - 1).max() < 1e-10


def two_cluster_gram(rng, n=6):
    centers = np.array([0.0, 0.0, 0.0, 5.0, 5.0, 5.0])
    x = centers + 0.1 * rng.standard_normal(n)
    return np.exp(-0.5 * (x[:, None] - x[None, :]) ** 2)


def test_two_clusters_sign_separate(rng):
    emb = decompose(two_cluster_gram(rng))
    assert emb.eigenvalues[1] > 0.9
    signs = np.sign(emb.components[:, 0])
    assert len(set(signs[:3])) == 1 and len(set(signs[3:])) == 1
    assert signs[0] != signs[3]


def test_matches_nonsymmetric_eigensolve_oracle(rng):
    g = random_gcs(rng, 7) + 0.3 * np.eye(7)
    op = diffusion_operator(g)
    emb = spectral_decompose(op, DiffusionConfig())
    vals, psi, density = oracle_spectral(*oracle_diffusion_operator(g))
    assert np.abs(emb.eigenvalues - vals).max() < 1e-8
    assert np.abs(emb.density - density).max() < 1e-12
    got = np.column_stack([emb.psi0, emb.components])
    gaps = np.abs(np.diff(np.abs(vals)))
    for j in range(7):
        separated = (j == 0 or gaps[j - 1] > 1e-6) and (j == 6 or gaps[j] > 1e-6)
        if separated:
            assert np.abs(got[:, j] - psi[:, j]).max() < 1e-8


def test_psi0_constant_and_reconstruction(rng):
    g = random_gcs(rng, 6) + 0.2 * np.eye(6)
    op = diffusion_operator(g)
    emb = spectral_decompose(op, DiffusionConfig())
    assert np.abs(emb.psi0 - 1.0).max() < 1e-8
    psi = np.column_stack([emb.psi0, emb.components])
    recon = sum(
        emb.eigenvalues[j] * np.outer(psi[:, j], emb.density * psi[:, j])
        for j in range(6)
    )
    assert np.abs(recon - op.matrix).max() < 1e-6


def test_determinism_bitwise(rng):
    g = random_gcs(rng, 8)
    e1 = decompose(g.copy())
    e2 = decompose(g.copy())
    assert np.array_equal(e1.components, e2.components)
    assert np.array_equal(e1.eigenvalues, e2.eigenvalues)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def synthetic_embedding(eigenvalues, components):
    eigenvalues = np.asarray(eigenvalues, float)
    components = np.asarray(components, float)
    n = components.shape[0]
    return DiffusionEmbedding(
        eigenvalues=eigenvalues,
        components=components,
        psi0=np.ones(n),
        density=np.full(n, 1 / n),
        n_components=components.shape[1],
        gap_index=None,
        degenerate=False,
        residual_means=np.zeros(components.shape[1] + 1),
    )


def test_distance_zero_on_self(rng):
    emb = decompose(random_gcs(rng, 5) + 0.2 * np.eye(5))
    assert diffusion_distance(emb, 2, 2) == 0.0


def test_distance_hand_value():
    emb = synthetic_embedding([1.0, 0.5], [[1.0], [-1.0]])
    assert diffusion_distance(emb, 0, 1, m_used=1) == pytest.approx(1.0, abs=1e-15)


def test_distance_monotone_in_m(rng):
    emb = decompose(random_gcs(rng, 7) + 0.2 * np.eye(7))
    for i, l in [(0, 3), (1, 5), (2, 6)]:
        d = [diffusion_distance(emb, i, l, m_used=m) for m in range(1, 7)]
        assert all(a <= b + 1e-15 for a, b in zip(d, d[1:]))


# ---------------------------------------------------------------------------
# component selection
# ---------------------------------------------------------------------------

def test_select_explicit_passthrough(rng):
    emb = decompose(random_gcs(rng, 6) + 0.2 * np.eye(6), n_components=3)
    assert emb.n_components == 3
    with pytest.raises(ValidationError):
        select_components(emb, DiffusionConfig(n_components=6))


def test_gap_diagnostic_example():
    lam = np.array([1.0, 0.9, 0.89, 0.1, 0.05])
    emb = synthetic_embedding(lam, np.zeros((5, 4)))
    from causalstates.diffmap import _largest_gap_index

    assert _largest_gap_index(lam) == 3


def test_threshold_zero_needs_full_set(rng):
    g = random_gcs(rng, 6) + 0.2 * np.eye(6)
    with pytest.warns(UserWarning, match="full component set"):
        emb = decompose(g, n_components="auto", residual_threshold=0.0)
    assert emb.n_components == 6 - 1


def test_residual_rule_smallest_m(rng):
    g = random_gcs(rng, 8) + 0.2 * np.eye(8)
    emb = decompose(g)
    thr = float(emb.residual_means[3])
    m = select_components(emb, DiffusionConfig(n_components="auto", residual_threshold=thr))
    assert m == int(np.nonzero(emb.residual_means <= thr)[0][0])
    assert emb.residual_means[m] <= thr
