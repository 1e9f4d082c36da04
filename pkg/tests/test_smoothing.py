import numpy as np
import pytest

from eigsmooth.smoothing import (
    SmoothingParams,
    approximation_bounds,
    fk_value,
    fk_values_batch,
    gradient_oracle,
    gradient_variance_probe,
    lipschitz_bound,
    sample_fk,
    smoothing_constant,
)
from eigsmooth.spectral import full_eig, symmetrize


def random_symmetric(n, rng, scale=1.0):
    return symmetrize(rng.standard_normal((n, n))) * scale


# ------------------------------------------------------------- parameters


def test_params_validation():
    with pytest.raises(ValueError):
        SmoothingParams(eps=-0.1, n=4)
    with pytest.raises(ValueError):
        SmoothingParams(eps=0.1, n=4, k=0)
    p = SmoothingParams(eps=0.5, n=10)
    assert p.scale == 0.05 and p.k == 3


def test_bounds_and_constants():
    assert approximation_bounds(SmoothingParams(eps=0.0, n=4)) == (0.0, 0.0)
    lo, hi = approximation_bounds(SmoothingParams(eps=0.05, n=1000, k=3))
    assert lo == pytest.approx(5e-5) and hi == pytest.approx(0.15)
    assert smoothing_constant(3) == 3.0
    assert lipschitz_bound(SmoothingParams(eps=0.05, n=1000, k=3)) == pytest.approx(60000.0)
    assert lipschitz_bound(SmoothingParams(eps=1.0, n=100, k=4)) == pytest.approx(200.0)
    with pytest.raises(ValueError):
        lipschitz_bound(SmoothingParams(eps=0.05, n=10, k=2))


def test_inverse_max_chi2_monte_carlo():
    # E[1 / max(z1^2, z2^2, z3^2)] is about 1.5, strictly below the
    # conservative constant k/(k-2) = 3 at k = 3.
    rng = np.random.default_rng(1234)
    z = rng.standard_normal((10**6, 3))
    est = float(np.mean(1.0 / np.max(z**2, axis=1)))
    assert abs(est - 1.5) <= 0.05
    assert est < smoothing_constant(3)


# ------------------------------------------------------------- sampling


def test_sample_zero_matrix():
    n = 8
    params = SmoothingParams(eps=0.4, n=n)
    rng = np.random.default_rng(0)
    probe_rng = np.random.default_rng(0)
    Z = probe_rng.standard_normal((params.k, n))
    s = sample_fk(np.zeros((n, n)), params, rng, path="secular")
    norms = (Z**2).sum(axis=1)
    assert s.value == pytest.approx(params.scale * norms.max(), rel=1e-12)
    assert s.i0 == int(np.argmax(norms))
    zwin = Z[s.i0] / np.linalg.norm(Z[s.i0])
    assert min(np.linalg.norm(s.vector - zwin), np.linalg.norm(s.vector + zwin)) <= 1e-10


def test_sample_value_exceeds_top_eigenvalue():
    rng = np.random.default_rng(1)
    X = random_symmetric(12, rng)
    dec = full_eig(X)
    params = SmoothingParams(eps=0.3, n=12)
    for _ in range(50):
        s = sample_fk(dec, params, rng, path="secular")
        assert s.value > dec.values[0]
        assert s.gap_witness >= s.witness_bound - 1e-15
        assert abs(np.linalg.norm(s.vector) - 1.0) <= 1e-12
        assert s.cost_eigvecs == params.k


def test_sample_paths_agree():
    rng = np.random.default_rng(2)
    X = random_symmetric(15, rng)
    dec = full_eig(X)
    params = SmoothingParams(eps=0.5, n=15)
    s1 = sample_fk(dec, params, np.random.default_rng(77), path="secular")
    s2 = sample_fk(X, params, np.random.default_rng(77), path="lanczos", lanczos_tol=1e-11)
    assert s1.i0 == s2.i0
    assert abs(s1.value - s2.value) <= 1e-8 * max(1.0, abs(s1.value))
    assert min(np.max(np.abs(s1.vector - s2.vector)), np.max(np.abs(s1.vector + s2.vector))) <= 1e-6


def test_sample_eps_zero_is_exact():
    rng = np.random.default_rng(3)
    X = random_symmetric(10, rng)
    dec = full_eig(X)
    s = sample_fk(dec, SmoothingParams(eps=0.0, n=10), rng)
    assert s.value == dec.values[0]
    assert np.array_equal(s.vector, dec.vectors[:, 0])


def test_mean_inside_envelope():
    rng = np.random.default_rng(4)
    X = random_symmetric(50, rng)
    dec = full_eig(X)
    params = SmoothingParams(eps=0.05, n=50)
    vals = fk_values_batch(dec, params, 3000, rng)
    lo, hi = approximation_bounds(params)
    mean = vals.mean()
    serr = vals.std(ddof=1) / np.sqrt(vals.size)
    assert mean - 3 * serr >= dec.values[0] + lo
    assert mean + 3 * serr <= dec.values[0] + hi


# ------------------------------------------------------------- gradients


def test_gradient_trace_one():
    rng = np.random.default_rng(5)
    X = random_symmetric(9, rng)
    est = gradient_oracle(full_eig(X), SmoothingParams(eps=0.2, n=9), q=7, rng=rng)
    assert abs(est.trace - 1.0) <= 1e-12
    # PSD: average of rank-one projectors
    assert np.min(np.linalg.eigvalsh(est.matrix)) >= -1e-14


def test_gradient_concentrates_on_gap():
    rng = np.random.default_rng(6)
    n = 12
    X = np.diag(np.concatenate(([1.0], np.zeros(n - 1))))
    est = gradient_oracle(full_eig(X), SmoothingParams(eps=1e-3, n=n), q=200, rng=rng)
    off = est.matrix - np.diag(np.diag(est.matrix))
    assert est.matrix[0, 0] > 0.95
    assert np.max(np.abs(off)) < 0.05


def test_gradient_isotropic_at_zero():
    rng = np.random.default_rng(7)
    n = 20
    est = gradient_oracle(full_eig(np.zeros((n, n))), SmoothingParams(eps=0.5, n=n), q=10**4, rng=rng)
    diag = np.diag(est.matrix)
    serr = 3.0 / np.sqrt(est.q)  # crude bound on 3 standard errors of each entry
    assert np.max(np.abs(diag - 1.0 / n)) <= serr


def test_gradient_counter_seeding_reproducible():
    rng = np.random.default_rng(8)
    X = random_symmetric(6, rng)
    dec = full_eig(X)
    params = SmoothingParams(eps=0.3, n=6)
    a = gradient_oracle(dec, params, q=4, rng=12345, seed_key=(9,))
    b = gradient_oracle(dec, params, q=4, rng=12345, seed_key=(9,))
    assert np.array_equal(a.matrix, b.matrix) and a.value == b.value
    c = gradient_oracle(dec, params, q=4, rng=12345, seed_key=(10,))
    assert not np.array_equal(a.matrix, c.matrix)


def test_gradient_cost_accounting():
    rng = np.random.default_rng(9)
    X = random_symmetric(5, rng)
    params = SmoothingParams(eps=0.2, n=5)
    est = gradient_oracle(full_eig(X), params, q=6, rng=rng)
    assert est.cost_eigvecs == 6 * params.k
    est2 = gradient_oracle(X, params, q=2, rng=rng, path="secular")
    assert est2.cost_eigvecs == 2 * params.k + 5  # internal decomposition charged n


# ------------------------------------------------ finite-difference audit


def test_fixed_noise_directional_derivative():
    rng = np.random.default_rng(10)
    n = 10
    X = random_symmetric(n, rng)
    params = SmoothingParams(eps=0.4, n=n)
    Z = rng.standard_normal((params.k, n))
    h = 1e-6
    checked = 0
    for _ in range(10):
        Y = random_symmetric(n, rng)
        Y /= np.linalg.norm(Y, "fro")
        _, i0, phi, _ = fk_value(X, Z, params)
        up, iu, _, _ = fk_value(X + h * Y, Z, params)
        dn, id_, _, _ = fk_value(X - h * Y, Z, params)
        if not (i0 == iu == id_):
            continue  # winning index unstable under +-h: skip this direction
        fd = (up - dn) / (2.0 * h)
        analytic = float(phi @ Y @ phi)
        assert abs(fd - analytic) <= 1e-5 * max(1.0, abs(analytic))
        checked += 1
    assert checked >= 8


# ------------------------------------------------------- equivariance


def test_equivariance_under_signed_permutation():
    # Exact equivariance: rotate the matrix and feed the same noise rotated.
    rng = np.random.default_rng(11)
    n = 7
    X = random_symmetric(n, rng)
    perm = np.random.default_rng(3).permutation(n)
    signs = np.where(np.random.default_rng(4).standard_normal(n) > 0, 1.0, -1.0)
    O = np.zeros((n, n))
    O[np.arange(n), perm] = signs
    params = SmoothingParams(eps=0.3, n=n)
    Z = rng.standard_normal((params.k, n))
    dec = full_eig(X)
    dec_rot = full_eig(O @ X @ O.T)
    v1, i1, phi1, _ = fk_value(dec, Z, params)
    v2, i2, phi2, _ = fk_value(dec_rot, Z @ O.T, params)  # rows rotated: O z_i
    assert i1 == i2
    assert abs(v1 - v2) <= 1e-12 * max(1.0, abs(v1))
    rotated = O @ phi1
    assert min(np.max(np.abs(phi2 - rotated)), np.max(np.abs(phi2 + rotated))) <= 1e-12


def test_equivariance_under_rotation():
    rng = np.random.default_rng(12)
    n = 8
    X = random_symmetric(n, rng)
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    O = Q * np.sign(np.diag(R))
    params = SmoothingParams(eps=0.3, n=n)
    Z = rng.standard_normal((params.k, n))
    v1, i1, phi1, _ = fk_value(full_eig(X), Z, params)
    v2, i2, phi2, _ = fk_value(full_eig(O @ X @ O.T), Z @ O.T, params)
    assert i1 == i2
    assert abs(v1 - v2) <= 1e-10 * max(1.0, abs(v1))
    rotated = O @ phi1
    assert min(np.max(np.abs(phi2 - rotated)), np.max(np.abs(phi2 + rotated))) <= 1e-8


def test_diagonal_concentration():
    # For diagonal X the expected gradient is diagonal: off-diagonal entries
    # of the q-average are mean-zero.
    rng = np.random.default_rng(13)
    n = 6
    X = np.diag(np.linspace(1.0, 0.0, n))
    est = gradient_oracle(full_eig(X), SmoothingParams(eps=0.5, n=n), q=10**4, rng=rng)
    off = est.matrix[~np.eye(n, dtype=bool)]
    assert np.max(np.abs(off)) <= 3.0 / np.sqrt(est.q)


# ------------------------------------------------------------- variance


def test_variance_probe_isotropic():
    rng = np.random.default_rng(14)
    n = 20
    probe = gradient_variance_probe(np.zeros((n, n)), SmoothingParams(eps=0.5, n=n), 4000, rng)
    assert probe.bound_ok
    assert abs(probe.empirical_variance - (1.0 - 1.0 / n)) <= 0.02
    assert abs(probe.mean_trace - 1.0) <= 1e-12


def test_variance_probe_concentrated():
    rng = np.random.default_rng(15)
    n = 10
    X = np.diag(np.concatenate(([1.0], np.zeros(n - 1))))
    probe = gradient_variance_probe(X, SmoothingParams(eps=1e-3, n=n), 1000, rng)
    assert probe.bound_ok
    assert probe.empirical_variance < 0.1


def test_per_sample_deviation_bounded():
    rng = np.random.default_rng(16)
    X = random_symmetric(8, rng)
    probe = gradient_variance_probe(X, SmoothingParams(eps=0.2, n=8), 500, rng)
    assert probe.max_sq_deviation <= 4.0


def test_gap_witness_bound_every_draw():
    # The realized increase over lambda_max dominates the analytic witness.
    rng = np.random.default_rng(17)
    X = random_symmetric(10, rng)
    dec = full_eig(X)
    params = SmoothingParams(eps=0.7, n=10)
    for _ in range(200):
        s = sample_fk(dec, params, rng, path="secular")
        assert s.gap_witness >= s.witness_bound - 1e-14
        assert s.gap_witness >= params.scale * 0.0  # strictly positive increase
        assert s.value > dec.values[0]
