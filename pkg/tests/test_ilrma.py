import numpy as np
import pytest

from fastbss.evaluation import sdr_improvement
from fastbss.exceptions import SingularDemixing
from fastbss.ilrma import (
    EPS,
    IlrmaModel,
    demix,
    ilrma_cost,
    init_ilrma_model,
    normalize_ilrma,
    project_back,
    run_ilrma,
    source_variance,
    update_demixing_ip,
    update_source_model_is_nmf,
)
from fastbss.mixsim import SceneConfig, make_scene, rank1_scene
from fastbss.signal import StftConfig, istft, stft

from conftest import crandn

SLACK = 1e-9


def ones_model(n_src, n_freq, n_frames):
    return IlrmaModel(np.ones((n_src, n_freq, 1)), np.ones((n_src, 1, n_frames)))


def exact_model(P):
    """Model with r equal to ``P (I, J, N)``: K = J bases, identity activations."""
    n_freq, n_frames, n_src = P.shape
    T = np.maximum(P.transpose(2, 0, 1), EPS)
    V = np.tile(np.eye(n_frames), (n_src, 1, 1))
    return IlrmaModel(T, V)


def direct_cost(X, W, T, V):
    n_freq, n_frames, n_src = X.shape
    total = 0.0
    for i in range(n_freq):
        total -= 2 * n_frames * np.log(abs(np.linalg.det(W[i])))
        for j in range(n_frames):
            y = W[i] @ X[i, j]
            for n in range(n_src):
                r = max(sum(T[n, i, k] * V[n, k, j] for k in range(T.shape[2])), EPS)
                total += abs(y[n]) ** 2 / r + np.log(r)
    return total


def test_cost_trivial_cases():
    W = np.tile(np.eye(2, dtype=complex), (3, 1, 1))
    assert ilrma_cost(np.zeros((3, 4, 2)), W, ones_model(2, 3, 4)) == 0
    X = np.zeros((3, 4, 2), dtype=complex)
    X[0, 0] = [1, 0]
    assert ilrma_cost(X, W, ones_model(2, 3, 4)) == 1


def test_cost_matches_direct_sum(rng):
    X = crandn(rng, 4, 5, 2)
    W = crandn(rng, 4, 2, 2)
    model = init_ilrma_model(4, 5, 2, 3, rng)
    ref = direct_cost(X, W, model.T, model.V)
    assert abs(ilrma_cost(X, W, model) - ref) < 1e-10 * abs(ref)


def test_cost_singular_raises(rng):
    W = np.zeros((2, 2, 2), dtype=complex)
    with pytest.raises(SingularDemixing):
        ilrma_cost(crandn(rng, 2, 3, 2), W, ones_model(2, 2, 3))


def test_cost_unitary_equivariance(rng):
    X = crandn(rng, 6, 10, 3)
    W = crandn(rng, 6, 3, 3)
    model = init_ilrma_model(6, 10, 3, 2, rng)
    P, _ = np.linalg.qr(crandn(rng, 6, 3, 3))
    X2 = np.einsum("iab,ijb->ija", P, X)
    W2 = W @ P.conj().swapaxes(-1, -2)
    assert abs(ilrma_cost(X2, W2, model) - ilrma_cost(X, W, model)) < 1e-10 * abs(ilrma_cost(X, W, model))


def test_nmf_fixed_point():
    rng = np.random.default_rng(5)
    T = rng.uniform(0.5, 1, (1, 8, 1))
    V = rng.uniform(0.5, 1, (1, 1, 6))
    model = IlrmaModel(T, V)
    P = source_variance(model)
    out = update_source_model_is_nmf(model, P)
    np.testing.assert_allclose(out.T, T, rtol=1e-10)
    np.testing.assert_allclose(out.V, V, rtol=1e-10)


def test_nmf_zero_power_hits_floor(rng):
    model = init_ilrma_model(5, 6, 2, 3, rng)
    P = np.zeros((5, 6, 2))
    for _ in range(3):
        model = update_source_model_is_nmf(model, P)
    assert np.all(model.T == EPS)


def is_divergence(P, R):
    ratio = P / R
    return np.sum(ratio - np.log(ratio) - 1)


def test_nmf_divergence_monitor(rng):
    P = rng.gamma(1.0, 1.0, (16, 30, 2)) + 1e-3
    model = init_ilrma_model(16, 30, 2, 4, rng)
    div = [is_divergence(P, source_variance(model))]
    for _ in range(10):
        model = update_source_model_is_nmf(model, P)
        div.append(is_divergence(P, source_variance(model)))
    assert np.all(np.diff(div) <= SLACK * np.abs(div[:-1]))


def test_ip_white_input_keeps_identity():
    rng = np.random.default_rng(0)
    X = crandn(rng, 1, 1000, 2) / np.sqrt(2)
    W = np.eye(2, dtype=complex)[None]
    W = update_demixing_ip(W, X, ones_model(2, 1, 1000))
    assert np.linalg.norm(W[0] - np.eye(2)) < 0.2


def test_ip_hand_solved_instance():
    X = np.array([[[1.0, 0.5j], [0.2, 1.0 - 0.3j]]])  # I=1, J=2, M=2
    r = np.array([[[1.0, 2.0], [0.5, 1.5]]])  # (I, J, N)
    W = np.array([[[1.0, 0.1], [0.2j, 1.0]]])
    expected = W[0].copy()
    for n in range(2):
        U = sum(np.outer(X[0, j], X[0, j].conj()) / r[0, j, n] for j in range(2)) / 2
        w = np.linalg.solve(expected @ U, np.eye(2)[n])
        w /= np.sqrt(np.real(w.conj() @ U @ w))
        expected[n] = w.conj()
    got = update_demixing_ip(W, X, exact_model(r))
    np.testing.assert_allclose(got[0], expected, atol=1e-10)


def test_ip_separates_rank1_scene():
    rng = np.random.default_rng(2)
    n_freq, n_frames = 8, 400
    A = crandn(rng, n_freq, 2, 2) + 2 * np.eye(2)
    power = rng.gamma(0.5, 1.0, (n_freq, n_frames, 2)) + 1e-3
    S = np.sqrt(power) * crandn(rng, n_freq, n_frames, 2) / np.sqrt(2)
    X = rank1_scene(A, S)
    W = np.tile(np.eye(2, dtype=complex), (n_freq, 1, 1))
    model = exact_model(power)
    for _ in range(30):
        W = update_demixing_ip(W, X, model)
    G = np.abs(W @ A)
    for i in range(n_freq):
        g = G[i] / G[i].max(axis=1, keepdims=True)
        # one dominant entry per row, in distinct columns
        assert np.sort(g, axis=1)[:, 0].max() < 0.05
        assert len(set(np.argmax(g, axis=1))) == 2


@pytest.mark.parametrize("n_freq,n_frames,n_src", [(4, 8, 2), (16, 64, 2), (4, 64, 3), (16, 8, 3)])
def test_every_block_is_monotone(n_freq, n_frames, n_src):
    rng = np.random.default_rng(n_freq * n_frames + n_src)
    X = crandn(rng, n_freq, n_frames, n_src)
    model = init_ilrma_model(n_freq, n_frames, n_src, 2, rng)
    W = np.tile(np.eye(n_src, dtype=complex), (n_freq, 1, 1))
    cost = ilrma_cost(X, W, model)
    for _ in range(10):
        model = update_source_model_is_nmf(model, np.abs(demix(W, X)) ** 2)
        new = ilrma_cost(X, W, model)
        assert new <= cost + SLACK * abs(cost)
        cost = new
        W = update_demixing_ip(W, X, model)
        new = ilrma_cost(X, W, model)
        assert new <= cost + SLACK * abs(cost)
        cost = new
        floored = source_variance(model).min() < 10 * EPS
        W, model = normalize_ilrma(W, model, X)
        new = ilrma_cost(X, W, model)
        if not floored:  # the EPS floor on r is not scale-equivariant
            assert abs(new - cost) <= 1e-10 * abs(cost)
        cost = new


def test_project_back_identity():
    # with W = E, source n only reaches microphone n, so its image at the
    # reference microphone is zero unless n is the reference
    W = np.tile(np.eye(2, dtype=complex), (3, 1, 1))
    np.testing.assert_array_equal(project_back(W, 0), np.tile(np.diag([1.0, 0.0]), (3, 1, 1)))
    np.testing.assert_array_equal(project_back(W, 1), np.tile(np.diag([0.0, 1.0]), (3, 1, 1)))


def test_project_back_diagonal():
    W = np.diag([2.0, 4.0]).astype(complex)[None]
    # row n is scaled by [W^-1]_{ref, n}
    np.testing.assert_allclose(project_back(W, 0)[0], [[1, 0], [0, 0]])
    np.testing.assert_allclose(project_back(W, 1)[0], [[0, 0], [0, 1]])


def test_project_back_reconstructs_reference(rng):
    W = crandn(rng, 5, 3, 3)
    X = crandn(rng, 5, 7, 3)
    for ref in range(3):
        Y = demix(project_back(W, ref), X)
        assert np.max(np.abs(Y.sum(axis=-1) - X[..., ref])) < 1e-10


def test_project_back_singular():
    with pytest.raises(SingularDemixing):
        project_back(np.zeros((1, 2, 2), dtype=complex))


def test_zero_iterations(rng):
    X = crandn(rng, 6, 9, 2)
    res = run_ilrma(X, n_iter=0, projection_back=False)
    np.testing.assert_array_equal(res.W, np.tile(np.eye(2), (6, 1, 1)))
    np.testing.assert_array_equal(res.Y, X)
    assert len(res.costs) == 1
    projected = run_ilrma(X, n_iter=0)
    np.testing.assert_array_equal(projected.W_raw, res.W)
    np.testing.assert_allclose(projected.Y.sum(axis=-1), X[..., 0], atol=1e-12)


def test_run_cost_trace_monotone_and_reproducible(rng):
    X = crandn(rng, 16, 30, 2)
    res = run_ilrma(X, n_iter=50, n_basis=3, seed=4)
    c = res.costs
    assert len(c) == 51
    assert np.all(c[1:] <= c[:-1] + SLACK * np.abs(c[:-1]))
    again = run_ilrma(X, n_iter=50, n_basis=3, seed=4)
    np.testing.assert_array_equal(res.W, again.W)


def test_anechoic_scene_separation():
    cfg = StftConfig()
    scene = make_scene(SceneConfig(t60_ms=0, seed=0))
    X = stft(scene.mixture, cfg)
    res = run_ilrma(X, n_iter=50, n_basis=10)
    est = np.stack([istft(res.Y[:, :, n], cfg, len(scene.mixture)).samples[0] for n in range(2)])
    assert sdr_improvement(scene, est).improvement > 10.0
