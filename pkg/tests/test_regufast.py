import numpy as np
import pytest

from fastbss.fastmnmf import (
    build_D,
    diagonalized_power,
    fastmnmf_cost,
    model_power,
    run_fastmnmf,
    update_q_ip,
    update_tvzg,
)
from fastbss.linalg import hermitian_outer
from fastbss.regufast import (
    RegularizerSchedule,
    adjugate_column,
    lambda_at,
    prior_means,
    regularized_cost,
    row_cost,
    row_gradient,
    run_regularized_fastmnmf,
    update_q_vcd,
)

from conftest import Instance, crandn

SLACK = 1e-9


def test_schedule_defaults():
    s = RegularizerSchedule()
    assert (s.mode, s.lambda_const, s.lambda0, s.lambda_end, s.total) == ("geometric", 1e-7, 1e-6, 1e-13, 300)


def test_schedule_endpoints_exact():
    s = RegularizerSchedule()
    assert lambda_at(s, 0) == 1e-6
    assert lambda_at(s, 300) == 1e-13


def test_schedule_midpoint():
    assert lambda_at(RegularizerSchedule(total=300), 150) == pytest.approx(np.sqrt(1e-6 * 1e-13), rel=1e-12)
    assert lambda_at(RegularizerSchedule(total=300), 150) == pytest.approx(3.162e-10, rel=1e-3)


def test_schedule_strictly_decreasing():
    s = RegularizerSchedule(total=50)
    values = [lambda_at(s, l) for l in range(51)]
    assert np.all(np.diff(values) < 0)
    assert min(values) >= 0


def test_constant_and_zero_schedules():
    s = RegularizerSchedule(mode="constant")
    assert {lambda_at(s, l) for l in (0, 7, 300)} == {1e-7}
    z = RegularizerSchedule.zero()
    assert lambda_at(z, 0) == 0.0 and lambda_at(z, 300) == 0.0


def test_schedule_validation():
    with pytest.raises(ValueError):
        RegularizerSchedule(mode="linear")
    with pytest.raises(ValueError):
        RegularizerSchedule(lambda0=-1.0)
    with pytest.raises(ValueError):
        lambda_at(RegularizerSchedule(total=10), 11)


def test_build_D_trivial():
    XX = np.zeros((3, 4, 2, 2), dtype=complex)
    np.testing.assert_array_equal(build_D(XX, np.ones((3, 4)), 0.5), np.tile(0.5 * np.eye(2), (3, 1, 1)))
    x = np.zeros((1, 1, 2), dtype=complex)
    x[0, 0, 0] = 1
    np.testing.assert_array_equal(build_D(hermitian_outer(x), np.ones((1, 1)), 0.0)[0], [[1, 0], [0, 0]])


def test_build_D_direct_sum(rng):
    X = crandn(rng, 5, 9, 3)
    d = rng.uniform(0.1, 2.0, (5, 9))
    lam = 0.03
    D = build_D(hermitian_outer(X), d, lam)
    for i in range(5):
        ref = sum(np.outer(X[i, j], X[i, j].conj()) / d[i, j] for j in range(9)) / 9 + lam * np.eye(3)
        assert np.max(np.abs(D[i] - ref)) < 1e-12 * np.max(np.abs(ref))
        np.testing.assert_array_equal(D[i], D[i].conj().T)
        assert np.linalg.eigvalsh(D[i]).min() >= lam * (1 - 1e-12)


def test_prior_means_layout(rng):
    W = crandn(rng, 4, 3, 3)
    Qhat = prior_means(W)
    for m in range(3):
        np.testing.assert_array_equal(Qhat[:, :, m], W[:, m, :].conj())


def phase_aligned_diff(A, B):
    """Max |A - B| after rotating each row of A by the best unit-modulus phase."""
    inner = np.sum(A.conj() * B, axis=-1)
    phase = np.exp(1j * np.angle(inner))
    return np.max(np.abs(A * phase[..., None] - B))


@pytest.mark.parametrize("seed", range(3))
def test_vcd_with_zero_lambda_matches_ip(seed):
    inst = Instance(seed)
    Q_ip = update_q_ip(inst.Q, inst.X, inst.model)
    Q_vcd = update_q_vcd(inst.Q, inst.X, inst.model, inst.Qhat, 0.0)
    assert phase_aligned_diff(Q_vcd, Q_ip) < 1e-8
    np.testing.assert_array_equal(Q_vcd, Q_ip)  # same arithmetic path, bit-identical


def test_vcd_large_lambda_pins_prior():
    inst = Instance(4)
    X = np.zeros_like(inst.X)
    n_freq = X.shape[0]
    W = np.tile(np.eye(2, dtype=complex), (n_freq, 1, 1))
    Q = update_q_vcd(inst.Q, X, inst.model, prior_means(W), 1e6)
    assert np.max(np.linalg.norm(Q - W, axis=-1)) < 1e-2


@pytest.mark.parametrize("lam", [0.0, 1e-7, 1e-3, 0.1, 10.0])
@pytest.mark.parametrize("seed", range(4))
def test_vcd_monotone(seed, lam):
    inst = Instance(seed)
    Q, model = inst.Q, inst.model
    cost = regularized_cost(inst.X, Q, model, inst.W, lam)
    for _ in range(3):
        Q = update_q_vcd(Q, inst.X, model, inst.Qhat, lam)
        new = regularized_cost(inst.X, Q, model, inst.W, lam)
        assert new <= cost + SLACK * abs(cost)
        cost = new
        model = update_tvzg(model, diagonalized_power(Q, inst.X))
        new = regularized_cost(inst.X, Q, model, inst.W, lam)
        assert new <= cost + SLACK * abs(cost)
        cost = new


def test_vcd_per_frequency_lambda(instance):
    lam = np.linspace(0, 1e-2, instance.X.shape[0])[:, None] * np.ones(2)
    Q = update_q_vcd(instance.Q, instance.X, instance.model, instance.Qhat, lam)
    assert regularized_cost(instance.X, Q, instance.model, instance.W, lam) <= regularized_cost(
        instance.X, instance.Q, instance.model, instance.W, lam
    )


def test_regularized_cost_zero_lambda(instance):
    assert regularized_cost(instance.X, instance.Q, instance.model, instance.W, 0.0) == fastmnmf_cost(
        instance.X, instance.Q, instance.model
    )


def test_regularized_cost_penalty(instance):
    lam = 0.2
    extra = regularized_cost(instance.X, instance.Q, instance.model, instance.W, lam) - fastmnmf_cost(
        instance.X, instance.Q, instance.model
    )
    expected = instance.X.shape[1] * lam * np.sum(np.abs(instance.Q - instance.W) ** 2)
    assert extra == pytest.approx(expected, rel=1e-9)


def row_problem(inst, i, m, lam):
    d = model_power(inst.model)
    D = build_D(hermitian_outer(inst.X), d[:, :, m], lam)[i]
    b = adjugate_column(inst.Q, m)[i]
    return D, b, inst.Qhat[i, :, m]


def fd_gradient(f, q, h=1e-6):
    g = np.zeros_like(q)
    for k in range(len(q)):
        e = np.zeros_like(q)
        e[k] = h
        dre = (f(q + e) - f(q - e)) / (2 * h)
        dim = (f(q + 1j * e) - f(q - 1j * e)) / (2 * h)
        g[k] = dre + 1j * dim
    return g


@pytest.mark.parametrize("case", range(10))
def test_row_gradient_finite_differences(case):
    inst = Instance(100 + case)
    rng = np.random.default_rng(case)
    i, m = int(rng.integers(65)), int(rng.integers(2))
    lam = [0.0, 1e-7, 1e-3, 0.5][case % 4]
    D, b, qh = row_problem(inst, i, m, lam)
    J = inst.X.shape[1]
    q = inst.Q[i, m].conj()
    numeric = fd_gradient(lambda v: row_cost(v, D, b, qh, lam, J), q)
    analytic = 2 * J * row_gradient(q, D, b, qh, lam)  # d/dRe + i d/dIm = 2 dL/dq*
    assert np.linalg.norm(numeric - analytic) < 1e-5 * np.linalg.norm(analytic)


def test_row_cost_matches_full_cost_differences(instance):
    lam, i, m = 0.05, 3, 1
    D, b, qh = row_problem(instance, i, m, lam)
    J = instance.X.shape[1]
    Q2 = instance.Q.copy()
    Q2[i, m] += 0.1 * crandn(np.random.default_rng(0), 2)
    full = regularized_cost(instance.X, Q2, instance.model, instance.W, lam) - regularized_cost(
        instance.X, instance.Q, instance.model, instance.W, lam
    )
    row = row_cost(Q2[i, m].conj(), D, b, qh, lam, J) - row_cost(instance.Q[i, m].conj(), D, b, qh, lam, J)
    assert full == pytest.approx(row, rel=1e-8)


@pytest.mark.parametrize("lam", [0.0, 1e-7, 1e-3, 1.0])
@pytest.mark.parametrize("n_mic", [2, 3])
def test_vcd_zeroes_stationarity(lam, n_mic):
    inst = Instance(7, n_mic=n_mic)
    d = model_power(inst.model)
    XX = hermitian_outer(inst.X)
    out = update_q_vcd(inst.Q, inst.X, inst.model, inst.Qhat, lam)
    for m in range(n_mic):
        # state right after row m was replaced: earlier rows updated, later rows not yet
        Q_m = np.concatenate([out[:, : m + 1], inst.Q[:, m + 1 :]], axis=1)
        D = build_D(XX, d[:, :, m], lam)
        b = adjugate_column(Q_m, m)
        for i in range(Q_m.shape[0]):
            q = Q_m[i, m].conj()
            res = row_gradient(q, D[i], b[i], inst.Qhat[i, :, m], lam)
            scale = (
                np.linalg.norm(D[i] @ q)
                + np.linalg.norm(b[i] / np.vdot(q, b[i]))
                + lam * np.linalg.norm(inst.Qhat[i, :, m])
            )
            assert np.linalg.norm(res) < 1e-8 * scale


def test_zero_schedule_matches_fastmnmf():
    X = Instance(5, n_freq=33, n_frames=30).X
    W = crandn(np.random.default_rng(0), 33, 2, 2)
    ref = run_fastmnmf(X, n_iter=40, n_basis=4, seed=2)
    reg = run_regularized_fastmnmf(X, n_iter=40, n_basis=4, schedule=RegularizerSchedule.zero(40), seed=2, W=W)
    np.testing.assert_allclose(reg.costs, ref.costs, rtol=1e-8)
    assert np.max(np.abs(reg.images - ref.images)) < 1e-6


def test_run_trace_and_monotone_at_fixed_lambda():
    X = Instance(6, n_freq=33, n_frames=30).X
    W = crandn(np.random.default_rng(1), 33, 2, 2)
    sched = RegularizerSchedule(mode="constant", lambda_const=1e-7, total=30)
    res = run_regularized_fastmnmf(X, n_iter=30, n_basis=4, schedule=sched, W=W)
    assert len(res.trace) == 31
    assert np.all(res.trace["lam"] == 1e-7)
    c = res.costs
    assert np.all(c[1:] <= c[:-1] + SLACK * np.abs(c[:-1]))


def test_run_geometric_trace_records_schedule():
    X = Instance(6, n_freq=17, n_frames=20).X
    W = crandn(np.random.default_rng(1), 17, 2, 2)
    res = run_regularized_fastmnmf(X, n_iter=10, n_basis=3, W=W)
    sched = RegularizerSchedule(total=10)
    assert res.trace["lam"][0] == 1e-6
    np.testing.assert_array_equal(res.trace["lam"][1:], [lambda_at(sched, l) for l in range(10)])


def test_prior_pulls_q_toward_w():
    X = Instance(8, n_freq=17, n_frames=30).X
    W = crandn(np.random.default_rng(2), 17, 2, 2) + np.eye(2)
    sched = RegularizerSchedule(mode="constant", lambda_const=1e-7, total=20)
    weak = run_regularized_fastmnmf(X, n_iter=20, n_basis=3, schedule=sched, W=W, prior_scale=1.0)
    strong = run_regularized_fastmnmf(X, n_iter=20, n_basis=3, schedule=sched, W=W, prior_scale=1e8)
    assert np.linalg.norm(strong.Q - W) < 0.5 * np.linalg.norm(weak.Q - W)
