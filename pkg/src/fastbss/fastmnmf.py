"""FastMNMF: MNMF with jointly diagonalizable spatial covariances.

Shapes follow ``X_FTM`` conventions: ``I`` frequencies, ``J`` frames, ``M``
channels, ``N`` sources and ``K`` shared NMF bases.

Model
-----
``sigma_ijn = sum_k t_ik v_kj z_kn`` is the source PSD, ``g_inm`` the diagonal
spatial gains in the domain diagonalized by ``Q_i`` (rows ``q_im^H``), and
``d_ijm = sum_n sigma_ijn g_inm`` the modelled power of ``q_im^H x_ij``.
"""

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCovariance, SingularDiagonalizer, SingularMatrix, SingularUpdate
from .ilrma import EPS, weighted_covariance
from .linalg import det, hermitian_outer, inverse, solve

__all__ = [
    "FastModel",
    "SeparationResult",
    "init_model",
    "source_psd",
    "model_power",
    "diagonalized_power",
    "fastmnmf_cost",
    "init_q",
    "build_D",
    "update_q_ip",
    "update_t",
    "update_v",
    "update_z",
    "update_g",
    "normalize_model",
    "update_tvzg",
    "wiener_reconstruct",
    "run_fastmnmf",
]


@dataclass
class FastModel:
    t: np.ndarray  # (I, K)
    v: np.ndarray  # (K, J)
    z: np.ndarray  # (K, N)
    g: np.ndarray  # (I, N, M)

    def copy(self):
        return FastModel(self.t.copy(), self.v.copy(), self.z.copy(), self.g.copy())


@dataclass
class SeparationResult:
    """Output of a separation run.

    ``images`` holds the estimated source images ``(N, I, J, M)``; ``trace``
    is a structured array with fields ``iteration``, ``lam``, ``cost`` and
    ``seconds`` (cumulative wall-clock, excluding setup).
    """

    images: np.ndarray
    Q: np.ndarray
    model: FastModel
    trace: np.ndarray

    @property
    def costs(self):
        return self.trace["cost"]

    def reference_images(self, reference=0):
        """``(I, J, N)`` images at one microphone."""
        return self.images[..., reference].transpose(1, 2, 0)


TRACE_DTYPE = np.dtype(
    [("iteration", np.int64), ("lam", np.float64), ("cost", np.float64), ("seconds", np.float64)]
)


def init_model(n_freq, n_frames, n_src, n_mic, n_basis, rng, spatial="flat"):
    """Random t, v in U[0.1, 1); z uniform then normalized over sources.

    ``spatial="flat"`` gives ``g = 1``; ``"emphasis"`` gives
    ``g_inm = 1 + [m == n]``.
    """
    t = rng.uniform(0.1, 1.0, size=(n_freq, n_basis))
    v = rng.uniform(0.1, 1.0, size=(n_basis, n_frames))
    z = rng.uniform(0.1, 1.0, size=(n_basis, n_src))
    z /= z.sum(axis=1, keepdims=True)
    g = np.ones((n_freq, n_src, n_mic))
    if spatial == "emphasis":
        for n in range(min(n_src, n_mic)):
            g[:, n, n] += 1.0
    elif spatial != "flat":
        raise ValueError(f"unknown spatial init {spatial!r}")
    return FastModel(t, v, z, g)


def source_psd(model):
    """``sigma_ijn`` with shape ``(I, J, N)``."""
    n_src = model.z.shape[1]
    return np.stack([(model.t * model.z[:, n]) @ model.v for n in range(n_src)], axis=-1)


def model_power(model, sigma=None):
    """``d_ijm`` with shape ``(I, J, M)``, floored at ``EPS``."""
    if sigma is None:
        sigma = source_psd(model)
    return np.maximum(sigma @ model.g, EPS)


def diagonalized_power(Q, X):
    """``p_ijm = |q_im^H x_ij|^2``."""
    Qx = X @ Q.swapaxes(-1, -2)
    return Qx.real**2 + Qx.imag**2


def log_abs_det(Q):
    d = np.abs(det(Q))
    if np.any(d == 0):
        raise SingularDiagonalizer("joint-diagonalization matrix has zero determinant")
    return np.log(d)


def fastmnmf_cost(X, Q, model):
    """``sum_ijm (p/d + log d) - 2 J sum_i log|det Q_i|``."""
    n_frames = X.shape[1]
    p = diagonalized_power(Q, X)
    d = model_power(model)
    return float(np.sum(p / d + np.log(d)) - 2 * n_frames * np.sum(log_abs_det(Q)))


def init_q(strategy, X, W=None):
    """Initial ``Q (I, M, M)``: ``"identity"``, ``"pca"`` (whitening) or ``"ilrma"`` (``Q = W``)."""
    n_freq, n_frames, n_mic = X.shape
    if strategy == "identity":
        return np.tile(np.eye(n_mic, dtype=np.complex128), (n_freq, 1, 1))
    if strategy == "ilrma":
        if W is None:
            raise ValueError("strategy 'ilrma' needs demixing matrices W")
        return np.array(W, dtype=np.complex128, copy=True)
    if strategy == "pca":
        R = np.einsum("ija,ijb->iab", X, X.conj()) / n_frames
        R = 0.5 * (R + R.conj().swapaxes(-1, -2))
        eigval, eigvec = np.linalg.eigh(R)
        if np.any(eigval < EPS):
            raise DegenerateCovariance(
                f"observed covariance has eigenvalue {eigval.min():.3g} below {EPS:g}"
            )
        return eigvec.conj().swapaxes(-1, -2) / np.sqrt(eigval)[:, :, None]
    raise ValueError(f"unknown Q initialization {strategy!r}")


def build_D(XX, d_m, lam=0.0):
    """``D_im = (1/J) sum_j x_ij x_ij^H / d_ijm + lam E``, symmetrized.

    ``XX`` is ``(I, J, M, M)``, ``d_m`` is ``(I, J)``, ``lam`` a scalar or ``(I,)``.
    """
    D = weighted_covariance(XX, d_m)
    n_mic = D.shape[-1]
    lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), D.shape[:1])
    return D + lam[:, None, None] * np.eye(n_mic)


def _solve_row(Q, D, m, XX, d, lam):
    """``(Q_i D_im)^{-1} e_m``, retrying once with ``d`` lifted by EPS."""
    e_m = np.zeros(Q.shape[-1])
    e_m[m] = 1.0
    try:
        return D, solve(Q @ D, e_m)
    except SingularMatrix:
        D = build_D(XX, d[:, :, m] + EPS, lam)
        try:
            return D, solve(Q @ D, e_m)
        except SingularMatrix as exc:
            raise SingularUpdate(f"row {m} update failed after retry: {exc}") from exc


def update_q_ip(Q, X, model, XX=None):
    """Iterative projection over the rows of every ``Q_i``."""
    if XX is None:
        XX = hermitian_outer(X)
    d = model_power(model)
    Q = Q.copy()
    for m in range(Q.shape[-1]):
        D = build_D(XX, d[:, :, m])
        D, u = _solve_row(Q, D, m, XX, d, 0.0)
        r = np.einsum("ia,iab,ib->i", u.conj(), D, u).real
        Q[:, m, :] = (u * (1.0 / np.sqrt(r))[:, None]).conj()
    return Q


def _weighted_by_g(p, model):
    """Per source ``n``: ``sum_m g_inm p/d^2`` and ``sum_m g_inm / d``, each ``(I, J)``."""
    d = model_power(model)
    inv_d = 1.0 / d
    A = p * inv_d**2
    n_src, n_mic = model.g.shape[1:]
    Ag, Bg = [], []
    for n in range(n_src):
        g_n = model.g[:, n, :]
        Ag.append(sum(A[:, :, m] * g_n[:, m, None] for m in range(n_mic)))
        Bg.append(sum(inv_d[:, :, m] * g_n[:, m, None] for m in range(n_mic)))
    return Ag, Bg


def update_t(model, p):
    """Multiplicative update of ``t``; nonincreasing in :func:`fastmnmf_cost`."""
    Ag, Bg = _weighted_by_g(p, model)
    z, vT = model.z, model.v.T
    num = sum(z[:, n] * (Ag[n] @ vT) for n in range(z.shape[1]))
    den = sum(z[:, n] * (Bg[n] @ vT) for n in range(z.shape[1]))
    out = model.copy()
    out.t = np.maximum(model.t * np.sqrt(num / den), EPS)
    return out


def update_v(model, p):
    Ag, Bg = _weighted_by_g(p, model)
    z, tT = model.z, model.t.T
    num = sum(z[:, n, None] * (tT @ Ag[n]) for n in range(z.shape[1]))
    den = sum(z[:, n, None] * (tT @ Bg[n]) for n in range(z.shape[1]))
    out = model.copy()
    out.v = np.maximum(model.v * np.sqrt(num / den), EPS)
    return out


def update_z(model, p):
    Ag, Bg = _weighted_by_g(p, model)
    t, vT = model.t, model.v.T
    n_src = model.z.shape[1]
    num = np.stack([np.sum(t * (Ag[n] @ vT), axis=0) for n in range(n_src)], axis=-1)
    den = np.stack([np.sum(t * (Bg[n] @ vT), axis=0) for n in range(n_src)], axis=-1)
    out = model.copy()
    out.z = np.maximum(model.z * np.sqrt(num / den), EPS)
    return out


def update_g(model, p):
    sigma = source_psd(model)
    d = model_power(model, sigma)
    inv_d = 1.0 / d
    sigmaT = sigma.swapaxes(-1, -2)
    num = sigmaT @ (p * inv_d**2)
    den = sigmaT @ inv_d
    out = model.copy()
    out.g = np.maximum(model.g * np.sqrt(num / den), EPS)
    return out


def normalize_model(model):
    """Fix the scale ambiguities without changing ``d``.

    * ``sum_n z_kn = 1``, compensated in ``v``;
    * mean of ``g_i..`` over (n, m) equal to 1, compensated in ``t``;
    * ``sum_i t_ik = 1``, compensated in ``v``.
    """
    t, v, z, g = model.t.copy(), model.v.copy(), model.z.copy(), model.g.copy()
    s = z.sum(axis=1)
    z /= s[:, None]
    v *= s[:, None]
    c = g.mean(axis=(1, 2))
    g /= c[:, None, None]
    t *= c[:, None]
    tau = t.sum(axis=0)
    t /= tau[None, :]
    v *= tau[:, None]
    return FastModel(t, v, z, g)


def update_tvzg(model, p):
    """Updates t, v, z and g in turn (``d`` refreshed in between), then normalizes."""
    model = update_t(model, p)
    model = update_v(model, p)
    model = update_z(model, p)
    model = update_g(model, p)
    return normalize_model(model)


def wiener_reconstruct(X, Q, model):
    """Multichannel Wiener images ``(N, I, J, M)`` in the diagonalized domain.

    ``y_ijn = Q_i^{-1} [(sigma_ijn g_inm / d_ijm) * (Q_i x_ij)_m]_m``
    """
    try:
        Q_inv = inverse(Q)
    except SingularMatrix as exc:
        raise SingularDiagonalizer(str(exc)) from exc
    Qx = X @ Q.swapaxes(-1, -2)
    sigma = source_psd(model)
    parts = sigma[:, :, :, None] * model.g[:, None, :, :]  # (I, J, N, M)
    mask = parts / parts.sum(axis=2, keepdims=True)
    Y = mask * Qx[:, :, None, :]
    images = np.einsum("iab,ijnb->nija", Q_inv, Y)
    return images


def run_fastmnmf(X, n_iter=300, n_basis=20, init="identity", seed=0, W=None, spatial="flat"):
    """Conventional FastMNMF, one IP sweep then one t/v/z/g sweep per iteration.

    ``trace`` holds ``n_iter + 1`` rows; row 0 is the cost at initialization.
    """
    n_freq, n_frames, n_mic = X.shape
    rng = np.random.default_rng(seed)
    model = init_model(n_freq, n_frames, n_mic, n_mic, n_basis, rng, spatial)
    Q = init_q(init, X, W)
    XX = hermitian_outer(X)

    trace = np.zeros(n_iter + 1, dtype=TRACE_DTYPE)
    trace[0] = (0, 0.0, fastmnmf_cost(X, Q, model), 0.0)
    elapsed = 0.0
    for it in range(1, n_iter + 1):
        tic = time.perf_counter()
        Q = update_q_ip(Q, X, model, XX)
        p = diagonalized_power(Q, X)
        model = update_tvzg(model, p)
        elapsed += time.perf_counter() - tic
        trace[it] = (it, 0.0, fastmnmf_cost(X, Q, model), elapsed)

    images = wiener_reconstruct(X, Q, model)
    return SeparationResult(images=images, Q=Q, model=model, trace=trace)
