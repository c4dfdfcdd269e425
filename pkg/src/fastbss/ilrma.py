"""Independent low-rank matrix analysis (ILRMA), determined case.

Each source ``n`` owns its own NMF pair ``T[n] (I, K_n)`` and ``V[n] (K_n, J)``
modelling the variance ``r_ijn = sum_k T[n,i,k] V[n,k,j]`` of the separated
signal ``y_ijn = w_in^H x_ij``. ``W[i]`` stores the rows ``w_in^H``.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SingularDemixing, SingularMatrix, SingularUpdate
from .linalg import det, hermitian_outer, inverse, solve

__all__ = [
    "EPS",
    "IlrmaModel",
    "IlrmaResult",
    "init_ilrma_model",
    "source_variance",
    "demix",
    "ilrma_cost",
    "update_source_model_is_nmf",
    "update_demixing_ip",
    "normalize_ilrma",
    "project_back",
    "run_ilrma",
]

EPS = 1e-12


@dataclass
class IlrmaModel:
    T: np.ndarray  # (N, I, K_n)
    V: np.ndarray  # (N, K_n, J)

    def copy(self):
        return IlrmaModel(self.T.copy(), self.V.copy())


@dataclass
class IlrmaResult:
    W: np.ndarray  # demixing matrices after optional projection back
    Y: np.ndarray  # (I, J, N) separated spectrograms, Y = W x
    model: IlrmaModel
    W_raw: np.ndarray  # demixing matrices before projection back
    costs: np.ndarray
    seconds: np.ndarray = field(default=None, repr=False)  # cumulative, per trace row


def init_ilrma_model(n_freq, n_frames, n_src, n_basis, rng):
    """Partitioned NMF factors drawn i.i.d. from U[0.1, 1)."""
    T = rng.uniform(0.1, 1.0, size=(n_src, n_freq, n_basis))
    V = rng.uniform(0.1, 1.0, size=(n_src, n_basis, n_frames))
    return IlrmaModel(T, V)


def source_variance(model):
    """``r_ijn`` as an ``(I, J, N)`` array, floored at ``EPS``."""
    R = np.stack([model.T[n] @ model.V[n] for n in range(model.T.shape[0])], axis=-1)
    return np.maximum(R, EPS)


def demix(W, X):
    """``y_ij = W_i x_ij`` for every frequency and frame."""
    return X @ W.swapaxes(-1, -2)


def _log_abs_det(W):
    d = np.abs(det(W))
    if np.any(d == 0):
        raise SingularDemixing("demixing matrix has zero determinant")
    return np.log(d)


def ilrma_cost(X, W, model):
    """Negative log-likelihood up to a constant.

    ``sum_ijn (|y_ijn|^2 / r_ijn + log r_ijn) - 2 J sum_i log|det W_i|``
    """
    n_frames = X.shape[1]
    P = np.abs(demix(W, X)) ** 2
    R = source_variance(model)
    return float(np.sum(P / R + np.log(R)) - 2 * n_frames * np.sum(_log_abs_det(W)))


def _is_nmf_step(T, V, P):
    """One multiplicative IS-NMF sweep over ``T (I, K)`` and ``V (K, J)`` for power ``P (I, J)``."""
    R = np.maximum(T @ V, EPS)
    T = T * np.sqrt(((P / R**2) @ V.T) / ((1.0 / R) @ V.T))
    T = np.maximum(T, EPS)
    R = np.maximum(T @ V, EPS)
    V = V * np.sqrt((T.T @ (P / R**2)) / (T.T @ (1.0 / R)))
    V = np.maximum(V, EPS)
    return T, V


def update_source_model_is_nmf(model, P):
    """Update every source's NMF factors once for separated powers ``P (I, J, N)``."""
    T = model.T.copy()
    V = model.V.copy()
    for n in range(T.shape[0]):
        T[n], V[n] = _is_nmf_step(model.T[n], model.V[n], P[:, :, n])
    return IlrmaModel(T, V)


def weighted_covariance(XX, weights):
    """``(1/J) sum_j x_ij x_ij^H / weights_ij`` for ``XX (I, J, M, M)``, ``weights (I, J)``."""
    n_freq, n_frames, n_mic, _ = XX.shape
    flat = XX.reshape(n_freq, n_frames, n_mic * n_mic)
    U = ((1.0 / weights)[:, None, :] @ flat).reshape(n_freq, n_mic, n_mic) / n_frames
    return 0.5 * (U + U.conj().swapaxes(-1, -2))


def update_demixing_ip(W, X, model, XX=None):
    """Iterative-projection sweep over the rows of every ``W_i``."""
    if XX is None:
        XX = hermitian_outer(X)
    R = source_variance(model)
    W = W.copy()
    n_src = W.shape[1]
    for n in range(n_src):
        U = weighted_covariance(XX, R[:, :, n])
        e_n = np.zeros(n_src)
        e_n[n] = 1.0
        try:
            w = solve(W @ U, e_n)
        except SingularMatrix:
            U = weighted_covariance(XX, R[:, :, n] + EPS)
            try:
                w = solve(W @ U, e_n)
            except SingularMatrix as exc:
                raise SingularUpdate(f"IP update of source {n} failed after retry: {exc}") from exc
        scale = np.einsum("ia,iab,ib->i", w.conj(), U, w).real
        w = w / np.sqrt(scale)[:, None]
        W[:, n, :] = w.conj()
    return W


def normalize_ilrma(W, model, X):
    """Rescale each source to unit mean output power.

    The cost is unchanged: the ``log r`` and ``log|det W|`` terms shift by
    equal and opposite amounts.
    """
    P = np.abs(demix(W, X)) ** 2
    power = np.mean(P, axis=(0, 1))
    power = np.where(power > 0, power, 1.0)
    W = W / np.sqrt(power)[None, :, None]
    return W, IlrmaModel(model.T / power[:, None, None], model.V.copy())


def project_back(W, reference=0):
    """Scale row ``n`` of each ``W_i`` by ``[W_i^{-1}]_{reference, n}``.

    Afterwards ``W_i x_ij`` yields the source images observed at the
    reference microphone, which sum to that microphone's signal.
    """
    try:
        A = inverse(W)
    except SingularMatrix as exc:
        raise SingularDemixing(str(exc)) from exc
    return A[:, reference, :][:, :, None] * W


def run_ilrma(X, n_iter=50, n_basis=10, seed=0, reference=0, projection_back=True):
    """Run ILRMA on ``X (I, J, M)`` starting from ``W_i = E``.

    ``n_basis`` is the number of bases per source. Returns an
    :class:`IlrmaResult` whose cost trace has ``n_iter + 1`` entries.
    """
    n_freq, n_frames, n_mic = X.shape
    rng = np.random.default_rng(seed)
    model = init_ilrma_model(n_freq, n_frames, n_mic, n_basis, rng)
    W = np.tile(np.eye(n_mic, dtype=np.complex128), (n_freq, 1, 1))
    XX = hermitian_outer(X)

    costs = [ilrma_cost(X, W, model)]
    seconds = [0.0]
    for _ in range(n_iter):
        tic = time.perf_counter()
        P = np.abs(demix(W, X)) ** 2
        model = update_source_model_is_nmf(model, P)
        W = update_demixing_ip(W, X, model, XX)
        W, model = normalize_ilrma(W, model, X)
        seconds.append(seconds[-1] + time.perf_counter() - tic)
        costs.append(ilrma_cost(X, W, model))

    W_out = project_back(W, reference) if projection_back else W.copy()
    return IlrmaResult(
        W=W_out,
        Y=demix(W_out, X),
        model=model,
        W_raw=W,
        costs=np.array(costs),
        seconds=np.array(seconds),
    )
