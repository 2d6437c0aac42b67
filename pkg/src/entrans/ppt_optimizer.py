"""Convex optimisation over two-qubit PPT states.

``ppt_relative_entropy`` minimises ``S(rho || sigma)`` over states ``sigma``
with positive partial transpose (equal to the separable set for 2x2) using a
log-barrier interior-point method with exact Newton steps.  ``sigma`` is
parameterised by its 15 Pauli coordinates so the trace constraint is implicit;
the barrier ``-log det(sigma) - log det(sigma^T_B)`` keeps both matrices
positive, and each outer stage bounds the suboptimality by ``8 / t``.

``best_separable_approximation`` finds the decomposition
``rho = lambda rho_sep + (1 - lambda) |psi><psi|`` with maximal ``lambda``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

_PAULI = [
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
]
# orthonormal traceless Hermitian basis (Hilbert-Schmidt), sigma = I/4 + sum x_k B_k
BASIS = np.array([np.kron(_PAULI[i], _PAULI[j]) / 2 for i in range(4) for j in range(4) if i or j])
BARRIER_PARAMETER = 8.0


def partial_transpose_4(x: np.ndarray) -> np.ndarray:
    """Partial transpose on the second qubit of a 4x4 matrix."""
    return x.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)


BASIS_PT = np.array([partial_transpose_4(b) for b in BASIS])


def _divided_log(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """First divided difference of log, stable for close arguments."""
    d = a - b
    same = np.abs(d) <= 1e-14 * np.maximum(a, b)
    safe = np.where(same, 1.0, d)
    return np.where(same, 1.0 / np.maximum(a, b), np.log1p(safe / b) / safe)


def _second_divided_log(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    lo, mid, hi = np.sort(np.stack(np.broadcast_arrays(a, b, c)), axis=0)
    close = 1e-6 * hi
    with np.errstate(divide="ignore", invalid="ignore"):
        general = (_divided_log(hi, mid) - _divided_log(mid, lo)) / (hi - lo)
        m1 = 0.5 * (lo + mid)
        low_pair = (1 / m1 - _divided_log(hi, m1)) / (m1 - hi)
        m2 = 0.5 * (mid + hi)
        high_pair = (1 / m2 - _divided_log(lo, m2)) / (m2 - lo)
    out = np.where(mid - lo <= close, low_pair, general)
    out = np.where(hi - mid <= close, high_pair, out)
    return np.where(hi - lo <= close, -0.5 / ((lo + mid + hi) / 3) ** 2, out)


def _sigma(x: np.ndarray) -> np.ndarray:
    return np.eye(4) / 4 + np.tensordot(x, BASIS, 1)


def _entropy(w: np.ndarray) -> float:
    w = w[w > 1e-300]
    return float(-np.sum(w * np.log(w)))


@dataclass(frozen=True)
class REEOptions:
    gap_tol: float = 1e-8
    newton_tol: float = 1e-11
    max_iterations: int = 3000
    tol: float = 1e-7
    t0: float = 1.0
    t_factor: float = 10.0


@dataclass(frozen=True)
class REEResult:
    value: float
    sigma: np.ndarray
    converged: bool
    iterations: int
    residual: float


class _Barrier:
    def __init__(self, rho: np.ndarray):
        self.rho = rho

    def value(self, x: np.ndarray, t: float) -> float:
        s = _sigma(x)
        lam, V = np.linalg.eigh(s)
        lam_pt = np.linalg.eigvalsh(partial_transpose_4(s))
        if lam[0] <= 0 or lam_pt[0] <= 0:
            return np.inf
        diag = np.real(np.einsum("ia,ij,ja->a", V.conj(), self.rho, V))
        return float(-t * diag @ np.log(lam) - np.log(lam).sum() - np.log(lam_pt).sum())

    def newton(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        s = _sigma(x)
        lam, V = np.linalg.eigh(s)
        R = V.conj().T @ self.rho @ V
        B = np.einsum("ia,kab,bj->kij", V.conj().T, BASIS, V)
        L1 = _divided_log(lam[:, None], lam[None, :])
        grad = -t * np.real(np.einsum("ji,kij->k", R, L1 * B))
        F2 = _second_divided_log(lam[:, None, None], lam[None, :, None], lam[None, None, :])
        M = np.einsum("imj,kim,lmj->klij", F2, B, B)
        hess = -t * np.real(np.einsum("ji,klij->kl", R, M + M.transpose(1, 0, 2, 3)))
        # log det barriers of sigma and its partial transpose
        for lam_b, Bb in ((lam, B), self._pt_frame(s)):
            grad -= np.real(np.einsum("kii,i->k", Bb, 1 / lam_b))
            Cb = Bb / np.sqrt(lam_b)[None, :, None] / np.sqrt(lam_b)[None, None, :]
            hess += np.real(np.einsum("kij,lji->kl", Cb, Cb))
        return grad, 0.5 * (hess + hess.T)

    @staticmethod
    def _pt_frame(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        lam, V = np.linalg.eigh(partial_transpose_4(s))
        return lam, np.einsum("ia,kab,bj->kij", V.conj().T, BASIS_PT, V)


def ppt_relative_entropy(rho: np.ndarray, opts: REEOptions | None = None) -> REEResult:
    """``min_sigma S(rho || sigma)`` over 4x4 PPT states, in nats."""
    opts = opts or REEOptions()
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    barrier = _Barrier(rho)
    x = np.zeros(15)
    t = opts.t0
    iterations = 0
    decrement = np.inf
    while True:
        for _ in range(200):
            grad, hess = barrier.newton(x, t)
            w, Q = np.linalg.eigh(hess)
            keep = w > w[-1] * 1e-15
            step = -(Q[:, keep] @ ((Q[:, keep].T @ grad) / w[keep]))
            decrement = float(-grad @ step)
            iterations += 1
            if decrement / 2 < opts.newton_tol or iterations >= opts.max_iterations:
                break
            f0 = barrier.value(x, t)
            alpha = 1.0
            while barrier.value(x + alpha * step, t) > f0 - 0.25 * alpha * decrement:
                alpha *= 0.5
                if alpha < 1e-12:
                    alpha = 0.0
                    break
            if alpha == 0.0:
                break
            x = x + alpha * step
        if BARRIER_PARAMETER / t < opts.gap_tol or iterations >= opts.max_iterations:
            break
        t *= opts.t_factor
    s = _sigma(x)
    lam, V = np.linalg.eigh(s)
    diag = np.real(np.einsum("ia,ij,ja->a", V.conj(), rho, V))
    value = -_entropy(np.linalg.eigvalsh(rho)) - float(diag @ np.log(lam))
    residual = BARRIER_PARAMETER / t + max(decrement, 0.0) / 2
    return REEResult(max(value, 0.0), s, residual < opts.tol, iterations, residual)


@dataclass(frozen=True)
class LSOptions:
    n_random_starts: int = 3
    seed: int = 1234
    xatol: float = 1e-9
    fatol: float = 1e-12
    max_iterations: int = 4000
    certificate_tol: float = 1e-8
    n_restarts: int = 3


@dataclass(frozen=True)
class LSResult:
    lambda_max: float
    E_exact: float
    psi: np.ndarray | None
    rho_sep: np.ndarray | None
    converged: bool
    iterations: int
    residual: float


def schmidt_entropy(psi: np.ndarray) -> float:
    sv = np.linalg.svd(psi.reshape(2, 2), compute_uv=False)
    return _entropy(sv**2 / np.sum(sv**2))


def _product_vectors(v1: np.ndarray, v2: np.ndarray) -> list[np.ndarray]:
    """Unit product vectors in ``span(v1, v2)``: roots of ``det(M1 + t M2) = 0``."""
    m1, m2 = v1.reshape(2, 2), v2.reshape(2, 2)
    a, c = np.linalg.det(m2), np.linalg.det(m1)
    b = np.linalg.det(m1 + m2) - a - c
    if abs(a) < 1e-12:
        # one root sits at infinity, i.e. v2 itself is a product vector
        coeffs = [np.array([0.0, 1.0])] + ([np.array([1.0, -c / b])] if abs(b) > 1e-12 else [])
    else:
        coeffs = [np.array([1.0, t]) for t in np.roots([a, b, c])]
    out = []
    for z in coeffs:
        z = z / np.linalg.norm(z)
        if not any(abs(np.vdot(q, z)) > 1 - 1e-12 for q in out):
            out.append(z)
    return out


def _rank_two_decomposition(w: np.ndarray, vecs: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact best separable approximation of a rank-2 state.

    A separable part must lie in the range, so it mixes the (at most two)
    product vectors found there.  With ``D = diag(w)`` in the range basis the
    largest weight removable along ``q2`` after removing ``alpha q1`` follows
    from Sherman-Morrison, leaving a concave 1-D maximisation.
    Returns the pure weight, the pure state and the separable part (unnormalised).
    """
    qs = _product_vectors(vecs[:, 0], vecs[:, 1])
    inv = 1.0 / w
    gram = lambda x, y: float(np.real(np.vdot(x, inv * y))) if x is y else np.vdot(x, inv * y)  # noqa: E731
    q1 = qs[0]
    a = gram(q1, q1)
    if len(qs) == 1:
        alphas = [1.0 / a]
    else:
        q2 = qs[1]
        b, c2 = gram(q2, q2), abs(gram(q1, q2)) ** 2

        def total(alpha: float) -> float:
            s = 1.0 - alpha * a
            return alpha + s / (b * s + alpha * c2)

        res = minimize_scalar(lambda x: -total(x), bounds=(0.0, 1.0 / a), method="bounded",
                              options={"xatol": 1e-15})
        candidates = [0.0, 1.0 / a, float(res.x)]
        alpha = max(candidates, key=total)
        s = 1.0 - alpha * a
        alphas = [alpha, s / (b * s + alpha * c2)]
    sep = sum(al * np.outer(vecs @ q, (vecs @ q).conj()) for al, q in zip(alphas, qs))
    remainder = vecs @ np.diag(w) @ vecs.conj().T - sep
    ev, ew = np.linalg.eigh(0.5 * (remainder + remainder.conj().T))
    return float(max(ev[-1], 0.0)), ew[:, -1], sep


def best_separable_approximation(rho: np.ndarray, opts: LSOptions | None = None,
                                 ppt_tol: float = 1e-14) -> LSResult:
    """Maximal-weight separable part of a 4x4 state.

    For a trial pure state ``psi`` in the range of ``rho`` the smallest weight
    ``mu`` such that ``rho - mu |psi><psi|`` is positive with positive partial
    transpose is found by root bracketing (the lowest partial-transpose eigenvalue is
    concave in ``mu``); ``mu`` is then minimised over ``psi``.  The remainder is
    separable because PPT and separability coincide for 2x2.
    """
    opts = opts or LSOptions()
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    if np.linalg.eigvalsh(partial_transpose_4(rho))[0] >= -ppt_tol:
        return LSResult(1.0, 0.0, None, rho, True, 0, 0.0)
    w, vecs = np.linalg.eigh(rho)
    support = w > 1e-12 * w[-1]
    w, vecs = w[support], vecs[:, support]
    r = w.size
    if r == 2:
        # the feasible pure states form a measure-zero set here, so solve exactly
        mu, psi, sep = _rank_two_decomposition(w, vecs)
        if mu > 1.0 - 1e-9:
            return LSResult(0.0, schmidt_entropy(psi), psi, None, True, 1, 0.0)
        rho_sep = sep / (1.0 - mu)
        residual = max(0.0, -np.linalg.eigvalsh(rho - mu * np.outer(psi, psi.conj()) - sep)[0],
                       float(np.abs(rho - mu * np.outer(psi, psi.conj()) - sep).max()))
        return LSResult(1.0 - mu, mu * schmidt_entropy(psi), psi, rho_sep,
                        residual < opts.certificate_tol, 1, float(residual))

    def coefficients(c: np.ndarray) -> np.ndarray:
        # the global phase is fixed by keeping the first coefficient real
        return np.concatenate([c[:1], c[1:r] + 1j * c[r:]]).astype(complex)

    def psi_of(c: np.ndarray) -> np.ndarray:
        z = coefficients(c)
        return vecs @ (z / np.linalg.norm(z))

    def min_weight(c: np.ndarray) -> float:
        """Smallest admissible weight of ``psi``; values above 1 signal infeasibility."""
        z = coefficients(c)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 2.0
        z = z / nz
        psi = vecs @ z
        proj = np.outer(psi, psi.conj())
        mu_psd = 1.0 / float(np.sum(np.abs(z) ** 2 / w))
        h = lambda mu: np.linalg.eigvalsh(partial_transpose_4(rho - mu * proj))[0] + ppt_tol  # noqa: E731
        upper = mu_psd
        if h(upper) < 0:
            res = minimize_scalar(lambda mu: -h(mu), bounds=(0.0, mu_psd), method="bounded",
                                  options={"xatol": 1e-13})
            best = -float(res.fun)
            if best < 0:
                return 1.0 + min(1.0, -best)
            upper = res.x
        return float(brentq(h, 0.0, upper, xtol=1e-15))

    starts = [np.concatenate([np.eye(r)[i], np.zeros(r - 1)]) for i in range(r)]
    rng = np.random.default_rng(opts.seed)
    starts += [rng.normal(size=2 * r - 1) for _ in range(opts.n_random_starts if r > 1 else 0)]
    def local_search(c0: np.ndarray) -> tuple[float, np.ndarray, bool, int]:
        if r == 1:
            return min_weight(c0), c0, True, 1
        res = minimize(min_weight, c0, method="Nelder-Mead",
                       options={"xatol": opts.xatol, "fatol": opts.fatol,
                                "maxiter": opts.max_iterations, "maxfev": 4 * opts.max_iterations})
        return float(res.fun), res.x, bool(res.success), int(res.nit)

    best_c, best_mu, iterations, converged = None, np.inf, 0, True
    for c0 in starts:
        mu, c, ok, nit = local_search(c0)
        iterations += nit
        if mu < best_mu:
            best_mu, best_c, converged = mu, c, ok
    # a fresh simplex around the incumbent recovers from collapsed simplices
    for _ in range(opts.n_restarts):
        mu, c, ok, nit = local_search(best_c)
        iterations += nit
        improved = mu < best_mu - opts.fatol
        if mu <= best_mu:
            best_mu, best_c = mu, c
        converged = ok
        if not improved and ok:
            break
    feasible = best_mu <= 1.0
    psi = psi_of(best_c)
    mu = min(best_mu, 1.0)
    if mu > 1.0 - 1e-9:
        mu = 1.0
    rho_sep = None
    if feasible and mu < 1.0:
        rho_sep = (rho - mu * np.outer(psi, psi.conj())) / (1.0 - mu)
    residual = 0.0 if rho_sep is None else max(0.0, -np.linalg.eigvalsh(partial_transpose_4(rho_sep))[0],
                                                -np.linalg.eigvalsh(rho_sep)[0])
    converged = converged and feasible and residual < opts.certificate_tol
    return LSResult(1.0 - mu, mu * schmidt_entropy(psi), psi, rho_sep, converged,
                    iterations, float(residual))
