"""Four-port device matrices and the Fock-space channel they induce.

A device is described by 2x2 transmission and absorption matrices ``T`` and
``A`` with ``T T^+ + sigma A A^+ = I``; ``sigma = +1`` absorbs (device
annihilation operators enter the output), ``sigma = -1`` amplifies (device
creation operators enter).

The channel is realised as a unitary dilation.  Writing ``T = U c W^+`` (SVD)
and ``A = U s V^+``, the 4x4 mode transformation factorises as

    Lambda = diag(U, U) . [[c, s], [-sigma s, c]] . diag(W^+, V^+)

so the field sees a passive unitary ``W^+``, two independent single-mode
dilations (a beam splitter ``exp(theta (a^+ d - a d^+))`` for absorption, a
two-mode squeezer ``exp(r (a^+ g^+ - a g))`` for amplification), and a passive
unitary ``U``.  ``V`` and the device-side ``U`` act only on the device modes:
``V`` leaves the isotropic thermal device state unchanged and the final
device rotation disappears under the device trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import expm, logm

from .errors import DegenerateDeviceError, DimensionError, DomainError, InvalidDeviceError, TruncationError
from .fock_space import BellKind, DensityOperator, ModeLayout, embed, thermal_populations

DEFAULT_TOLERANCE = 1e-10
LEAKAGE_TOLERANCE = 1e-6
HEADROOM = 1e-6
_DEGENERATE = 1e-8


def _as_matrix(x) -> np.ndarray:
    m = np.array(x, dtype=complex)
    if m.shape != (2, 2):
        raise DimensionError(f"device matrices must be 2x2, got shape {m.shape}")
    m.setflags(write=False)
    return m


def _psd_sqrt(h: np.ndarray) -> np.ndarray:
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def j_form(sigma: int) -> np.ndarray:
    return np.diag([1.0, 1.0, float(sigma), float(sigma)]).astype(complex)


@dataclass(frozen=True)
class DeviceSpec:
    T: np.ndarray
    A: np.ndarray
    sigma: int = 1
    n_th: float = 0.0
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self) -> None:
        object.__setattr__(self, "T", _as_matrix(self.T))
        object.__setattr__(self, "A", _as_matrix(self.A))
        if self.sigma not in (1, -1):
            raise InvalidDeviceError(f"sigma must be +1 or -1, got {self.sigma}")
        object.__setattr__(self, "sigma", int(self.sigma))
        if not self.n_th >= 0:
            raise InvalidDeviceError(f"n_th must be >= 0, got {self.n_th}")
        residual = conservation_residual(self)
        if residual > self.tolerance:
            raise InvalidDeviceError(
                f"T T^+ + sigma A A^+ = I violated: residual norm {residual:.3e} > {self.tolerance:.1e}"
            )

    @classmethod
    def from_transmission(cls, T, sigma: int = 1, n_th: float = 0.0,
                          tolerance: float = DEFAULT_TOLERANCE) -> "DeviceSpec":
        """Complete ``A = sqrt(sigma (I - T T^+))``; rejects T for which that is not PSD."""
        T = np.array(T, dtype=complex)
        if T.shape != (2, 2):
            raise DimensionError(f"T must be 2x2, got shape {T.shape}")
        if sigma not in (1, -1):
            raise InvalidDeviceError(f"sigma must be +1 or -1, got {sigma}")
        gram = sigma * (np.eye(2) - T @ T.conj().T)
        gram = 0.5 * (gram + gram.conj().T)
        lowest = np.linalg.eigvalsh(gram)[0]
        if lowest < -tolerance:
            kind = "absorbing" if sigma == 1 else "amplifying"
            raise InvalidDeviceError(f"T is not a valid {kind} transmission matrix "
                                     f"(sigma (I - T T^+) has eigenvalue {lowest:.3e})")
        return cls(T, _psd_sqrt(gram), sigma, n_th, tolerance)

    @classmethod
    def diagonal(cls, T1: complex, T2: complex, sigma: int = 1, n_th: float = 0.0) -> "DeviceSpec":
        """Two independent single-mode devices (no cross-talk)."""
        return cls.from_transmission(np.diag([T1, T2]), sigma, n_th)

    @property
    def is_diagonal(self) -> bool:
        return bool(abs(self.T[0, 1]) == 0 and abs(self.T[1, 0]) == 0)

    def to_dict(self) -> dict:
        enc = lambda m: [[[float(z.real), float(z.imag)] for z in row] for row in m]  # noqa: E731
        return {"sigma": self.sigma, "n_th": float(self.n_th), "T": enc(self.T), "A": enc(self.A)}

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceSpec":
        dec = lambda m: np.array([[complex(re, im) for re, im in row] for row in m])  # noqa: E731
        sigma = int(data.get("sigma", 1))
        n_th = float(data.get("n_th", 0.0))
        if "T" not in data:
            raise InvalidDeviceError("device spec needs a 'T' matrix")
        if data.get("A") is None:
            return cls.from_transmission(dec(data["T"]), sigma, n_th)
        return cls(dec(data["T"]), dec(data["A"]), sigma, n_th)


def conservation_residual(spec: DeviceSpec) -> float:
    r = spec.T @ spec.T.conj().T + spec.sigma * spec.A @ spec.A.conj().T - np.eye(2)
    return float(np.linalg.norm(r, 2))


def make_cs(spec: DeviceSpec) -> tuple[np.ndarray, np.ndarray]:
    C = _psd_sqrt(spec.T @ spec.T.conj().T)
    S = _psd_sqrt(spec.A @ spec.A.conj().T)
    residual = np.linalg.norm(C @ C + spec.sigma * S @ S - np.eye(2), 2)
    if residual > max(spec.tolerance, DEFAULT_TOLERANCE):
        raise InvalidDeviceError(f"C^2 + sigma S^2 = I violated: residual norm {residual:.3e}")
    return C, S


@dataclass(frozen=True)
class DeviceFactorization:
    """``T = U diag(c) W^+``, ``A = U diag(s) V^+`` with ``c^2 + sigma s^2 = 1``."""

    U: np.ndarray
    c: np.ndarray
    s: np.ndarray
    W: np.ndarray
    V: np.ndarray
    sigma: int
    diagonal: bool

    def lambda_matrix(self) -> np.ndarray:
        U, W, V = self.U, self.W, self.V
        c, s = np.diag(self.c), np.diag(self.s)
        return np.block([
            [U @ c @ W.conj().T, U @ s @ V.conj().T],
            [-self.sigma * U @ s @ W.conj().T, U @ c @ V.conj().T],
        ])


def _nearest_unitary(x: np.ndarray) -> np.ndarray:
    p, _, qh = np.linalg.svd(x)
    return p @ qh


def factorize(spec: DeviceSpec) -> DeviceFactorization:
    T = np.array(spec.T)
    if spec.is_diagonal:
        d = np.diag(T)
        c = np.abs(d)
        phases = np.where(c > 0, d / np.where(c > 0, c, 1.0), 1.0)
        U, W = np.diag(phases), np.eye(2, dtype=complex)
        diagonal = True
    else:
        U, c, Wh = np.linalg.svd(T)
        W = Wh.conj().T
        diagonal = False
    s = np.sqrt(np.clip(spec.sigma * (1.0 - c**2), 0.0, None))
    # rows of V^+ are (U^+ A)_i / s_i; rows with s_i ~ 0 are completed from U^+
    uha = U.conj().T @ spec.A
    vh = np.array(U.conj().T, dtype=complex)
    known = s > np.sqrt(_DEGENERATE)
    for i in range(2):
        if known[i]:
            vh[i] = uha[i] / s[i]
    if known.sum() == 1:
        i = int(np.flatnonzero(~known)[0])
        j = 1 - i
        row = vh[i] - np.vdot(vh[j], vh[i]) * vh[j]
        if np.linalg.norm(row) < 1e-6:
            row = np.array([-np.conj(vh[j, 1]), np.conj(vh[j, 0])])
        vh[i] = row / np.linalg.norm(row)
    V = _nearest_unitary(vh).conj().T
    return DeviceFactorization(U, c, s, W, V, spec.sigma, diagonal)


@dataclass(frozen=True)
class LambdaMatrix:
    matrix: np.ndarray
    sigma: int

    def j_residual(self) -> float:
        J = j_form(self.sigma)
        return float(np.linalg.norm(self.matrix @ J @ self.matrix.conj().T - J, 2))


def make_lambda(spec: DeviceSpec, strict: bool = False) -> LambdaMatrix:
    """Four-dimensional mode transformation ``[[T, A], [-sigma S C^-1 T, C S^-1 A]]``.

    When C or S is singular the block formula is undefined; with
    ``strict=False`` the continuous extension given by :func:`factorize` is
    returned instead (for ``A = 0`` this is ``diag(T, I)``).
    """
    C, S = make_cs(spec)
    singular = min(np.linalg.svd(C, compute_uv=False)[-1], np.linalg.svd(S, compute_uv=False)[-1])
    if singular > _DEGENERATE:
        lower_left = -spec.sigma * S @ np.linalg.solve(C, spec.T)
        lower_right = C @ np.linalg.solve(S, spec.A)
        lam = np.block([[spec.T, spec.A], [lower_left, lower_right]])
    elif strict:
        raise DegenerateDeviceError(f"C or S is singular (smallest singular value {singular:.3e})")
    else:
        lam = factorize(spec).lambda_matrix()
    return LambdaMatrix(lam, spec.sigma)


@dataclass(frozen=True)
class FiberSpec:
    """Lambert-Beer fiber: ``l_over_L`` propagation over absorption length, phase ``n_R * k0l``."""

    l_over_L: float
    n_R: float = 1.0
    k0l: float = 0.0

    @property
    def phase(self) -> float:
        return self.n_R * self.k0l


def fiber_transmission(f: FiberSpec) -> complex:
    if f.l_over_L < 0:
        raise DomainError(f"l/L must be >= 0, got {f.l_over_L}")
    return complex(np.exp(1j * f.phase) * np.exp(-f.l_over_L))


# --- Fock-space realisation -------------------------------------------------

def _beam_splitter_sector(theta: float, total: int) -> np.ndarray:
    """``exp(theta (a^+ d - a d^+))`` on ``|j, total-j>``, indexed by field count j."""
    j = np.arange(total)
    up = np.sqrt((j + 1.0) * (total - j))
    gen = np.zeros((total + 1, total + 1))
    gen[j + 1, j] = up
    gen[j, j + 1] = -up
    return expm(theta * gen)


def _squeezer_element(m: int, e: int, n: int, k: int, log_gamma: float, log_cosh: float) -> float:
    """``<m, e| exp(r (a^+ g^+ - a g)) |n, k>`` via normal-ordered disentangling."""
    total = 0.0
    base = 0.5 * (math.lgamma(n + 1) + math.lgamma(k + 1) + math.lgamma(m + 1) + math.lgamma(e + 1))
    for j in range(max(0, n - m), min(n, k) + 1):
        l = m - n + j
        log_term = ((j + l) * log_gamma - math.lgamma(j + 1) - math.lgamma(l + 1) + base
                    - math.lgamma(n - j + 1) - math.lgamma(k - j + 1) - (n + k - 2 * j + 1) * log_cosh)
        total += (-1) ** j * math.exp(log_term)
    return total


@lru_cache(maxsize=64)
def _mode_transfer(c: float, sigma: int, n_in: int, n_out: int, n_dev: int) -> np.ndarray:
    """Dilation amplitudes ``K[m, e, n, k] = <m_field, e_dev| U |n_field, k_dev>``."""
    if sigma == 1:
        theta = math.acos(min(max(c, 0.0), 1.0))
        K = np.zeros((n_out + 1, n_in + n_dev + 1, n_in + 1, n_dev + 1))
        for total in range(n_in + n_dev + 1):
            block = _beam_splitter_sector(theta, total)
            for n in range(max(0, total - n_dev), min(total, n_in) + 1):
                k = total - n
                for m in range(min(total, n_out) + 1):
                    K[m, total - m, n, k] = block[m, n]
        K.setflags(write=False)
        return K
    K = np.zeros((n_out + 1, n_out + n_dev + 1, n_in + 1, n_dev + 1))
    if c <= 1.0:
        for n in range(min(n_in, n_out) + 1):
            for k in range(n_dev + 1):
                K[n, k, n, k] = 1.0
        K.setflags(write=False)
        return K
    r = math.acosh(c)
    log_gamma, log_cosh = math.log(math.tanh(r)), math.log(c)
    for n in range(n_in + 1):
        for k in range(n_dev + 1):
            for m in range(n_out + 1):
                e = m - n + k
                if e >= 0:
                    K[m, e, n, k] = _squeezer_element(m, e, n, k, log_gamma, log_cosh)
    K.setflags(write=False)
    return K


def mode_superoperator(c: float, sigma: int, n_th: float, n_in: int, n_out: int,
                       device_cutoff: int) -> tuple[np.ndarray, float]:
    """Single-mode channel ``E[a, a', b, b']`` mapping ``rho[b, b']`` to ``out[a, a']``.

    Returns the superoperator and the device thermal weight lost to ``device_cutoff``.
    """
    pops, lost = thermal_populations(n_th, device_cutoff)
    K = _mode_transfer(round(float(c), 15), sigma, n_in, n_out, device_cutoff)
    E = np.zeros((n_out + 1,) * 2 + (n_in + 1,) * 2, dtype=complex)
    for k, p in enumerate(pops):
        if p == 0.0:
            continue
        Kk = K[:, :, :, k]
        E += p * np.einsum("aeb,ced->acbd", Kk, Kk, optimize=True)
    return E, lost


def apply_mode_superoperator(rho: np.ndarray, E: np.ndarray, mode: int) -> np.ndarray:
    """Apply ``E`` to ``mode`` of a two-mode density tensor ``rho[i1, i2, j1, j2]``."""
    if mode == 0:
        return np.einsum("acbd,bxdy->axcy", E, rho, optimize=True)
    return np.einsum("acbd,xbyd->xayc", E, rho, optimize=True)


def passive_fock_unitary(W: np.ndarray, cutoff: int) -> np.ndarray:
    """Two-mode passive unitary with Heisenberg action ``a -> W a``, on sectors ``n1 + n2 <= cutoff``.

    Built as ``exp(-i a^+ h a)`` with ``h = i log W``; components with more
    than ``cutoff`` photons in total are dropped.
    """
    h = 1j * logm(np.asarray(W, dtype=complex))
    h = 0.5 * (h + h.conj().T)
    d = cutoff + 1
    out = np.zeros((d * d, d * d), dtype=complex)
    for total in range(cutoff + 1):
        n1 = np.arange(total + 1)
        n2 = total - n1
        H = np.diag(h[0, 0] * n1 + h[1, 1] * n2).astype(complex)
        hop = np.sqrt((n1[:-1] + 1.0) * n2[:-1])  # a1^+ a2 : |n1, n2> -> |n1 + 1, n2 - 1>
        H[n1[1:], n1[:-1]] += h[0, 1] * hop
        H[n1[:-1], n1[1:]] += h[1, 0] * hop
        U = expm(-1j * H)
        idx = n1 * d + n2
        out[np.ix_(idx, idx)] = U
    return out


def _default_out_cutoffs(rho_in: DensityOperator, spec: DeviceSpec) -> tuple[int, int]:
    cut = rho_in.layout.cutoffs
    if spec.sigma == 1 and spec.n_th == 0 and not spec.is_diagonal:
        return (sum(cut),) * 2
    return (cut[0], cut[1])


def apply_channel(rho_in: DensityOperator, spec: DeviceSpec, device_cutoff: int = 0,
                  field_cutoffs: Sequence[int] | None = None,
                  tolerance: float = LEAKAGE_TOLERANCE) -> DensityOperator:
    """Transmit a two-mode field state through the device and trace out the device.

    The device modes start in a thermal state with occupation ``spec.n_th``
    (truncated at ``device_cutoff``).  The result is flagged as truncated and
    carries the total probability weight lost to finite cutoffs in ``leakage``.
    """
    if rho_in.layout.n_modes != 2:
        raise DimensionError(f"four-port devices act on 2 field modes, got {rho_in.layout.n_modes}")
    if device_cutoff < 0:
        raise DomainError("device_cutoff must be >= 0")
    out_cut = tuple(int(c) for c in (field_cutoffs or _default_out_cutoffs(rho_in, spec)))
    if len(out_cut) != 2 or min(out_cut) < 1:
        raise DimensionError(f"field_cutoffs must be two integers >= 1, got {field_cutoffs}")
    fac = factorize(spec)
    in_cut = rho_in.layout.cutoffs
    dev_lost = 0.0

    if fac.diagonal:
        state = rho_in.tensor()
        for mode in range(2):
            E, lost = mode_superoperator(fac.c[mode], spec.sigma, spec.n_th, in_cut[mode],
                                         out_cut[mode], device_cutoff)
            dev_lost = 1 - (1 - dev_lost) * (1 - lost)
            state = apply_mode_superoperator(state, E, mode)
        ph = [np.diag(fac.U)[m] ** np.arange(out_cut[m] + 1) for m in range(2)]
        state = np.einsum("a,b,c,d,abcd->abcd", ph[0], ph[1], ph[0].conj(), ph[1].conj(), state)
    else:
        # passive stages conserve photon number, so sectors up to the input budget
        # (or the output budget, when the device can add photons) are kept exactly
        number_nonincreasing = spec.sigma == 1 and spec.n_th == 0
        M = sum(in_cut) if number_nonincreasing else max(sum(in_cut), sum(out_cut))
        d = M + 1
        state = embed(rho_in, (M, M)).reshape(d * d, d * d)
        P = passive_fock_unitary(fac.W.conj().T, M)
        state = (P @ state @ P.conj().T).reshape(d, d, d, d)
        for mode in range(2):
            E, lost = mode_superoperator(fac.c[mode], spec.sigma, spec.n_th, M, M, device_cutoff)
            dev_lost = 1 - (1 - dev_lost) * (1 - lost)
            state = apply_mode_superoperator(state, E, mode)
        P = passive_fock_unitary(fac.U, M)
        state = (P @ state.reshape(d * d, d * d) @ P.conj().T).reshape(d, d, d, d)
        keep = (slice(0, out_cut[0] + 1), slice(0, out_cut[1] + 1))
        state = state[keep + keep]

    dim = (out_cut[0] + 1) * (out_cut[1] + 1)
    mat = state.reshape(dim, dim)
    mat = 0.5 * (mat + mat.conj().T)
    trace = float(np.trace(mat).real)
    leakage = max(0.0, 1.0 - trace) + dev_lost + rho_in.leakage
    if leakage > tolerance:
        raise TruncationError(
            f"leakage {leakage:.3e} exceeds tolerance {tolerance:.1e}; "
            f"increase field cutoffs (now {out_cut}) or device cutoff (now {device_cutoff})"
        )
    if spec.sigma == -1:
        pops = np.real(np.diag(mat)).reshape(out_cut[0] + 1, out_cut[1] + 1)
        top = max(pops[-1, :].sum(), pops[:, -1].sum())
        if top > HEADROOM * trace:
            raise TruncationError(
                f"top Fock level holds {top:.3e} of the population; increase field cutoffs (now {out_cut})"
            )
    return DensityOperator(ModeLayout(out_cut), mat, truncated=True, leakage=leakage)


def bell_output_closed_form(kind: BellKind | str, T1: complex, T2: complex) -> np.ndarray:
    """Output of Bell states through two independent absorbing fibers, basis ``00, 01, 10, 11``."""
    kind = BellKind(kind)
    sgn = kind.sign
    a1, a2 = abs(T1) ** 2, abs(T2) ** 2
    rho = np.zeros((4, 4), dtype=complex)
    if kind.family == "psi":
        rho[0, 0] = 0.5 * (2 - a1 - a2)
        v = np.array([0, T2, sgn * T1, 0]) / np.sqrt(2)
    else:
        rho[0, 0] = 0.5 * (1 - a1) * (1 - a2)
        rho[2, 2] = 0.5 * a1 * (1 - a2)
        rho[1, 1] = 0.5 * a2 * (1 - a1)
        v = np.array([1, 0, 0, sgn * T1 * T2]) / np.sqrt(2)
    return rho + np.outer(v, v.conj())
