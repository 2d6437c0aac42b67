"""Two-mode Gaussian states: moment transformation, PPT separability, closed-form thresholds.

Quadratures are ordered ``(x1, p1, x2, p2)`` with ``a = (x + i p) / sqrt(2)``,
so the vacuum covariance is ``I / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionError, DivergenceError, DomainError, InvalidDeviceError, InvalidStateError
from .errors import SingularThresholdError
from .fock_space import DensityOperator, annihilation, mode_operator
from .fourport import DeviceSpec

CONVENTION = "xpxp, vacuum variance 1/2 (hbar = 1)"
PHYSICAL_FLOOR = -1e-10
SEPARABILITY_TOL = 1e-12


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray
    convention: str = CONVENTION

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.size % 2 or cov.shape != (mean.size, mean.size):
            raise DimensionError(f"mean of length {mean.size} does not match cov of shape {cov.shape}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise InvalidStateError("covariance matrix is not symmetric")
        cov = 0.5 * (cov + cov.T)
        lowest = np.linalg.eigvalsh(cov + 0.5j * symplectic_form(mean.size // 2))[0]
        if lowest < PHYSICAL_FLOOR * max(1.0, np.max(np.abs(cov))):
            raise InvalidStateError(f"covariance violates the uncertainty principle (eigenvalue {lowest:.3e})")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(), "convention": self.convention}

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianState":
        return cls(np.array(data["mean"]), np.array(data["cov"]), data.get("convention", CONVENTION))


def vacuum_state(n_modes: int = 2) -> GaussianState:
    return GaussianState(np.zeros(2 * n_modes), 0.5 * np.eye(2 * n_modes))


def tmsv_covariance(zeta: float) -> GaussianState:
    ch, sh = np.cosh(2 * zeta), np.sinh(2 * zeta)
    Z = np.diag([1.0, -1.0])
    cov = 0.5 * np.block([[ch * np.eye(2), sh * Z], [sh * Z, ch * np.eye(2)]])
    return GaussianState(np.zeros(4), cov)


def symplectic_eigenvalues(cov: np.ndarray) -> np.ndarray:
    """Ascending symplectic eigenvalues: moduli of the eigenvalues of ``Omega @ cov``, one per pair."""
    n = cov.shape[0] // 2
    ev = np.sort(np.abs(np.linalg.eigvals(symplectic_form(n) @ cov).imag))
    return ev[::2]


def partial_transpose(g: GaussianState, mode: int = 1) -> GaussianState:
    """Momentum sign flip on ``mode``; the result need not be a physical state."""
    flip = np.ones(2 * g.n_modes)
    flip[2 * mode + 1] = -1.0
    obj = object.__new__(GaussianState)
    object.__setattr__(obj, "mean", g.mean * flip)
    object.__setattr__(obj, "cov", g.cov * np.outer(flip, flip))
    object.__setattr__(obj, "convention", g.convention)
    return obj


@dataclass(frozen=True)
class SeparabilityResult:
    entangled: bool
    nu_min: float
    margin: float

    @property
    def separable(self) -> bool:
        return not self.entangled


def is_separable_ppt(g: GaussianState) -> SeparabilityResult:
    """Smallest partial-transpose symplectic eigenvalue test; entangled iff it is below 1/2."""
    if g.n_modes != 2:
        raise DomainError(f"PPT test is implemented for two-mode states, got {g.n_modes}")
    nu = float(symplectic_eigenvalues(partial_transpose(g).cov)[0])
    margin = nu - 0.5
    return SeparabilityResult(margin < -SEPARABILITY_TOL, nu, margin)


def realify(M: np.ndarray) -> np.ndarray:
    """Real xpxp representation of ``a -> M a``."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    out = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            z = M[i, j]
            out[2 * i:2 * i + 2, 2 * j:2 * j + 2] = [[z.real, -z.imag], [z.imag, z.real]]
    return out


@dataclass(frozen=True)
class ScalarDevice:
    """Single-mode device: transmission ``T``, unused-port reflection ``R``, device noise ``n_th``."""

    T: complex
    sigma: int = 1
    n_th: float = 0.0
    R: complex = 0.0

    def __post_init__(self) -> None:
        if self.sigma not in (1, -1):
            raise InvalidDeviceError(f"sigma must be +1 or -1, got {self.sigma}")
        if not self.n_th >= 0:
            raise InvalidDeviceError(f"n_th must be >= 0, got {self.n_th}")
        if self.absorption_weight < -1e-12:
            raise InvalidDeviceError(
                f"|T|^2 + |R|^2 = {abs(self.T)**2 + abs(self.R)**2:.6g} is inconsistent with sigma={self.sigma}"
            )

    @property
    def absorption_weight(self) -> float:
        """``|A|^2 = sigma (1 - |R|^2 - |T|^2)``."""
        return self.sigma * (1.0 - abs(self.R) ** 2 - abs(self.T) ** 2)

    @property
    def added_noise(self) -> float:
        return 0.5 * abs(self.R) ** 2 + max(self.absorption_weight, 0.0) * (self.n_th + 0.5)


def transform_moments(g: GaussianState, dev1: ScalarDevice, dev2: ScalarDevice) -> GaussianState:
    """Send mode ``i`` of a two-mode state through ``dev_i`` (phase-insensitive loss or gain)."""
    if g.n_modes != 2:
        raise DimensionError("transform_moments acts on two-mode states")
    S = realify(np.diag([dev1.T, dev2.T]))
    noise = np.diag(np.repeat([dev1.added_noise, dev2.added_noise], 2))
    return GaussianState(S @ g.mean, S @ g.cov @ S.T + noise, g.convention)


def transform_moments_device(g: GaussianState, spec: DeviceSpec) -> GaussianState:
    """General 2x2 device: ``cov -> R(T) cov R(T)^T + (n_th + 1/2) R(A A^+)``."""
    if g.n_modes != 2:
        raise DimensionError("transform_moments_device acts on two-mode states")
    S = realify(spec.T)
    noise = (spec.n_th + 0.5) * realify(spec.A @ spec.A.conj().T)
    cov = S @ g.cov @ S.T + noise
    return GaussianState(S @ g.mean, 0.5 * (cov + cov.T), g.convention)


def moments_from_density(rho: DensityOperator) -> GaussianState:
    """First and second quadrature moments of a Fock-space state.

    Uses only normally ordered products of lowering operators, which are exact
    on a truncated space.
    """
    layout = rho.layout
    mat = rho.normalized_matrix()
    a = [mode_operator(layout, m, annihilation(c)) for m, c in enumerate(layout.cutoffs)]
    n = layout.n_modes
    alpha = np.array([np.trace(mat @ ai) for ai in a])
    Mm = np.array([[np.trace(mat @ ai @ aj) for aj in a] for ai in a])
    Nn = np.array([[np.trace(aj @ mat @ ai.conj().T) for aj in a] for ai in a])  # <a_i^+ a_j>
    second = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(n):
            d = 0.5 if i == j else 0.0
            second[2 * i, 2 * j] = (Mm[i, j] + Nn[i, j]).real + d
            second[2 * i + 1, 2 * j + 1] = (-Mm[i, j] + Nn[i, j]).real + d
            second[2 * i, 2 * j + 1] = (Mm[i, j] + Nn[i, j]).imag
            second[2 * j + 1, 2 * i] = second[2 * i, 2 * j + 1]
    mean = np.sqrt(2) * np.ravel(np.column_stack([alpha.real, alpha.imag]))
    cov = second - np.outer(mean, mean)
    return GaussianState(mean, 0.5 * (cov + cov.T))


@dataclass(frozen=True)
class ThresholdInputs:
    zeta: float
    T: complex
    R: complex = 0.0
    n_th: float = 0.0
    sigma: int = 1

    def __post_init__(self) -> None:
        if self.sigma not in (1, -1):
            raise DomainError(f"sigma must be +1 or -1, got {self.sigma}")
        if self.sigma == 1 and abs(self.R) ** 2 + abs(self.T) ** 2 > 1 + 1e-12:
            raise DomainError("absorbing device needs |R|^2 + |T|^2 <= 1")


def nth_threshold(inp: ThresholdInputs) -> float:
    """Thermal occupation above which the transmitted TMSV becomes separable."""
    r2, t2, s = abs(inp.R) ** 2, abs(inp.T) ** 2, inp.sigma
    den = 2 * s * (1 - r2 - t2)
    if abs(den) < 1e-15:
        raise SingularThresholdError("1 - |R|^2 - |T|^2 = 0: no device noise, threshold undefined")
    num = (1 - s) * (1 - r2) + t2 * (s - np.exp(-2 * abs(inp.zeta)))
    return float(num / den)


def lmax_fiber(zeta: float, n_th: float) -> float:
    """Largest ``l/L`` for which a TMSV sent through two equal lossy fibers stays entangled."""
    if n_th < 0:
        raise DomainError(f"n_th must be >= 0, got {n_th}")
    if n_th == 0:
        raise DivergenceError("n_th = 0: the TMSV stays entangled at every finite fiber length")
    if np.isinf(n_th):
        return 0.0
    return float(0.5 * np.log1p((1 - np.exp(-2 * abs(zeta))) / (2 * n_th)))


def max_gain(zeta: float, R: complex = 0.0) -> tuple[float, float]:
    """``(|T_max|^2, g_max)`` for a zero-temperature amplifier."""
    if abs(R) > 1:
        raise DomainError(f"|R| must be <= 1, got {abs(R)}")
    t2 = 2 * (1 - abs(R) ** 2) / (1 + np.exp(-2 * abs(zeta)))
    return float(t2), float(t2 - 1)


def tmsv_margin(zeta: float, dev: ScalarDevice) -> float:
    """PPT margin of a TMSV after both modes pass through copies of ``dev``."""
    return is_separable_ppt(transform_moments(tmsv_covariance(zeta), dev, dev)).margin


def fiber_margin(zeta: float, n_th: float, l_over_L: float, R: complex = 0.0) -> float:
    return tmsv_margin(zeta, ScalarDevice(np.exp(-l_over_L), 1, n_th, R))


def amplifier_margin(zeta: float, t_sq: float, n_th: float = 0.0, R: complex = 0.0) -> float:
    return tmsv_margin(zeta, ScalarDevice(np.sqrt(t_sq), -1, n_th, R))


def margin_crossing(margin: Callable[[float], float], grid: Sequence[float],
                    tol: float = SEPARABILITY_TOL) -> float | None:
    """First point along ``grid`` where the PPT margin reaches zero from below.

    Returns ``grid[0]`` when the state is already separable there and ``None``
    when it stays entangled over the whole grid.
    """
    grid = np.asarray(grid, dtype=float)
    values = [margin(x) for x in grid]
    if values[0] >= -tol:
        return float(grid[0])
    for i in range(1, len(grid)):
        if values[i] >= 0:
            if values[i] == 0:
                return float(grid[i])
            return float(brentq(margin, grid[i - 1], grid[i], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    return None
