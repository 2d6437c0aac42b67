"""Entanglement measures, the closed-form Bell-state bounds, and the monotonicity check.

All values are in nats.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, MonotonicityViolation, UnsupportedDimensionError
from .fock_space import BellKind, DensityOperator, FockState
from .fourport import DeviceSpec, apply_channel
from .ppt_optimizer import (
    LSOptions,
    REEOptions,
    best_separable_approximation,
    partial_transpose_4,
    ppt_relative_entropy,
)

SUPPORT_TOL = 1e-12


class Measure(enum.Enum):
    REDUCED_ENTROPY = "reduced_entropy"
    NEGATIVITY = "negativity"
    LOG_NEGATIVITY = "log_negativity"
    RELATIVE_ENTROPY = "relative_entropy"
    LS_ENTANGLEMENT = "ls_entanglement"
    UPPER_BOUND = "upper_bound"


@dataclass(frozen=True)
class Bipartition:
    left: frozenset[int]
    right: frozenset[int]

    def __post_init__(self) -> None:
        left, right = frozenset(self.left), frozenset(self.right)
        if not left or not right:
            raise DomainError("both sides of a bipartition must be nonempty")
        if left & right:
            raise DomainError(f"bipartition sides overlap: {sorted(left & right)}")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @classmethod
    def of(cls, left: Iterable[int], right: Iterable[int]) -> "Bipartition":
        return cls(frozenset(left), frozenset(right))

    def check(self, n_modes: int) -> None:
        if self.left | self.right != frozenset(range(n_modes)):
            raise DomainError(f"bipartition {sorted(self.left)}|{sorted(self.right)} "
                              f"does not cover modes 0..{n_modes - 1}")

    @property
    def order(self) -> list[int]:
        return sorted(self.left) + sorted(self.right)


MODE_SPLIT = Bipartition.of([0], [1])


@dataclass(frozen=True)
class EntanglementReport:
    measure: Measure
    value: float
    converged: bool = True
    iterations: int = 0
    residual: float = 0.0
    details: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "measure": self.measure.value,
            "value": float(self.value),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
        }


def _bipartite(matrix: np.ndarray, dims: Sequence[int], cut: Bipartition) -> tuple[np.ndarray, int, int]:
    """Reorder subsystems to (left, right) and return the matrix with its side dimensions."""
    cut.check(len(dims))
    order = cut.order
    n = len(dims)
    t = matrix.reshape(tuple(dims) * 2).transpose(order + [n + i for i in order])
    d_left = int(np.prod([dims[i] for i in sorted(cut.left)]))
    d_right = int(np.prod([dims[i] for i in sorted(cut.right)]))
    return t.reshape(d_left * d_right, d_left * d_right), d_left, d_right


def _entropy(p: np.ndarray) -> float:
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def von_neumann_entropy(matrix: np.ndarray) -> float:
    return _entropy(np.clip(np.linalg.eigvalsh(matrix), 0.0, None))


def reduced_entropy(psi: FockState, cut: Bipartition = MODE_SPLIT) -> EntanglementReport:
    dims = psi.layout.dims
    cut.check(len(dims))
    t = psi.amplitudes.reshape(dims).transpose(cut.order)
    d_left = int(np.prod([dims[i] for i in sorted(cut.left)]))
    sv = np.linalg.svd(t.reshape(d_left, -1), compute_uv=False)
    return EntanglementReport(Measure.REDUCED_ENTROPY, _entropy(sv**2))


def _partial_transpose(matrix: np.ndarray, d_left: int, d_right: int) -> np.ndarray:
    return matrix.reshape(d_left, d_right, d_left, d_right).transpose(0, 3, 2, 1).reshape(
        d_left * d_right, d_left * d_right)


def negativity(rho: DensityOperator, cut: Bipartition = MODE_SPLIT) -> EntanglementReport:
    """Sum of the moduli of the negative eigenvalues of the partial transpose over ``cut.right``."""
    mat, dl, dr = _bipartite(rho.normalized_matrix(), rho.layout.dims, cut)
    ev = np.linalg.eigvalsh(_partial_transpose(mat, dl, dr))
    return EntanglementReport(Measure.NEGATIVITY, float(-ev[ev < 0].sum()))


def log_negativity(rho: DensityOperator, cut: Bipartition = MODE_SPLIT) -> EntanglementReport:
    n = negativity(rho, cut).value
    return EntanglementReport(Measure.LOG_NEGATIVITY, float(np.log1p(2 * n)))


def _local_support(reduced: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (reduced + reduced.conj().T))
    keep = w > SUPPORT_TOL
    if keep.sum() > 2:
        raise UnsupportedDimensionError(
            f"state has local support of dimension {int(keep.sum())}; only 2x2 sectors are supported"
        )
    basis = v[:, keep]
    # pad to a qubit with any orthogonal direction
    for j in range(v.shape[1] - 1, -1, -1):
        if basis.shape[1] == 2:
            break
        if not keep[j]:
            basis = np.column_stack([basis, v[:, j]])
    return basis


def qubit_sector(rho: DensityOperator, cut: Bipartition = MODE_SPLIT) -> np.ndarray:
    """Compress a state whose local supports are at most two-dimensional onto 2x2.

    The compression is a local isometry, so entanglement measures are unchanged.
    """
    mat, dl, dr = _bipartite(rho.normalized_matrix(), rho.layout.dims, cut)
    t = mat.reshape(dl, dr, dl, dr)
    left = _local_support(np.einsum("ajbj->ab", t))
    right = _local_support(np.einsum("iaib->ab", t))
    iso = np.kron(left, right)
    out = iso.conj().T @ mat @ iso
    return 0.5 * (out + out.conj().T)


def relative_entropy_entanglement(rho: DensityOperator, cut: Bipartition = MODE_SPLIT,
                                  opts: REEOptions | None = None) -> EntanglementReport:
    """Relative entropy of entanglement with respect to PPT (= separable) states on a 2x2 sector."""
    res = ppt_relative_entropy(qubit_sector(rho, cut), opts)
    return EntanglementReport(Measure.RELATIVE_ENTROPY, res.value, res.converged, res.iterations,
                              res.residual, details={"closest_separable": res.sigma})


@dataclass(frozen=True)
class LSDecomposition:
    lambda_max: float
    E_exact: float
    report: EntanglementReport
    psi: np.ndarray | None
    rho_sep: np.ndarray | None


def lewenstein_sanpera(rho: DensityOperator, cut: Bipartition = MODE_SPLIT,
                       opts: LSOptions | None = None) -> LSDecomposition:
    """Best separable approximation ``rho = lambda rho_sep + (1 - lambda) |psi><psi|``.

    ``E_exact = (1 - lambda_max) * S(psi)``.  ``rho_sep`` (in the compressed 2x2
    sector) certifies achievability; it is PPT, hence separable.
    """
    res = best_separable_approximation(qubit_sector(rho, cut), opts)
    report = EntanglementReport(Measure.LS_ENTANGLEMENT, res.E_exact, res.converged, res.iterations,
                                res.residual)
    return LSDecomposition(res.lambda_max, res.E_exact, report, res.psi, res.rho_sep)


def bell_output_bound(kind: BellKind | str, t_sq: float) -> float:
    """Convexity upper bound on the entanglement of a Bell state after two equal absorbing fibers."""
    family = kind.family if isinstance(kind, BellKind) else str(kind).lower().rstrip("+-")
    if not 0.0 <= t_sq <= 1.0:
        raise DomainError(f"|T|^2 must lie in [0, 1], got {t_sq}")
    if family == "psi":
        return float(t_sq * np.log(2))
    if family == "phi":
        xlogx = t_sq * np.log(t_sq) if t_sq > 0 else 0.0
        return float(0.5 * ((1 + t_sq) * np.log1p(t_sq) - xlogx))
    raise DomainError(f"unknown Bell family {kind!r}")


def measure_entanglement(rho: DensityOperator, measure: Measure | str,
                         cut: Bipartition = MODE_SPLIT) -> EntanglementReport:
    measure = Measure(measure)
    if measure is Measure.NEGATIVITY:
        return negativity(rho, cut)
    if measure is Measure.LOG_NEGATIVITY:
        return log_negativity(rho, cut)
    if measure is Measure.RELATIVE_ENTROPY:
        return relative_entropy_entanglement(rho, cut)
    if measure is Measure.LS_ENTANGLEMENT:
        return lewenstein_sanpera(rho, cut).report
    raise DomainError(f"measure {measure.value} cannot be evaluated on a density operator")


MONOTONICITY_TOL = {Measure.NEGATIVITY: 1e-8, Measure.LOG_NEGATIVITY: 1e-8, Measure.RELATIVE_ENTROPY: 1e-4}


def monotonicity_check(rho_in: DensityOperator, spec: DeviceSpec, measure: Measure | str,
                       device_cutoff: int = 0, field_cutoffs: Sequence[int] | None = None,
                       cut: Bipartition = MODE_SPLIT, tol: float | None = None) -> tuple[float, float]:
    """Entanglement before and after the channel; raises if it increased.

    Two independent fibers are a diagonal ``spec`` (see ``DeviceSpec.diagonal``).
    A mode-mixing ``T`` acts across the cut and may create entanglement, so it is rejected.
    """
    if not spec.is_diagonal:
        raise DomainError("monotonicity needs a local channel: T must be diagonal (one device per mode)")
    measure = Measure(measure)
    if measure not in MONOTONICITY_TOL:
        raise DomainError(f"monotonicity is checked for negativity or relative entropy, not {measure.value}")
    tol = MONOTONICITY_TOL[measure] if tol is None else tol
    rho_out = apply_channel(rho_in, spec, device_cutoff, field_cutoffs)
    e_in = measure_entanglement(rho_in, measure, cut).value
    e_out = measure_entanglement(rho_out, measure, cut).value
    if e_out > e_in + tol:
        raise MonotonicityViolation(f"{measure.value} increased from {e_in:.12g} to {e_out:.12g}")
    return e_in, e_out


__all__ = [
    "Bipartition", "EntanglementReport", "LSDecomposition", "LSOptions", "MODE_SPLIT", "Measure",
    "REEOptions", "bell_output_bound", "lewenstein_sanpera", "log_negativity", "measure_entanglement",
    "monotonicity_check", "negativity", "partial_transpose_4", "qubit_sector", "reduced_entropy",
    "relative_entropy_entanglement", "von_neumann_entropy",
]
