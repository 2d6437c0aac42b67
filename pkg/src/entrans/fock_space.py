"""Truncated multimode Fock space: layouts, states, and elementary operator algebra.

Basis enumeration is row-major over occupation tuples with the last mode
varying fastest, i.e. the index of ``|n_1 n_2 ... n_M>`` is the C-order
ravel of ``(n_1, ..., n_M)`` over the shape ``(cutoff_1 + 1, ..., cutoff_M + 1)``.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, InvalidStateError

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
EIGENVALUE_FLOOR = -1e-10
TRACE_TOL = 1e-10
LEAKAGE_WARN_LIMIT = 1e-4


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class ModeLayout:
    """Per-mode photon-number cutoffs; mode ``m`` has dimension ``cutoffs[m] + 1``."""

    cutoffs: tuple[int, ...]

    def __post_init__(self) -> None:
        cutoffs = tuple(int(c) for c in self.cutoffs)
        if not cutoffs:
            raise DimensionError("layout needs at least one mode")
        if any(c < 1 for c in cutoffs):
            raise DimensionError(f"every cutoff must be >= 1, got {cutoffs}")
        object.__setattr__(self, "cutoffs", cutoffs)

    @property
    def n_modes(self) -> int:
        return len(self.cutoffs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, occupation: Sequence[int]) -> int:
        if len(occupation) != self.n_modes:
            raise DimensionError("occupation tuple has the wrong number of modes")
        for n, c in zip(occupation, self.cutoffs):
            if not 0 <= n <= c:
                raise DimensionError(f"occupation {tuple(occupation)} exceeds cutoffs {self.cutoffs}")
        return int(np.ravel_multi_index(tuple(occupation), self.dims))

    def occupation(self, index: int) -> tuple[int, ...]:
        return tuple(int(n) for n in np.unravel_index(index, self.dims))

    def occupations(self) -> np.ndarray:
        """All occupation tuples in basis order, shape ``(dim, n_modes)``."""
        grids = np.indices(self.dims).reshape(self.n_modes, -1)
        return grids.T

    def concat(self, other: "ModeLayout") -> "ModeLayout":
        return ModeLayout(self.cutoffs + other.cutoffs)

    def subset(self, modes: Iterable[int]) -> "ModeLayout":
        return ModeLayout(tuple(self.cutoffs[m] for m in modes))


@dataclass(frozen=True)
class FockState:
    layout: ModeLayout
    amplitudes: np.ndarray
    truncation_weight: float = 0.0

    def __post_init__(self) -> None:
        amps = _frozen(self.amplitudes).reshape(-1)
        if amps.size != self.layout.dim:
            raise DimensionError(f"expected {self.layout.dim} amplitudes, got {amps.size}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise InvalidStateError(f"state norm is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, layout: ModeLayout, amplitudes, truncation_weight: float = 0.0) -> "FockState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise InvalidStateError("cannot normalize the zero vector")
        return cls(layout, amps / norm, truncation_weight)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    def to_dict(self) -> dict:
        return {
            "cutoffs": list(self.layout.cutoffs),
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FockState":
        layout = ModeLayout(tuple(data["cutoffs"]))
        amps = np.array([complex(re, im) for re, im in data["amplitudes"]])
        return cls(layout, amps)


@dataclass(frozen=True)
class DensityOperator:
    """Density matrix on a truncated Fock space.

    ``truncated`` marks channel outputs computed at a finite cutoff; those may
    carry ``leakage`` (trace deficit).  Leakage below ``LEAKAGE_WARN_LIMIT``
    only warns, anything above is rejected.
    """

    layout: ModeLayout
    matrix: np.ndarray
    truncated: bool = False
    leakage: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        mat = _frozen(self.matrix)
        d = self.layout.dim
        if mat.shape != (d, d):
            raise DimensionError(f"expected a {d}x{d} matrix, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)
        self.validate()

    def validate(self) -> None:
        mat = self.matrix
        herm_err = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
        if herm_err > HERMITIAN_TOL:
            raise InvalidStateError(f"matrix is not Hermitian (max deviation {herm_err:.3g})")
        evals = np.linalg.eigvalsh(mat)
        if evals[0] < EIGENVALUE_FLOOR:
            raise InvalidStateError(f"negative eigenvalue {evals[0]:.3g}")
        deficit = abs(1.0 - np.trace(mat).real)
        if deficit > TRACE_TOL:
            if not self.truncated or deficit >= LEAKAGE_WARN_LIMIT:
                raise InvalidStateError(f"trace deviates from 1 by {deficit:.3g}")
            if deficit > self.leakage + TRACE_TOL:
                warnings.warn(f"truncated-channel output has trace deficit {deficit:.3g} "
                              f"beyond the reported leakage {self.leakage:.3g}", stacklevel=3)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def normalized_matrix(self) -> np.ndarray:
        return self.matrix / np.trace(self.matrix).real

    def tensor(self) -> np.ndarray:
        """Matrix reshaped to ``dims + dims`` (row indices first)."""
        return self.matrix.reshape(self.layout.dims * 2)

    def to_dict(self) -> dict:
        out = {
            "cutoffs": list(self.layout.cutoffs),
            "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in self.matrix],
        }
        if self.truncated:
            out["truncated"] = True
            out["leakage"] = float(self.leakage)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DensityOperator":
        layout = ModeLayout(tuple(data["cutoffs"]))
        mat = np.array([[complex(re, im) for re, im in row] for row in data["matrix"]])
        return cls(layout, mat, truncated=bool(data.get("truncated", False)),
                   leakage=float(data.get("leakage", 0.0)))


class BellKind(enum.Enum):
    PSI_PLUS = "psi+"
    PSI_MINUS = "psi-"
    PHI_PLUS = "phi+"
    PHI_MINUS = "phi-"

    @property
    def family(self) -> str:
        return "psi" if self in (BellKind.PSI_PLUS, BellKind.PSI_MINUS) else "phi"

    @property
    def sign(self) -> int:
        return 1 if self in (BellKind.PSI_PLUS, BellKind.PHI_PLUS) else -1


def _require_two_modes(layout: ModeLayout) -> None:
    if layout.n_modes != 2:
        raise DimensionError(f"expected a two-mode layout, got {layout.n_modes} modes")


def basis_state(layout: ModeLayout, occupation: Sequence[int]) -> FockState:
    amps = np.zeros(layout.dim, dtype=complex)
    amps[layout.index(occupation)] = 1.0
    return FockState(layout, amps)


def vacuum(layout: ModeLayout) -> DensityOperator:
    return basis_state(layout, (0,) * layout.n_modes).density()


def make_bell_state(kind: BellKind | str, layout: ModeLayout) -> FockState:
    """One-photon Bell states ``(|01> +- |10>)/sqrt2`` and ``(|00> +- |11>)/sqrt2``."""
    kind = BellKind(kind)
    _require_two_modes(layout)
    amps = np.zeros(layout.dim, dtype=complex)
    first, second = ((0, 1), (1, 0)) if kind.family == "psi" else ((0, 0), (1, 1))
    amps[layout.index(first)] = 1 / np.sqrt(2)
    amps[layout.index(second)] = kind.sign / np.sqrt(2)
    return FockState(layout, amps)


def make_tmsv(q: float, layout: ModeLayout) -> FockState:
    """Two-mode squeezed vacuum ``sqrt(1-q^2) sum_n q^n |nn>`` truncated at the smaller cutoff.

    The returned state is renormalized; the discarded weight ``q^(2(N+1))`` is
    stored in ``truncation_weight``.
    """
    _require_two_modes(layout)
    if not abs(q) < 1:
        raise DomainError(f"|q| must be < 1, got {q}")
    n_max = min(layout.cutoffs)
    n = np.arange(n_max + 1)
    coeffs = np.sqrt(1 - q**2) * q**n
    amps = np.zeros(layout.dim, dtype=complex)
    for k, c in zip(n, coeffs):
        amps[layout.index((k, k))] = c
    weight = float((q * q) ** (n_max + 1))
    return FockState.normalized(layout, amps, truncation_weight=weight)


def thermal_populations(n_th: float, cutoff: int) -> tuple[np.ndarray, float]:
    """Geometric photon distribution renormalized on ``0..cutoff``; returns (populations, lost weight)."""
    if n_th < 0:
        raise DomainError(f"thermal occupation must be >= 0, got {n_th}")
    if n_th == 0:
        pops = np.zeros(cutoff + 1)
        pops[0] = 1.0
        return pops, 0.0
    ratio = n_th / (n_th + 1)
    pops = ratio ** np.arange(cutoff + 1) / (n_th + 1)
    lost = float(ratio ** (cutoff + 1))
    return pops / pops.sum(), lost


def thermal_state(n_th: float, cutoff: int) -> DensityOperator:
    pops, _ = thermal_populations(n_th, cutoff)
    return DensityOperator(ModeLayout((cutoff,)), np.diag(pops))


def annihilation(cutoff: int) -> np.ndarray:
    """Single-mode lowering operator on ``0..cutoff``."""
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1).astype(complex)


def mode_operator(layout: ModeLayout, mode: int, op: np.ndarray) -> np.ndarray:
    """Embed a single-mode operator acting on ``mode`` into the full space."""
    out = np.ones((1, 1), dtype=complex)
    for m, d in enumerate(layout.dims):
        out = np.kron(out, op if m == mode else np.eye(d))
    return out


def tensor(a: DensityOperator, b: DensityOperator) -> DensityOperator:
    return DensityOperator(
        a.layout.concat(b.layout),
        np.kron(a.matrix, b.matrix),
        truncated=a.truncated or b.truncated,
    )


def partial_trace_matrix(matrix: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not in ``keep``; kept subsystems stay in ascending order."""
    dims = tuple(dims)
    n = len(dims)
    keep = sorted(set(keep))
    t = matrix.reshape(dims * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    rows = list(letters[:n])
    cols = [letters[n + i] if i in keep else rows[i] for i in range(n)]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    reduced = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    d = int(np.prod([dims[i] for i in keep]))
    return reduced.reshape(d, d)


def partial_trace(rho: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    keep = sorted(set(keep))
    if not keep:
        raise DomainError("keep set must be nonempty")
    if any(not 0 <= m < rho.layout.n_modes for m in keep):
        raise DomainError(f"mode indices {keep} out of range for {rho.layout.n_modes} modes")
    reduced = partial_trace_matrix(rho.matrix, rho.layout.dims, keep)
    reduced = 0.5 * (reduced + reduced.conj().T)
    return DensityOperator(rho.layout.subset(keep), reduced, truncated=rho.truncated,
                           leakage=rho.leakage)


def embed(rho: DensityOperator, cutoffs: Sequence[int]) -> np.ndarray:
    """Zero-pad (or crop) the density matrix to new per-mode cutoffs; returns a tensor."""
    src = rho.tensor()
    new_dims = tuple(c + 1 for c in cutoffs)
    out = np.zeros(new_dims * 2, dtype=complex)
    sl = tuple(slice(0, min(a, b)) for a, b in zip(rho.layout.dims, new_dims))
    out[sl + sl] = src[sl + sl]
    return out
