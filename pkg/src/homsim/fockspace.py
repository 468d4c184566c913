"""Exact algebra on a truncated two-mode Fock space.

States live on the basis |n_a, n_b> with 0 <= n_a, n_b <= cutoff, flattened
row-major in (n_a, n_b).  The beam splitter, normally-ordered moments,
fidelity and negativity are all computed exactly on this space; operators
never truncate silently (inputs whose image would overflow the cutoff raise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import json

import numpy as np
from scipy.linalg import expm

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIGENVALUE_FLOOR = -1e-9
NORM_TOL = 1e-12

DEFAULT_CUTOFF = 3


def _dim(cutoff: int) -> int:
    return (cutoff + 1) ** 2


@lru_cache(maxsize=None)
def lowering_operators(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation matrices (a, b) on the truncated two-mode space."""
    n = cutoff + 1
    a1 = np.diag(np.sqrt(np.arange(1, n)), k=1)
    eye = np.eye(n)
    a = np.kron(a1, eye)
    b = np.kron(eye, a1)
    return a, b


@lru_cache(maxsize=None)
def number_operators(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = lowering_operators(cutoff)
    return a.conj().T @ a, b.conj().T @ b


@lru_cache(maxsize=None)
def moment_operator(index: tuple[int, int, int, int], cutoff: int) -> np.ndarray:
    """Matrix of (a†)^n a^m (b†)^k b^l.

    Exact for bra/ket support within the cutoff: all annihilators act before
    any creator within each mode, so no intermediate state ever leaves the
    truncated space in a normally-ordered expectation value.
    """
    n, m, k, l = index
    a, b = lowering_operators(cutoff)
    ad, bd = a.conj().T, b.conj().T
    out = np.linalg.matrix_power(ad, n) @ np.linalg.matrix_power(a, m)
    out = out @ np.linalg.matrix_power(bd, k) @ np.linalg.matrix_power(b, l)
    return out


@dataclass(frozen=True)
class MomentIndex:
    """Exponents (n, m, k, l) of the normally-ordered product (a†)^n a^m (b†)^k b^l."""

    n: int
    m: int
    k: int
    l: int

    def __post_init__(self):
        for v in (self.n, self.m, self.k, self.l):
            if v < 0:
                raise ValueError(f"moment exponents must be non-negative, got {self}")

    @property
    def order(self) -> int:
        return self.n + self.m + self.k + self.l

    def conjugate_index(self) -> "MomentIndex":
        return MomentIndex(self.m, self.n, self.l, self.k)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.n, self.m, self.k, self.l)


@dataclass(frozen=True)
class BeamSplitterConfig:
    """Transmissivity and phase convention of the mixing unitary.

    The default 'symmetric' convention realizes a_out = (a + i b)/sqrt(2),
    b_out = (i a + b)/sqrt(2) at transmissivity 1/2.  The 'real' convention
    (a_out = cos a + sin b, b_out = -sin a + cos b) differs from it only by
    local phase rotations and is provided for cross-checks.
    """

    transmissivity: float = 0.5
    convention: str = "symmetric"

    def __post_init__(self):
        if not 0.0 <= self.transmissivity <= 1.0:
            raise ValueError(f"transmissivity must be in [0, 1], got {self.transmissivity}")
        if self.convention not in ("symmetric", "real"):
            raise ValueError(f"unknown phase convention {self.convention!r}")

    def unitary(self, cutoff: int) -> np.ndarray:
        return _beam_splitter_unitary(self.transmissivity, self.convention, cutoff)


@lru_cache(maxsize=None)
def _beam_splitter_unitary(transmissivity: float, convention: str, cutoff: int) -> np.ndarray:
    a, b = lowering_operators(cutoff)
    ad, bd = a.conj().T, b.conj().T
    theta = np.arccos(np.sqrt(transmissivity))
    if convention == "symmetric":
        # U† a U = cos(theta) a + i sin(theta) b
        gen = 1j * theta * (ad @ b + a @ bd)
    else:
        # U† a U = cos(theta) a + sin(theta) b
        gen = theta * (ad @ b - a @ bd)
    return expm(gen)


class TwoModeState:
    """Pure state over the truncated |n_a, n_b> basis (unit norm enforced)."""

    __slots__ = ("cutoff", "amplitudes")

    def __init__(self, amplitudes: np.ndarray, cutoff: int = DEFAULT_CUTOFF):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amps.size != _dim(cutoff):
            raise ValueError(
                f"amplitude vector has {amps.size} entries, expected {_dim(cutoff)} for cutoff {cutoff}"
            )
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"state norm² = {norm:.3e}, expected 1")
        # renormalize residual float error so invariants hold to 1e-12
        amps = amps / np.sqrt(norm)
        amps.setflags(write=False)
        object.__setattr__(self, "cutoff", cutoff)
        object.__setattr__(self, "amplitudes", amps)

    def __setattr__(self, name, value):
        raise AttributeError("TwoModeState is immutable")

    @classmethod
    def from_fock_dict(cls, terms: dict[tuple[int, int], complex], cutoff: int = DEFAULT_CUTOFF):
        amps = np.zeros(_dim(cutoff), dtype=complex)
        for (na, nb), c in terms.items():
            if not (0 <= na <= cutoff and 0 <= nb <= cutoff):
                raise ValueError(f"occupation ({na}, {nb}) outside cutoff {cutoff}")
            amps[na * (cutoff + 1) + nb] = c
        return cls(amps, cutoff)

    def amplitude(self, na: int, nb: int) -> complex:
        return complex(self.amplitudes[na * (self.cutoff + 1) + nb])

    def grid(self) -> np.ndarray:
        n = self.cutoff + 1
        return self.amplitudes.reshape(n, n)

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.cutoff)

    def overlap(self, other: "TwoModeState") -> complex:
        if other.cutoff != self.cutoff:
            raise ValueError("cutoff mismatch")
        return complex(np.vdot(other.amplitudes, self.amplitudes))

    def total_photon_bound(self) -> int:
        """Largest total photon number carried with weight above 1e-14."""
        n = self.cutoff + 1
        na, nb = np.divmod(np.arange(n * n), n)
        occupied = np.abs(self.amplitudes) ** 2 > 1e-14
        return int(np.max((na + nb)[occupied], initial=0))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "two_mode_state",
                "cutoff": self.cutoff,
                "basis": "row-major (n_a, n_b)",
                "amplitudes": [[float(c.real), float(c.imag)] for c in self.amplitudes],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "TwoModeState":
        doc = json.loads(text)
        if doc.get("kind") != "two_mode_state":
            raise ValueError("not a two_mode_state document")
        amps = np.array([complex(re, im) for re, im in doc["amplitudes"]])
        return cls(amps, doc["cutoff"])


class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator on the two-mode basis."""

    __slots__ = ("cutoff", "matrix")

    def __init__(self, matrix: np.ndarray, cutoff: int = DEFAULT_CUTOFF, validate: bool = True):
        mat = np.asarray(matrix, dtype=complex)
        d = _dim(cutoff)
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape}, expected ({d}, {d}) for cutoff {cutoff}")
        if validate:
            herm_err = float(np.max(np.abs(mat - mat.conj().T)))
            if herm_err > HERMITICITY_TOL:
                raise ValueError(f"matrix not Hermitian (max |ρ - ρ†| = {herm_err:.3e})")
            tr_err = abs(np.trace(mat) - 1.0)
            if tr_err > TRACE_TOL:
                raise ValueError(f"trace deviates from 1 by {tr_err:.3e}")
            evals = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))
            if evals.min() < EIGENVALUE_FLOOR:
                raise ValueError(f"matrix has negative eigenvalue {evals.min():.3e}")
        mat.setflags(write=False)
        object.__setattr__(self, "cutoff", cutoff)
        object.__setattr__(self, "matrix", mat)

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def eigenvalues(self) -> np.ndarray:
        ev = np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))
        # eigenvalues in [-1e-9, 0) are numerical noise and clamp to 0
        return np.where((ev < 0) & (ev >= EIGENVALUE_FLOOR), 0.0, ev)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "density_matrix",
                "cutoff": self.cutoff,
                "basis": "row-major (n_a, n_b)",
                "entries": [
                    [[float(v.real), float(v.imag)] for v in row] for row in self.matrix
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DensityMatrix":
        doc = json.loads(text)
        if doc.get("kind") != "density_matrix":
            raise ValueError("not a density_matrix document")
        mat = np.array([[complex(re, im) for re, im in row] for row in doc["entries"]])
        return cls(mat, doc["cutoff"])


def vacuum(cutoff: int = DEFAULT_CUTOFF) -> TwoModeState:
    return TwoModeState.from_fock_dict({(0, 0): 1.0}, cutoff)


def fock(na: int, nb: int, cutoff: int = DEFAULT_CUTOFF) -> TwoModeState:
    return TwoModeState.from_fock_dict({(na, nb): 1.0}, cutoff)


def noon_state(cutoff: int = DEFAULT_CUTOFF) -> TwoModeState:
    """(|20> + |02>)/sqrt(2), the two-photon coalescence target."""
    s = 1.0 / np.sqrt(2.0)
    return TwoModeState.from_fock_dict({(2, 0): s, (0, 2): s}, cutoff)


def superposition_output_state(phi: float, cutoff: int = DEFAULT_CUTOFF) -> TwoModeState:
    """Ideal beam-splitter output for (|0>-i|1>)/√2 and (|0>+e^{iφ}|1>)/√2 inputs."""
    e = np.exp(1j * phi)
    s = 1.0 / np.sqrt(8.0)
    return TwoModeState.from_fock_dict(
        {
            (0, 0): np.sqrt(2.0) * s,
            (1, 0): -1j * (1.0 - e) * s,
            (0, 1): (1.0 + e) * s,
            (2, 0): e * s,
            (0, 2): e * s,
        },
        cutoff,
    )


def prepare_input(beta_a: complex, beta_b: complex, cutoff: int = DEFAULT_CUTOFF) -> TwoModeState:
    """Product of per-source superpositions (α|0> + β|1>) with α = sqrt(1-|β|²) ≥ 0."""
    amps = {}
    for name, beta in (("beta_a", beta_a), ("beta_b", beta_b)):
        if abs(beta) > 1.0 + 1e-12:
            raise ValueError(f"|{name}| = {abs(beta):.6f} exceeds 1")
    alpha_a = np.sqrt(max(0.0, 1.0 - abs(beta_a) ** 2))
    alpha_b = np.sqrt(max(0.0, 1.0 - abs(beta_b) ** 2))
    amps[(0, 0)] = alpha_a * alpha_b
    amps[(0, 1)] = alpha_a * beta_b
    amps[(1, 0)] = beta_a * alpha_b
    amps[(1, 1)] = beta_a * beta_b
    return TwoModeState.from_fock_dict(amps, cutoff)


def apply_beam_splitter(
    state: TwoModeState, cfg: BeamSplitterConfig | None = None
) -> TwoModeState:
    """Unitary image of the state under the mixing transformation.

    Raises if the input occupies total-photon sectors whose image exceeds the
    cutoff (the unitary is block-diagonal in n_a + n_b, so sectors with
    n_a + n_b <= cutoff transform exactly and anything above would truncate).
    """
    cfg = cfg or BeamSplitterConfig()
    if state.total_photon_bound() > state.cutoff:
        raise ValueError(
            f"input occupies total photon number {state.total_photon_bound()} > cutoff "
            f"{state.cutoff}; beam-splitter image would truncate"
        )
    u = cfg.unitary(state.cutoff)
    return TwoModeState(u @ state.amplitudes, state.cutoff)


def moment_expectation(
    rho: DensityMatrix | TwoModeState, idx: MomentIndex | tuple[int, int, int, int]
) -> complex:
    """<(a†)^n a^m (b†)^k b^l> against a state or density matrix."""
    if isinstance(idx, MomentIndex):
        idx = idx.as_tuple()
    cutoff = rho.cutoff
    if max(idx) > cutoff:
        raise ValueError(f"moment index {idx} exceeds cutoff {cutoff}")
    op = moment_operator(tuple(idx), cutoff)
    if isinstance(rho, TwoModeState):
        return complex(np.vdot(rho.amplitudes, op @ rho.amplitudes))
    return complex(np.trace(rho.matrix @ op))


def fidelity(rho: DensityMatrix, target: TwoModeState) -> float:
    """<ψ|ρ|ψ> for a pure target."""
    if rho.cutoff != target.cutoff:
        raise ValueError(f"cutoff mismatch: rho {rho.cutoff}, target {target.cutoff}")
    val = np.vdot(target.amplitudes, rho.matrix @ target.amplitudes)
    return float(np.clip(val.real, 0.0, 1.0))


def partial_transpose_a(rho: DensityMatrix) -> np.ndarray:
    n = rho.cutoff + 1
    blocks = rho.matrix.reshape(n, n, n, n)  # (n_a, n_b, m_a, m_b)
    return np.ascontiguousarray(blocks.transpose(2, 1, 0, 3)).reshape(n * n, n * n)


def negativity(rho: DensityMatrix) -> float:
    """Entanglement monotone (‖ρ^{T_a}‖₁ - 1)/2 from the partial-transpose spectrum."""
    pt = partial_transpose_a(rho)
    herm_err = float(np.max(np.abs(pt - pt.conj().T)))
    if herm_err > HERMITICITY_TOL:
        raise ValueError(f"partial transpose not Hermitian (err {herm_err:.3e})")
    evals = np.linalg.eigvalsh(pt)
    return float(-evals[evals < 0].sum())


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """0.5 ‖ρ - σ‖₁."""
    if rho.cutoff != sigma.cutoff:
        raise ValueError("cutoff mismatch")
    evals = np.linalg.eigvalsh(rho.matrix - sigma.matrix)
    return float(0.5 * np.sum(np.abs(evals)))
