"""Exact statevector simulation for small qubit registers.

States are complex numpy arrays whose last axis has length ``2**n``. Any
leading axes are treated as a batch, so one call can evolve many registers
at once (the hybrid model pushes a whole mini-batch through a circuit this
way).

Qubit 0 is the top wire of a circuit diagram and the most significant bit of
the basis index: ``|1000>`` lives at index 8.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Union

import numpy as np

MAX_QUBITS = 14
MAX_DENSE_QUBITS = 10

_SQRT2_INV = 1.0 / math.sqrt(2.0)
_POLE_TOL = 1e-12


class Apply1Q(NamedTuple):
    """A single-qubit gate bound to a wire. ``matrix`` may be ``(2, 2)`` or batched ``(B, 2, 2)``."""

    matrix: np.ndarray
    qubit: int


class ApplyCnot(NamedTuple):
    control: int
    target: int


BoundGate = Union[Apply1Q, ApplyCnot]


@dataclass(frozen=True)
class BlochAngles:
    theta: float
    phi: float


def n_qubits_of(state: np.ndarray) -> int:
    dim = state.shape[-1]
    n = dim.bit_length() - 1
    if n < 1 or 1 << n != dim:
        raise ValueError(f"state length {dim} is not a power of two >= 2")
    return n


def zero_state(n_qubits: int) -> np.ndarray:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    state = np.zeros(1 << n_qubits, dtype=np.complex128)
    state[0] = 1.0
    return state


def basis_state(bits: str) -> np.ndarray:
    """Computational basis state from a bit string, e.g. ``basis_state("10")`` is |10>."""
    state = zero_state(len(bits))
    state[0] = 0.0
    state[int(bits, 2)] = 1.0
    return state


def identity() -> np.ndarray:
    return np.eye(2, dtype=np.complex128)


def hadamard() -> np.ndarray:
    return _SQRT2_INV * np.array([[1, 1], [1, -1]], dtype=np.complex128)


def ry(theta) -> np.ndarray:
    """Rotation about the Bloch y axis.

    ``theta`` may be a scalar (returns ``(2, 2)``) or an array of angles
    (returns ``(*theta.shape, 2, 2)``).
    """
    theta = np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(theta)):
        raise ValueError("ry angle must be finite")
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    out = np.empty(theta.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _check_qubit(qubit: int, n: int) -> None:
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n}-qubit state")


def apply_1q(state: np.ndarray, gate: np.ndarray, qubit: int) -> np.ndarray:
    """Apply a 2x2 gate to one wire without forming the full 2^n matrix.

    A batched gate of shape ``(B, 2, 2)`` pairs with a state batch ``(B, 2^n)``.
    Returns a new array.
    """
    n = n_qubits_of(state)
    _check_qubit(qubit, n)
    batch = state.shape[:-1]
    view = state.reshape(batch + (1 << qubit, 2, 1 << (n - qubit - 1)))
    gate = np.asarray(gate, dtype=np.complex128)
    if gate.ndim == 2:
        out = np.einsum("ij,...ajc->...aic", gate, view)
    else:
        if gate.shape[:-2] != batch:
            raise ValueError(f"gate batch {gate.shape[:-2]} does not match state batch {batch}")
        out = np.einsum("...ij,...ajc->...aic", gate, view)
    return out.reshape(state.shape)


def apply_cnot(state: np.ndarray, control: int, target: int) -> np.ndarray:
    n = n_qubits_of(state)
    _check_qubit(control, n)
    _check_qubit(target, n)
    if control == target:
        raise ValueError("control and target must differ")
    batch = state.shape[:-1]
    out = state.reshape(batch + (2,) * n).copy()
    axis_c = len(batch) + control
    axis_t = len(batch) + target
    sel0 = [slice(None)] * out.ndim
    sel1 = [slice(None)] * out.ndim
    sel0[axis_c] = sel1[axis_c] = 1
    sel0[axis_t] = 0
    sel1[axis_t] = 1
    src = state.reshape(out.shape)
    out[tuple(sel0)] = src[tuple(sel1)]
    out[tuple(sel1)] = src[tuple(sel0)]
    return out.reshape(state.shape)


def apply_gates(state: np.ndarray, gates: Iterable[BoundGate]) -> np.ndarray:
    for g in gates:
        if isinstance(g, ApplyCnot):
            state = apply_cnot(state, g.control, g.target)
        else:
            state = apply_1q(state, g.matrix, g.qubit)
    return state


def probabilities(state: np.ndarray) -> np.ndarray:
    return state.real**2 + state.imag**2


def norm(state: np.ndarray) -> np.ndarray:
    return np.sqrt(probabilities(state).sum(axis=-1))


# -- dense route, kept independent of the strided kernels above -------------


def embed_1q(gate: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    """``I ⊗ ... ⊗ gate ⊗ ... ⊗ I`` as a dense ``2^n x 2^n`` matrix."""
    _check_qubit(qubit, n_qubits)
    out = np.ones((1, 1), dtype=np.complex128)
    for q in range(n_qubits):
        out = np.kron(out, gate if q == qubit else np.eye(2))
    return out


def cnot_matrix(control: int, target: int, n_qubits: int) -> np.ndarray:
    """Dense CNOT as ``|0><0|_c ⊗ I + |1><1|_c ⊗ X_t``."""
    _check_qubit(control, n_qubits)
    _check_qubit(target, n_qubits)
    if control == target:
        raise ValueError("control and target must differ")
    p0 = np.array([[1, 0], [0, 0]], dtype=np.complex128)
    p1 = np.array([[0, 0], [0, 1]], dtype=np.complex128)
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    off = np.ones((1, 1))
    on = np.ones((1, 1))
    for q in range(n_qubits):
        if q == control:
            off, on = np.kron(off, p0), np.kron(on, p1)
        elif q == target:
            off, on = np.kron(off, np.eye(2)), np.kron(on, x)
        else:
            off, on = np.kron(off, np.eye(2)), np.kron(on, np.eye(2))
    return off + on


def circuit_unitary(gates: Iterable[BoundGate], n_qubits: int) -> np.ndarray:
    """Dense unitary of a gate sequence (later gates multiply from the left)."""
    if not 1 <= n_qubits <= MAX_DENSE_QUBITS:
        raise ValueError(f"dense unitary limited to {MAX_DENSE_QUBITS} qubits, got {n_qubits}")
    u = np.eye(1 << n_qubits, dtype=np.complex128)
    for g in gates:
        if isinstance(g, ApplyCnot):
            m = cnot_matrix(g.control, g.target, n_qubits)
        else:
            if np.ndim(g.matrix) != 2:
                raise ValueError("circuit_unitary needs unbatched gate matrices")
            m = embed_1q(g.matrix, g.qubit, n_qubits)
        u = m @ u
    return u


def is_unitary(m: np.ndarray, atol: float = 1e-10) -> bool:
    return np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=atol, rtol=0)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    overlap = np.vdot(a, b)
    if abs(overlap) < atol:
        return False
    phase = overlap / abs(overlap)
    return np.allclose(a * phase, b, atol=atol, rtol=0)


def bloch_angles(state: np.ndarray) -> BlochAngles:
    """Polar/azimuthal angles of a single-qubit pure state.

    phi is pinned to 0 at the poles, where it is undefined.
    """
    state = np.asarray(state, dtype=np.complex128)
    if state.shape != (2,):
        raise ValueError("bloch_angles needs a single-qubit state")
    a, b = state
    theta = 2.0 * math.atan2(abs(b), abs(a))
    if abs(a) < _POLE_TOL or abs(b) < _POLE_TOL:
        return BlochAngles(theta, 0.0)
    phi = float((np.angle(b) - np.angle(a)) % (2 * math.pi))
    if phi >= 2 * math.pi:  # tiny negative differences round up to 2*pi
        phi = 0.0
    return BlochAngles(theta, phi)


def from_bloch(theta: float, phi: float) -> np.ndarray:
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)], dtype=np.complex128)
