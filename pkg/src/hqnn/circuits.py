"""The three 4-qubit parametrized circuits used as quantum layers.

Circuits are plain data (:class:`CircuitSpec`) so they can be named in config
files, introspected by tests and bound to concrete angles on demand.  Data
parameters come first in the parameter vector, trainable weights after them.

Evaluation is batched: ``run_batch`` pushes ``B`` parameter rows through the
circuit as one ``(B, 16)`` statevector array.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import statevector as sv

CIRCUIT_NAMES = ("no_entanglement", "bellman", "real_amplitudes")
SHIFT = math.pi / 2


class GateKind(enum.Enum):
    HADAMARD = "h"
    RY_DATA = "ry_data"
    RY_WEIGHT = "ry_weight"
    CNOT = "cnot"


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    qubit: int
    control: int | None = None
    param_slot: int | None = None

    def __post_init__(self):
        if self.kind is GateKind.CNOT:
            if self.control is None or self.param_slot is not None:
                raise ValueError("CNOT needs a control and no parameter")
        elif self.kind is GateKind.HADAMARD:
            if self.control is not None or self.param_slot is not None:
                raise ValueError("Hadamard takes no control or parameter")
        elif self.param_slot is None or self.control is not None:
            raise ValueError("Ry ops need a parameter slot and no control")

    @property
    def is_rotation(self) -> bool:
        return self.kind in (GateKind.RY_DATA, GateKind.RY_WEIGHT)


@dataclass(frozen=True)
class CircuitSpec:
    name: str
    n_qubits: int
    ops: tuple[GateOp, ...]
    n_data_params: int
    n_weight_params: int = 0
    # named cut points (number of ops applied), used for golden-state checks
    stages: tuple[tuple[str, int], ...] = field(default=())

    def __post_init__(self):
        n_params = self.n_params
        used = set()
        for op in self.ops:
            for q in (op.qubit, op.control):
                if q is not None and not 0 <= q < self.n_qubits:
                    raise ValueError(f"op {op} touches a wire outside the register")
            if op.param_slot is not None:
                if op.param_slot >= n_params:
                    raise ValueError(f"param slot {op.param_slot} >= {n_params}")
                expect_data = op.param_slot < self.n_data_params
                if expect_data != (op.kind is GateKind.RY_DATA):
                    raise ValueError(f"op {op} sits in the wrong parameter block")
                used.add(op.param_slot)
        if used != set(range(n_params)):
            raise ValueError("every parameter slot must be used at least once")

    @property
    def n_params(self) -> int:
        return self.n_data_params + self.n_weight_params

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def stage(self, label: str) -> int:
        return dict(self.stages)[label]


def _h(q):
    return GateOp(GateKind.HADAMARD, q)


def _ry_data(q, slot):
    return GateOp(GateKind.RY_DATA, q, param_slot=slot)


def _ry_weight(q, slot):
    return GateOp(GateKind.RY_WEIGHT, q, param_slot=slot)


def _cx(c, t):
    return GateOp(GateKind.CNOT, t, control=c)


def build_no_entanglement() -> CircuitSpec:
    ops = []
    for q in range(4):
        ops += [_h(q), _ry_data(q, q)]
    return CircuitSpec("no_entanglement", 4, tuple(ops), n_data_params=4)


def build_bellman() -> CircuitSpec:
    ops = [_h(0), _cx(0, 1), _cx(1, 2), _cx(2, 3)]
    ops += [_ry_data(q, q) for q in range(4)]
    # reversed chain: first CNOT acts on the bottom pair
    ops += [_cx(2, 3), _cx(1, 2), _cx(0, 1)]
    return CircuitSpec(
        "bellman", 4, tuple(ops), n_data_params=4,
        stages=(("pre_rotation", 4), ("post_rotation", 8)),
    )


def build_real_amplitudes() -> CircuitSpec:
    ops = []
    for q in range(4):
        ops += [_h(q), _ry_data(q, q)]
    ops += [_cx(0, 1), _cx(0, 2), _cx(0, 3), _cx(1, 2), _cx(1, 3), _cx(2, 3)]
    ops += [_ry_weight(q, 4 + q) for q in range(4)]
    return CircuitSpec(
        "real_amplitudes", 4, tuple(ops), n_data_params=4, n_weight_params=4,
        stages=(("psi1", 8), ("psi2", 14), ("psi3", 18)),
    )


_BUILDERS = {
    "no_entanglement": build_no_entanglement,
    "bellman": build_bellman,
    "real_amplitudes": build_real_amplitudes,
}


def get_circuit(name: str) -> CircuitSpec:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown circuit {name!r}; expected one of {CIRCUIT_NAMES}") from None


def _params_row(spec: CircuitSpec, data_params, weight_params) -> np.ndarray:
    data = np.asarray(data_params, dtype=np.float64).ravel()
    weights = np.asarray(weight_params if weight_params is not None else (), dtype=np.float64).ravel()
    if data.size != spec.n_data_params or weights.size != spec.n_weight_params:
        raise ValueError(
            f"{spec.name} takes {spec.n_data_params} data and {spec.n_weight_params} weight "
            f"parameters, got {data.size} and {weights.size}"
        )
    return np.concatenate([data, weights])


def _params_batch(spec: CircuitSpec, data_params, weight_params) -> np.ndarray:
    data = np.asarray(data_params, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != spec.n_data_params:
        raise ValueError(f"expected data parameters of shape (B, {spec.n_data_params}), got {data.shape}")
    weights = np.asarray(weight_params if weight_params is not None else (), dtype=np.float64).ravel()
    if weights.size != spec.n_weight_params:
        raise ValueError(f"{spec.name} takes {spec.n_weight_params} weight parameters, got {weights.size}")
    return np.concatenate([data, np.broadcast_to(weights, (data.shape[0], weights.size))], axis=1)


def _rotation_slots(spec: CircuitSpec) -> np.ndarray:
    return np.array([op.param_slot for op in spec.ops if op.is_rotation], dtype=np.int64)


def _evolve_angles(spec: CircuitSpec, angles: np.ndarray, n_ops: int | None = None) -> np.ndarray:
    """Evolve |0...0> for each row of per-rotation angles ``(B, n_rotations)``."""
    batch = angles.shape[0]
    state = np.zeros((batch, spec.dim), dtype=np.complex128)
    state[:, 0] = 1.0
    h = sv.hadamard()
    r = 0
    for op in spec.ops[:n_ops]:
        if op.kind is GateKind.HADAMARD:
            state = sv.apply_1q(state, h, op.qubit)
        elif op.kind is GateKind.CNOT:
            state = sv.apply_cnot(state, op.control, op.qubit)
        else:
            state = sv.apply_1q(state, sv.ry(angles[:, r]), op.qubit)
            r += 1
    return state


def evolve_batch(spec: CircuitSpec, data_params, weight_params=None, n_ops: int | None = None) -> np.ndarray:
    params = _params_batch(spec, data_params, weight_params)
    return _evolve_angles(spec, params[:, _rotation_slots(spec)], n_ops)


def evolve(spec: CircuitSpec, data_params, weight_params=None, n_ops: int | None = None) -> np.ndarray:
    """Final (or intermediate, after ``n_ops`` ops) statevector for one parameter set."""
    params = _params_row(spec, data_params, weight_params)
    return _evolve_angles(spec, params[None, _rotation_slots(spec)], n_ops)[0]


def run_batch(spec: CircuitSpec, data_params, weight_params=None) -> np.ndarray:
    return sv.probabilities(evolve_batch(spec, data_params, weight_params))


def run_circuit(spec: CircuitSpec, data_params, weight_params=None) -> np.ndarray:
    """16 basis-state probabilities of the measured register."""
    return sv.probabilities(evolve(spec, data_params, weight_params))


def param_shift_jacobian_batch(spec: CircuitSpec, data_params, weight_params=None) -> np.ndarray:
    """Jacobian ``d probs / d params`` for a batch, shape ``(B, 2^n, n_params)``.

    Each Ry occurrence is shifted by ±pi/2 on its own and the contributions are
    accumulated into the parameter slot it reads, so shared slots stay exact.
    """
    params = _params_batch(spec, data_params, weight_params)
    slots = _rotation_slots(spec)
    angles = params[:, slots]
    batch, n_rot = angles.shape
    shifted = np.repeat(angles[:, None, :], 2 * n_rot, axis=1)
    idx = np.arange(n_rot)
    shifted[:, idx, idx] += SHIFT
    shifted[:, n_rot + idx, idx] -= SHIFT
    probs = sv.probabilities(_evolve_angles(spec, shifted.reshape(batch * 2 * n_rot, n_rot)))
    probs = probs.reshape(batch, 2 * n_rot, spec.dim)
    per_rotation = 0.5 * (probs[:, :n_rot] - probs[:, n_rot:])  # (B, n_rot, dim)
    jac = np.zeros((batch, spec.n_params, spec.dim))
    np.add.at(jac, (slice(None), slots), per_rotation)
    return jac.transpose(0, 2, 1)


def param_shift_jacobian(spec: CircuitSpec, data_params, weight_params=None) -> np.ndarray:
    """Jacobian of ``run_circuit`` output, shape ``(16, n_data + n_weight)``."""
    data = _params_row(spec, data_params, weight_params)[: spec.n_data_params]
    return param_shift_jacobian_batch(spec, data[None, :], weight_params)[0]


def bind(spec: CircuitSpec, data_params, weight_params=None) -> list[sv.BoundGate]:
    params = _params_row(spec, data_params, weight_params)
    gates: list[sv.BoundGate] = []
    for op in spec.ops:
        if op.kind is GateKind.HADAMARD:
            gates.append(sv.Apply1Q(sv.hadamard(), op.qubit))
        elif op.kind is GateKind.CNOT:
            gates.append(sv.ApplyCnot(op.control, op.qubit))
        else:
            gates.append(sv.Apply1Q(sv.ry(params[op.param_slot]), op.qubit))
    return gates


def unitary(spec: CircuitSpec, data_params, weight_params=None) -> np.ndarray:
    return sv.circuit_unitary(bind(spec, data_params, weight_params), spec.n_qubits)


def qubit_marginals(probs: np.ndarray, n_qubits: int = 4) -> np.ndarray:
    """Probability of reading |1> on each wire, from basis-state probabilities."""
    probs = np.asarray(probs)
    cube = probs.reshape(probs.shape[:-1] + (2,) * n_qubits)
    lead = probs.ndim - 1
    out = []
    for q in range(n_qubits):
        axes = tuple(lead + a for a in range(n_qubits) if a != q)
        out.append(cube.sum(axis=axes)[..., 1])
    return np.stack(out, axis=-1)
