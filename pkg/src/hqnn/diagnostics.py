"""Closed-form state checks for the built-in circuits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import circuits

ATOL = 1e-12
_R = 1 / math.sqrt(2)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    max_error: float
    detail: str


def _ket(*pairs) -> np.ndarray:
    out = np.zeros(16, dtype=np.complex128)
    for bits, amp in pairs:
        out[int(bits, 2)] = amp
    return out


def _check(name: str, got: np.ndarray, want: np.ndarray, detail: str) -> Check:
    err = float(np.max(np.abs(got - want)))
    return Check(name, err <= ATOL, err, detail)


def _no_entanglement() -> list[Check]:
    spec = circuits.build_no_entanglement()
    out = [_check("uniform_at_zero", circuits.run_circuit(spec, [0.0] * 4), np.full(16, 1 / 16),
                  "all 16 readout probabilities equal 1/16 at zero angles")]
    worst = 0.0
    for theta in np.random.default_rng(0).uniform(-math.pi, math.pi, size=(8, 4)):
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        wires = [np.array([(ci - si) * _R, (ci + si) * _R]) for ci, si in zip(c, s)]
        want = wires[0]
        for w in wires[1:]:
            want = np.kron(want, w)
        worst = max(worst, float(np.max(np.abs(circuits.evolve(spec, theta) - want))))
    out.append(Check("hadamard_ry_amplitudes", worst <= ATOL, worst,
                     "each wire holds ((cos-sin)/sqrt2, (cos+sin)/sqrt2) of half the angle, 8 random angle sets"))
    return out


def _bellman() -> list[Check]:
    spec = circuits.build_bellman()
    ghz = _ket(("0000", _R), ("1111", _R))
    pre = circuits.evolve(spec, [0.0] * 4, n_ops=spec.stage("pre_rotation"))
    out = [_check("pre_rotation_state", pre, ghz, "H + CNOT chain on |0000> gives (|0000> + |1111>)/sqrt2")]
    # step through the closing CNOT chain one gate at a time
    expected = [("1110",), ("1100",), ("1000",)]
    start = spec.stage("post_rotation")
    worst = 0.0
    for k, (bits,) in enumerate(expected, start=1):
        got = circuits.evolve(spec, [0.0] * 4, n_ops=start + k)
        worst = max(worst, float(np.max(np.abs(got - _ket(("0000", _R), (bits, _R))))))
    out.append(Check("three_cnot_evolution", worst <= ATOL, worst,
                     "at zero angles |1111> -> |1110> -> |1100> -> |1000>, |0000> untouched"))
    return out


def _real_amplitudes() -> list[Check]:
    spec = circuits.build_real_amplitudes()
    zeros = [0.0] * 4
    psi1 = circuits.evolve(spec, zeros, zeros, n_ops=spec.stage("psi1"))
    psi2 = circuits.evolve(spec, zeros, zeros, n_ops=spec.stage("psi2"))
    return [
        _check("psi1_uniform", psi1, np.full(16, 0.25), "H and identity rotations give 0.25 on every basis state"),
        _check("psi1_equals_psi2", psi2, psi1, "the six CNOTs leave the uniform state unchanged"),
    ]


_CHECKS = {"no_entanglement": _no_entanglement, "bellman": _bellman, "real_amplitudes": _real_amplitudes}


def golden_checks(name: str) -> list[Check]:
    if name not in _CHECKS:
        raise ValueError(f"unknown circuit {name!r}; expected one of {circuits.CIRCUIT_NAMES}")
    return _CHECKS[name]()


def unitarity_error(name: str, draws: int = 50, seed: int = 0) -> float:
    spec = circuits.get_circuit(name)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        u = circuits.unitary(spec, rng.uniform(-math.pi, math.pi, spec.n_data_params),
                             rng.uniform(-math.pi, math.pi, spec.n_weight_params))
        worst = max(worst, float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))))
    return worst

