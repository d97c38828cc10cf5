"""Monte-Carlo estimate of the reference backend's soundness error.

A synthetic circuit of ``m`` booleanity rows ``x_i * x_i = x_i`` gets a
witness that breaks exactly ``violated`` of them. Each trial salts the single
public wire, so the Fiat-Shamir transcript is fresh, and asks the unchecked
prover for a proof. The verifier accepts only if no broken row is challenged,
which happens with probability ``(1 - violated/m)^k``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .proof import _build_proof, setup, verify
from .r1cs import R1CSInstance, Witness


def violating_circuit(m: int) -> R1CSInstance:
    rows = tuple(({2 + i: 1}, {2 + i: 1}, {2 + i: 1}) for i in range(m))
    return R1CSInstance(num_wires=2 + m, num_public=1, constraints=rows, label=f"bool{m}")


def violating_witness(m: int, violated: int, salt: int) -> Witness:
    return Witness((1, salt) + (2,) * violated + (0,) * (m - violated))


@dataclass(frozen=True)
class SoundnessResult:
    m: int
    violated: int
    k: int
    trials: int
    accepted: int

    @property
    def rate(self) -> float:
        return self.accepted / self.trials

    @property
    def bound(self) -> float:
        return (1 - self.violated / self.m) ** self.k


def run_trials(m: int, violated: int, k: int, trials: int, salt0: int = 0) -> SoundnessResult:
    inst = violating_circuit(m)
    pk, vk = setup(inst, k)
    accepted = 0
    for t in range(trials):
        bundle = _build_proof(pk, violating_witness(m, violated, salt0 + t))
        result = verify(vk, bundle)
        if result:
            accepted += 1
        elif result.reason != "ConstraintViolated":
            raise AssertionError(f"unexpected rejection {result.reason}: {result.detail}")
    return SoundnessResult(m, violated, k, trials, accepted)
