"""Checks and quantities from the Equitable-FL convergence theorem.

Nothing here gates a run. The smoothness constant ``L`` of a real network is
unknown, so the report only says whether a guessed ``L`` is compatible with
the chosen step size, proximal weight, local epochs and round count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

__all__ = [
    "Condition",
    "TheoryReport",
    "zeta",
    "round_distribution",
    "theorem_eta",
    "validate_theorem_conditions",
]


@dataclass(frozen=True)
class Condition:
    name: str
    satisfied: bool
    lhs: float
    rhs: float


@dataclass
class TheoryReport:
    zeta: float
    eta_LE: float
    eta_muE: float
    K_floor: float
    conditions: list[Condition]
    pk: np.ndarray = field(repr=False)

    @property
    def all_satisfied(self) -> bool:
        return all(c.satisfied for c in self.conditions)

    def format(self) -> str:
        lines = [
            f"zeta      = {self.zeta:.9g}",
            f"eta*L*E   = {self.eta_LE:.9g}",
            f"eta*mu*E  = {self.eta_muE:.9g}",
            f"K floor   = {self.K_floor:.9g}",
        ]
        for c in self.conditions:
            mark = "ok  " if c.satisfied else "FAIL"
            lines.append(f"[{mark}] {c.name}: {c.lhs:.9g} vs {c.rhs:.9g}")
        pk = self.pk
        if pk.size:
            lines.append(f"P(k): first {pk[0]:.9g}, last {pk[-1]:.9g}, K={pk.size}")
        return "\n".join(lines)


def zeta(eta: float, mu: float, E: int, L: float) -> float:
    return eta**2 * E**2 * (
        9 * eta * L**2 * E + 4 * eta * mu * E
        + 6 * L * (1 + 4 * eta**2 * mu**2 * E**2 / 18)
    )


def round_distribution(z: float, K: int) -> np.ndarray:
    """Probabilities ``P(k) ∝ (1 + z)^(K-1-k)`` for ``k = 0..K-1``.

    Computed in log space so large ``K`` does not overflow.
    """
    if K < 1:
        raise ContractViolation(f"K must be >= 1, got {K}")
    if z == 0.0:
        return np.full(K, 1.0 / K)
    logw = (K - 1 - np.arange(K)) * math.log1p(z)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def theorem_eta(E: int, K: int, L: float) -> float:
    if E <= 0 or K <= 0 or L <= 0:
        raise ContractViolation(f"E, K, L must be positive, got {E}, {K}, {L}")
    return 1.0 / (4 * E * math.sqrt(3 * L * K))


def validate_theorem_conditions(eta: float, mu: float, E: int, K: int,
                                L: float) -> TheoryReport:
    if eta <= 0 or E <= 0 or K <= 0 or L <= 0:
        raise ContractViolation(
            f"eta, E, K, L must be positive, got {eta}, {E}, {K}, {L}"
        )
    if mu < 0:
        raise ContractViolation(f"mu must be >= 0, got {mu}")
    z = zeta(eta, mu, E, L)
    k_floor = max(3 * L / 32, mu**2 / (12 * L), mu**2 / (108 * L**3))
    conds = [
        Condition("eta*L*E <= 1/2", eta * L * E <= 0.5, eta * L * E, 0.5),
        Condition("eta*mu*E <= 1/2", eta * mu * E <= 0.5, eta * mu * E, 0.5),
        Condition("mu < 1", mu < 1, mu, 1.0),
        Condition("K >= K floor", K >= k_floor, float(K), k_floor),
    ]
    return TheoryReport(z, eta * L * E, eta * mu * E, k_floor, conds,
                        round_distribution(z, K))
