"""Per-algorithm result record shared by the solver, baselines and benchmark."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class RekeyReport:
    algorithm: str
    exact_cost: int
    approx_cost: int
    objective: float
    balance_coefficient: float
    tree_balance: int
    deletion_cost: int | None = None
    insertion_cost: int | None = None
    # assignment-independent parts of the approximate cost
    forced_deletion_term: int = 0
    join_term: int = 0
    rebalance_cost: int = 0
    iterations: int = 0
    seconds: float = 0.0
    final_penalty: float | None = None
    repaired: bool = False
    converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)
