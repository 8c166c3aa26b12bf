"""Batch rekeying plans for LKH binary key trees.

The joint deletion/insertion problem is solved with DCA on an exact-penalty
relaxation (``dcaep_plus``); heuristic baselines and a seeded benchmark
harness are included for comparison.
"""

from .baselines import BaselinePlan, batch_balanced, evaluate_plan, marking, rotation
from .costmodel import Assignment, LiftedPoint, objective, total_cost
from .dca import SolverConfig, dcaep_insertion_only, dcaep_plus
from .keytree import (
    KeyTree,
    RekeyInstance,
    exact_rekey_cost,
    find_leaves,
    generate_random_tree,
    tree_balance,
)
from .report import RekeyReport

__version__ = "0.1.0"
