"""Evaluation metrics and trace recording.

Metrics read the full model and are computed out of band: nothing here is
fed back to a learner.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .core import PolicyOperator, PopulationDistribution, QTable, l2_distance
from .envs.base import EnvironmentModel
from .errors import StructuralError
from .fpi import best_response, induced_population
from .trace import LearningTrace, TraceRow

EXPLOITABILITY_NORM = "l2_flattened"


def mse(m: PopulationDistribution, mu_star: PopulationDistribution) -> float:
    """Squared Euclidean distance between two population vectors."""
    m = np.asarray(m, dtype=float)
    mu_star = np.asarray(mu_star, dtype=float)
    if m.shape != mu_star.shape:
        raise StructuralError(f"shape mismatch: {m.shape} vs {mu_star.shape}")
    diff = m - mu_star
    return float(diff @ diff)


def exploitability(q: QTable, env: EnvironmentModel, policy_op: PolicyOperator, br_tol: float = 1e-8,
                   ip_tol: float = 1e-12, k: int = 0) -> float:
    """Distance from ``q`` to the best response against the population its own policy induces.

    With ``mu_q`` the stationary distribution of ``policy_op(q)``, returns
    ``||best_response(mu_q) - q||_2`` over the flattened table (valid
    entries only; invalid entries are zero on both sides).
    """
    q = np.where(env.valid, np.asarray(q, dtype=float), 0.0)
    if not np.all(np.isfinite(q)):
        raise StructuralError("Q-table contains non-finite entries")
    mu_q = induced_population(policy_op(q, env.valid, k), env, tol=ip_tol)
    q_br = best_response(mu_q, env, policy_op, k, tol=br_tol)
    return l2_distance(q_br, q)


def record(trace: LearningTrace, k: int, samples: int, q: QTable, m: PopulationDistribution,
           env: EnvironmentModel, mu_star: PopulationDistribution | None, policy_op: PolicyOperator,
           br_tol: float = 1e-8, ip_tol: float = 1e-12, wall_ms: float = 0.0) -> LearningTrace:
    """Append one row with the MSE against ``mu_star`` (NaN when absent) and the exploitability."""
    error = mse(m, mu_star) if mu_star is not None else math.nan
    expl = exploitability(q, env, policy_op, br_tol, ip_tol, k)
    return trace.append(TraceRow(k, int(samples), error, expl, float(wall_ms)))


class Recorder:
    """Metrics hook for ``fpi_solve`` and ``run_qmi`` bound to one environment and reference."""

    def __init__(self, env: EnvironmentModel, mu_star: PopulationDistribution | None,
                 policy_op: PolicyOperator, br_tol: float = 1e-8, ip_tol: float = 1e-12):
        self.env = env
        self.mu_star = mu_star
        self.policy_op = policy_op
        self.br_tol = br_tol
        self.ip_tol = ip_tol

    def __call__(self, trace: LearningTrace, k: int, samples: int, q: QTable, m: PopulationDistribution,
                 wall_ms: float = 0.0) -> LearningTrace:
        return record(trace, k, samples, q, m, self.env, self.mu_star, self.policy_op,
                      self.br_tol, self.ip_tol, wall_ms)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"cannot hash value of type {type(value).__name__}")
