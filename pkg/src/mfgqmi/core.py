"""Tabular building blocks: policies, Bellman and transition operators.

Value tables (``QTable``) are plain ``(S, A)`` float arrays and population
distributions are plain length-``S`` float arrays on the simplex.  Entries
of a Q-table at invalid state-action pairs carry no meaning; operators in
this module keep them at zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import StructuralError

if TYPE_CHECKING:
    from .envs.base import EnvironmentModel

QTable = np.ndarray
PopulationDistribution = np.ndarray

SIMPLEX_ATOL = 1e-9
RENORMALIZE_DRIFT = 1e-12

_counters = {"renormalizations": 0}


def renormalization_count() -> int:
    """Number of simplex renormalizations performed in this process."""
    return _counters["renormalizations"]


def renormalize(m: np.ndarray) -> np.ndarray:
    """Divide ``m`` by its sum when float drift exceeds 1e-12."""
    total = m.sum()
    if abs(total - 1.0) > RENORMALIZE_DRIFT:
        _counters["renormalizations"] += 1
        return m / total
    return m


def as_population(mass, n_states: int | None = None) -> PopulationDistribution:
    """Validate and copy a population distribution."""
    m = np.array(mass, dtype=float)
    if m.ndim != 1:
        raise StructuralError(f"population must be one-dimensional, got shape {m.shape}")
    if n_states is not None and m.shape[0] != n_states:
        raise StructuralError(f"population has {m.shape[0]} entries, expected {n_states}")
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise StructuralError("population entries must be finite and non-negative")
    if abs(m.sum() - 1.0) > SIMPLEX_ATOL:
        raise StructuralError(f"population sums to {m.sum():.12g}, expected 1")
    return m


def as_qtable(values, shape: tuple[int, int] | None = None) -> QTable:
    q = np.array(values, dtype=float)
    if q.ndim != 2:
        raise StructuralError(f"Q-table must be two-dimensional, got shape {q.shape}")
    if shape is not None and q.shape != tuple(shape):
        raise StructuralError(f"Q-table has shape {q.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(q)):
        raise StructuralError("Q-table contains non-finite entries")
    return q


def uniform_population(n_states: int) -> PopulationDistribution:
    return np.full(n_states, 1.0 / n_states)


def random_population(n_states: int, rng: np.random.Generator) -> PopulationDistribution:
    """Draw a population uniformly from the simplex (flat Dirichlet)."""
    return rng.dirichlet(np.ones(n_states))


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        raise StructuralError(f"state {int(empty[0])} has no valid action")
    return mask


@dataclass(frozen=True, eq=False)
class Policy:
    """Row-stochastic ``(S, A)`` action distribution restricted to ``mask``."""

    probs: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        mask = _check_mask(self.mask)
        if probs.shape != mask.shape:
            raise StructuralError(f"policy shape {probs.shape} does not match mask {mask.shape}")
        if np.any(probs < 0) or np.any(probs[~mask] != 0):
            raise StructuralError("policy puts mass on an invalid action or is negative")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > SIMPLEX_ATOL:
            raise StructuralError("policy rows must sum to 1")
        probs.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "mask", mask)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    def with_exploration(self, epsilon: float) -> Policy:
        """Mix in ``epsilon`` of the uniform distribution over valid actions."""
        if epsilon == 0:
            return self
        uniform = self.mask / self.mask.sum(axis=1, keepdims=True)
        return Policy((1.0 - epsilon) * self.probs + epsilon * uniform, self.mask)


def policy_greedy(q: QTable, mask) -> Policy:
    """One-hot policy on the best valid action; ties go to the lowest index."""
    q = np.asarray(q, dtype=float)
    mask = _check_mask(mask)
    if not np.all(np.isfinite(q)):
        raise StructuralError("Q-table contains non-finite entries")
    best = np.where(mask, q, -np.inf).argmax(axis=1)
    probs = np.zeros_like(q)
    probs[np.arange(q.shape[0]), best] = 1.0
    return Policy(probs, mask)


def softmax_rows(q: np.ndarray, inverse_temperature: float, mask: np.ndarray) -> np.ndarray:
    """Masked, max-shifted softmax of each row of ``q`` (no validation)."""
    logits = np.where(mask, q, -np.inf)
    logits = inverse_temperature * (logits - logits.max(axis=-1, keepdims=True))
    weights = np.exp(logits)
    return weights / weights.sum(axis=-1, keepdims=True)


def policy_softmax(q: QTable, inverse_temperature: float, mask) -> Policy:
    if not inverse_temperature > 0:
        raise StructuralError(f"inverse temperature must be positive, got {inverse_temperature}")
    q = np.asarray(q, dtype=float)
    mask = _check_mask(mask)
    if not np.all(np.isfinite(q)):
        raise StructuralError("softmax policy needs a finite Q-table")
    return Policy(softmax_rows(q, inverse_temperature, mask), mask)


@dataclass(frozen=True)
class PolicyOperator:
    """Map from Q-tables to policies.

    ``kind`` is ``"greedy"`` or ``"softmax"``.  For softmax the inverse
    temperature at outer iteration ``k`` is ``inverse_temperature`` when
    ``schedule == "constant"`` and ``inverse_temperature * max(k, 1)`` when
    ``schedule == "linear"``.
    """

    kind: str = "greedy"
    inverse_temperature: float = 1.0
    schedule: str = "constant"

    def __post_init__(self):
        if self.kind not in ("greedy", "softmax"):
            raise StructuralError(f"unknown policy operator kind {self.kind!r}")
        if self.schedule not in ("constant", "linear"):
            raise StructuralError(f"unknown temperature schedule {self.schedule!r}")
        if self.kind == "softmax" and not self.inverse_temperature > 0:
            raise StructuralError("softmax inverse temperature must be positive")

    def temperature_at(self, k: int) -> float:
        if self.schedule == "linear":
            return self.inverse_temperature * max(k, 1)
        return self.inverse_temperature

    def at(self, k: int) -> PolicyOperator:
        """The constant operator in force at outer iteration ``k``."""
        return PolicyOperator(self.kind, self.temperature_at(k), "constant")

    def __call__(self, q: QTable, mask, k: int = 0) -> Policy:
        if self.kind == "greedy":
            return policy_greedy(q, mask)
        return policy_softmax(q, self.temperature_at(k), mask)

    def rows(self, q: np.ndarray, mask: np.ndarray, k: int = 0) -> np.ndarray:
        """Action probabilities for one or more rows, skipping validation."""
        if self.kind == "greedy":
            best = np.where(mask, q, -np.inf).argmax(axis=-1)
            out = np.zeros(q.shape)
            np.put_along_axis(out, np.expand_dims(best, -1), 1.0, axis=-1)
            return out
        return softmax_rows(q, self.temperature_at(k), mask)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "inverse_temperature": self.inverse_temperature, "schedule": self.schedule}


GREEDY = PolicyOperator("greedy")


def bellman_apply(q: QTable, m: PopulationDistribution, policy_op: PolicyOperator,
                  env: EnvironmentModel, k: int = 0) -> QTable:
    """Exact one-step backup ``r(s,a,m) + gamma * E[Q(s', a')]``, a' ~ policy_op(q)."""
    pi = policy_op.rows(q, env.valid, k)
    v = np.einsum("sa,sa->s", pi, np.where(env.valid, q, 0.0))
    kernel = env.kernel_tensor(m)
    out = env.reward_table(m) + env.discount * (kernel @ v)
    return np.where(env.valid, out, 0.0)


def induced_kernel(policy: Policy, env: EnvironmentModel, m_ref: PopulationDistribution) -> np.ndarray:
    """State-to-state kernel ``P_pi(s, s') = sum_a pi(a|s) P(s'|s,a,m_ref)``."""
    return np.einsum("sa,sat->st", policy.probs, env.kernel_tensor(m_ref))


def transition_apply(policy: Policy, m_state: PopulationDistribution, env: EnvironmentModel,
                     m_ref: PopulationDistribution) -> PopulationDistribution:
    """Push ``m_state`` one step forward under ``policy``."""
    return renormalize(np.asarray(m_state) @ induced_kernel(policy, env, m_ref))


def l2_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise StructuralError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b).ravel()))


def mfne_residual(q: QTable, m: PopulationDistribution, policy_op: PolicyOperator,
                  env: EnvironmentModel, k: int = 0) -> tuple[float, float]:
    """Distances ``(||T q - q||, ||P m - m||)``; both vanish exactly at an equilibrium."""
    bellman_gap = l2_distance(bellman_apply(q, m, policy_op, env, k), q)
    policy = policy_op(q, env.valid, k)
    population_gap = l2_distance(transition_apply(policy, m, env, m), m)
    return bellman_gap, population_gap
