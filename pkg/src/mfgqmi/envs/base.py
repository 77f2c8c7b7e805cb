"""Finite mean-field MDP description and trajectory sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import Policy, PopulationDistribution
from ..errors import StructuralError

RewardFn = Callable[[np.ndarray], np.ndarray]
KernelFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class EnvironmentModel:
    """A finite MDP whose reward (and optionally kernel) depends on a population.

    Attributes:
        name: Short identifier used in trace metadata and cache keys.
        valid: ``(S, A)`` boolean mask of admissible actions.
        discount: Discount factor in (0, 1).
        reward_bound: Upper bound on ``|r(s, a, mu)|`` over valid pairs and all mu.
        reward_fn: Maps a population to the ``(S, A)`` reward table.
        kernel_fn: Maps a reference population to the ``(S, A, S)`` kernel.
            Rows at invalid pairs are self-loops and never used.
        params: Construction parameters, recorded for hashing and reporting.
    """

    name: str
    valid: np.ndarray
    discount: float
    reward_bound: float
    reward_fn: RewardFn
    kernel_fn: KernelFn
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        valid = np.array(self.valid, dtype=bool)
        if valid.ndim != 2:
            raise StructuralError("valid-action mask must be (S, A)")
        empty = np.flatnonzero(~valid.any(axis=1))
        if empty.size:
            raise StructuralError(f"state {int(empty[0])} has no valid action")
        if not 0 < self.discount < 1:
            raise StructuralError(f"discount must lie in (0, 1), got {self.discount}")
        valid.setflags(write=False)
        object.__setattr__(self, "valid", valid)

    @property
    def n_states(self) -> int:
        return self.valid.shape[0]

    @property
    def n_actions(self) -> int:
        return self.valid.shape[1]

    @property
    def q_bound(self) -> float:
        """Bound on any Q-table entry produced from a bounded start."""
        return self.reward_bound / (1.0 - self.discount)

    def reward_table(self, m: PopulationDistribution) -> np.ndarray:
        return np.where(self.valid, self.reward_fn(np.asarray(m, dtype=float)), 0.0)

    def kernel_tensor(self, m_ref: PopulationDistribution | None = None) -> np.ndarray:
        if m_ref is None:
            m_ref = np.full(self.n_states, 1.0 / self.n_states)
        return self.kernel_fn(np.asarray(m_ref, dtype=float))

    def reward(self, s: int, a: int, m: PopulationDistribution) -> float:
        return float(self.reward_table(m)[s, a])

    def kernel(self, s: int, a: int, m_ref: PopulationDistribution | None = None) -> np.ndarray:
        return self.kernel_tensor(m_ref)[s, a]

    def check_action(self, s: int, a: int) -> None:
        if not (0 <= s < self.n_states and 0 <= a < self.n_actions and self.valid[s, a]):
            raise StructuralError(f"action {a} is not valid in state {s}")


def constant_kernel(tensor: np.ndarray) -> KernelFn:
    """Kernel function for environments that ignore the reference population."""
    tensor = np.array(tensor, dtype=float)
    tensor.setflags(write=False)
    return lambda m_ref: tensor


def tabular_env(rewards, kernel, discount: float, valid=None, name: str = "tabular",
                reward_fn: RewardFn | None = None, reward_bound: float | None = None) -> EnvironmentModel:
    """Build an environment from explicit tables.

    ``rewards`` is an ``(S, A)`` table used for every population.  Pass
    ``reward_fn`` (together with ``reward_bound``) instead for a
    population-dependent reward.
    """
    kernel = np.array(kernel, dtype=float)
    n_states, n_actions = kernel.shape[:2]
    if valid is None:
        valid = np.ones((n_states, n_actions), dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    for s, a in zip(*np.nonzero(~valid)):
        kernel[s, a] = 0.0
        kernel[s, a, s] = 1.0
    if np.any(kernel < 0) or not np.allclose(kernel.sum(axis=2), 1.0, atol=1e-12, rtol=0):
        raise StructuralError("kernel rows must be probability vectors")
    if reward_fn is None:
        table = np.array(rewards, dtype=float)
        table.setflags(write=False)
        reward_fn = lambda m: table  # noqa: E731
        if reward_bound is None:
            reward_bound = float(np.max(np.abs(np.where(valid, table, 0.0))))
    elif reward_bound is None:
        raise StructuralError("reward_bound is required with a custom reward_fn")
    return EnvironmentModel(name, valid, discount, reward_bound, reward_fn, constant_kernel(kernel))


def inverse_cdf(cdf: np.ndarray, u: float) -> int:
    """Index drawn by inverse-CDF; zero-probability entries are never returned."""
    return int(cdf.searchsorted(u * cdf[-1], "right"))


def sample_transition(env: EnvironmentModel, s: int, a: int, m_ref: PopulationDistribution | None,
                      rng: np.random.Generator) -> int:
    """Draw a next state from ``env.kernel(s, a, m_ref)`` with one uniform variate."""
    env.check_action(s, a)
    return inverse_cdf(np.cumsum(env.kernel(s, a, m_ref)), rng.random())


def sample_action(policy: Policy, s: int, rng: np.random.Generator) -> int:
    """Draw an action from row ``s`` of ``policy`` with one uniform variate."""
    return inverse_cdf(np.cumsum(policy.probs[s]), rng.random())
