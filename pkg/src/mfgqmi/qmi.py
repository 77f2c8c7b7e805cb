"""Online single-agent QM iteration.

One agent follows a single continuing trajectory and, from each observed
transition, updates both its Q-table (a temporal-difference step) and its
running estimate ``M`` of the population distribution (a stochastic
averaging step).  Rewards are evaluated at the estimate frozen at the start
of the outer iteration, so no model access is needed beyond the simulator.

Two variants are provided:

* ``off_policy``: the behavior policy is fixed at ``Gamma(Q_{k,0})`` for a
  whole outer iteration and the TD target action is drawn from
  ``Gamma(Q_{k,t})`` (Q-learning style).
* ``on_policy``: the behavior policy is refreshed every step from a
  weighted average of the Q-tables seen so far in the outer iteration, and
  the TD target uses the action actually taken next (SARSA style).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import GREEDY, PolicyOperator, PopulationDistribution, QTable, as_population, as_qtable
from .envs.base import EnvironmentModel, inverse_cdf
from .errors import ConfigError
from .trace import LearningTrace

VARIANTS = ("off_policy", "on_policy")


@dataclass(frozen=True)
class AlphaSchedule:
    """Q-learning step sizes: ``h / (t + t0)`` (harmonic) or ``c`` (constant)."""

    kind: str = "harmonic"
    h: float = 1.0
    t0: float = 10.0
    c: float = 0.001

    def __post_init__(self):
        if self.kind not in ("harmonic", "constant"):
            raise ConfigError(f"unknown step-size schedule {self.kind!r}")
        if self.kind == "harmonic":
            if not (self.h > 0 and self.t0 > 0):
                raise ConfigError("harmonic schedule needs h > 0 and t0 > 0")
        elif not self.c > 0:
            raise ConfigError("constant step size must be positive")
        if self(0) > 1:
            raise ConfigError(f"initial step size {self(0)} exceeds 1")

    def __call__(self, t: int) -> float:
        if self.kind == "harmonic":
            return self.h / (t + self.t0)
        return self.c

    def to_dict(self) -> dict:
        if self.kind == "harmonic":
            return {"kind": "harmonic", "h": self.h, "t0": self.t0}
        return {"kind": "constant", "c": self.c}


def make_alpha_schedule(kind: str, **params) -> AlphaSchedule:
    """``make_alpha_schedule("harmonic", h=1, t0=9)`` or ``make_alpha_schedule("constant", c=1e-3)``."""
    return AlphaSchedule(kind, **params)


def beta_at(t: int) -> float:
    """Population step size ``1 / (t + 1)``; turns the M-update into a running average."""
    return 1.0 / (t + 1)


@dataclass(frozen=True)
class QmiConfig:
    """Settings of one QM-iteration run.

    ``global_clock`` indexes the step-size schedules by the total step count
    instead of restarting them every outer iteration.  ``refresh_every``
    controls how often the on-policy behavior policy picks up the mixed
    Q-table (1 means every step).  ``update_q`` and ``update_m`` switch the
    two stochastic updates off for diagnostics.
    """

    variant: str = "off_policy"
    outer_iters: int = 50
    inner_iters: int = 1000
    alpha: AlphaSchedule = field(default_factory=AlphaSchedule)
    mixing_offset: float = 1.0
    policy_op: PolicyOperator = GREEDY
    exploration: float = 0.05
    seed: int = 0
    global_clock: bool = False
    refresh_every: int = 1
    update_q: bool = True
    update_m: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ConfigError("outer and inner iteration counts must be at least 1")
        if self.mixing_offset < 0:
            raise ConfigError("mixing offset must be non-negative")
        if not 0 <= self.exploration < 1:
            raise ConfigError("exploration floor must lie in [0, 1)")
        if self.refresh_every < 1:
            raise ConfigError("refresh_every must be at least 1")


@dataclass
class AgentState:
    """Everything the online agent carries between steps."""

    q: QTable
    m: PopulationDistribution
    mixed_q: QTable
    weight_sum: float
    current_state: int
    behavior_policy: np.ndarray  # (S, A) probabilities of the current behavior policy


def qmi_q_update(q: QTable, obs: tuple, alpha: float, gamma: float) -> QTable:
    """TD step on entry ``(s, a)`` of a copy of ``q``; ``obs = (s, a, r, s_next, a_next)``."""
    s, a, r, s_next, a_next = obs
    out = np.array(q, dtype=float)
    out[s, a] -= alpha * (out[s, a] - r - gamma * out[s_next, a_next])
    return out


def qmi_m_update(m: PopulationDistribution, s_next: int, beta: float) -> PopulationDistribution:
    """Move ``m`` a fraction ``beta`` towards the point mass at ``s_next``."""
    out = (1.0 - beta) * np.asarray(m, dtype=float)
    out[s_next] += beta
    return out


def mix_q(mixed_q: QTable, weight_sum: float, new_q: QTable, new_weight: float) -> tuple[QTable, float]:
    """Fold ``new_q`` into a running weighted average of Q-tables."""
    total = weight_sum + new_weight
    mixed = (weight_sum * np.asarray(mixed_q) + new_weight * np.asarray(new_q)) / total
    return mixed, total


def _explore(probs: np.ndarray, valid: np.ndarray, epsilon: float) -> np.ndarray:
    if epsilon == 0:
        return probs
    return (1.0 - epsilon) * probs + epsilon * valid / valid.sum(axis=-1, keepdims=True)


def _target_action(op: PolicyOperator, q_row: np.ndarray, valid_row: np.ndarray, penalty_row: np.ndarray,
                   k: int, u: float) -> int:
    """Action drawn from ``op(q)`` in one state; the greedy case skips building the one-hot row."""
    if op.kind == "greedy":
        return int((q_row + penalty_row).argmax())
    return inverse_cdf(np.cumsum(op.rows(q_row, valid_row, k)), u)


def _initial_mixture(q: QTable, offset: float) -> tuple[QTable, float]:
    if offset > 0:
        return mix_q(np.zeros_like(q), 0.0, q, offset)
    return q.copy(), 0.0


@dataclass
class QmiResult:
    q: QTable
    m: PopulationDistribution
    trace: LearningTrace
    agent: AgentState


def run_qmi(env: EnvironmentModel, q0: QTable, m0: PopulationDistribution, cfg: QmiConfig,
            metrics_hook=None, observer=None) -> QmiResult:
    """Run ``cfg.outer_iters`` outer iterations of ``cfg.inner_iters`` online steps each.

    Randomness comes from two generators seeded from ``cfg.seed``: one drives
    the trajectory (initial state, actions, transitions), the other only the
    off-policy target actions.  The trajectory of the off-policy variant is
    therefore independent of how the Q-table evolves within an outer
    iteration.  ``metrics_hook(trace, k, samples, q, m, wall_ms)`` is called
    after every outer iteration and returns the extended trace.
    ``observer(k, t, obs, q, m)``, if given, sees every step after both
    updates, with ``obs = (s, a, r, s_next, a_target)``; it must not modify
    the arrays it receives.
    """
    q = as_qtable(q0, env.valid.shape)
    q = np.where(env.valid, q, 0.0)
    m = as_population(m0, env.n_states)
    traj_seed, target_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    traj_rng = np.random.default_rng(traj_seed)
    target_rng = np.random.default_rng(target_seed)

    valid = env.valid
    penalty = np.where(valid, 0.0, -np.inf)
    gamma = env.discount
    op = cfg.policy_op
    eps = cfg.exploration
    on_policy = cfg.variant == "on_policy"
    T = cfg.inner_iters

    s = inverse_cdf(np.cumsum(m), traj_rng.random())
    trace = LearningTrace(meta={"env": env.name, "algorithm": f"qmi_{cfg.variant}", "seed": cfg.seed})
    mixed, weight_sum = _initial_mixture(q, cfg.mixing_offset)
    behavior = _explore(op.rows(q, valid, 0), valid, eps)
    elapsed = 0.0

    for k in range(cfg.outer_iters):
        start = time.perf_counter()
        m_frozen = m.copy()
        rewards = env.reward_table(m_frozen)
        kernel_cdf = np.cumsum(env.kernel_tensor(m_frozen), axis=2)
        behavior = _explore(op.rows(q, valid, k), valid, eps)
        behavior_cdf = np.cumsum(behavior, axis=1)
        mixed, weight_sum = _initial_mixture(q, cfg.mixing_offset)
        policy_source = mixed

        u_traj = traj_rng.random(2 * T + 1).tolist()
        u_target = target_rng.random(T).tolist()
        a = inverse_cdf(behavior_cdf[s], u_traj[0])
        for t in range(T):
            clock = k * T + t if cfg.global_clock else t
            s_next = inverse_cdf(kernel_cdf[s, a], u_traj[2 * t + 1])
            if on_policy:
                row = _explore(op.rows(policy_source[s_next], valid[s_next], k), valid[s_next], eps)
                a_next = inverse_cdf(np.cumsum(row), u_traj[2 * t + 2])
                a_target = a_next
            else:
                a_next = inverse_cdf(behavior_cdf[s_next], u_traj[2 * t + 2])
                a_target = _target_action(op, q[s_next], valid[s_next], penalty[s_next], k, u_target[t])
            if cfg.update_q:
                q[s, a] -= cfg.alpha(clock) * (q[s, a] - rewards[s, a] - gamma * q[s_next, a_target])
            if cfg.update_m:
                beta = beta_at(clock)
                m *= 1.0 - beta
                m[s_next] += beta
            if observer is not None:
                observer(k, t, (s, a, rewards[s, a], s_next, a_target), q, m)
            if on_policy:
                mixed, weight_sum = mix_q(mixed, weight_sum, q, (t + 1) + cfg.mixing_offset)
                if (t + 1) % cfg.refresh_every == 0:
                    policy_source = mixed
            s, a = s_next, a_next
        elapsed += time.perf_counter() - start
        if metrics_hook is not None:
            trace = metrics_hook(trace, k, (k + 1) * T, q.copy(), m.copy(), elapsed * 1e3)

    if on_policy:
        behavior = _explore(op.rows(policy_source, valid, cfg.outer_iters - 1), valid, eps)
    agent = AgentState(q, m, mixed, weight_sum, int(s), behavior)
    return QmiResult(q, m, trace, agent)


def harmonic_for_env(env: EnvironmentModel, lambda_min: float | None = None) -> AlphaSchedule:
    """Harmonic schedule with ``h = 4 / (lambda_min (1 - gamma))`` and ``t0 = 4 h``.

    ``lambda_min`` defaults to ``1 / (S A)``, the smallest visitation
    frequency under uniform exploration of all pairs.
    """
    if lambda_min is None:
        lambda_min = 1.0 / valid_pair_count(env)
    h = 4.0 / (lambda_min * (1.0 - env.discount))
    return AlphaSchedule("harmonic", h=h, t0=4.0 * h)


def valid_pair_count(env: EnvironmentModel) -> int:
    return int(np.count_nonzero(env.valid))
