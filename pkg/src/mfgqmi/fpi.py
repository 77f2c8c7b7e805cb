"""Model-based fixed-point iteration: best response, induced population, FPI loop.

These solvers read the full model (kernel and reward) and serve both as the
baseline the online learner is compared against and as the source of
reference equilibria for the metrics.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import (
    GREEDY,
    Policy,
    PolicyOperator,
    PopulationDistribution,
    QTable,
    as_population,
    renormalize,
    induced_kernel,
    uniform_population,
)
from .envs.base import EnvironmentModel
from .errors import ConfigError, ConvergenceError
from .trace import LearningTrace

MetricsHook = Callable[..., LearningTrace]


@dataclass(frozen=True)
class FpiConfig:
    """FPI protocol settings.

    ``sweeps_per_iter`` Bellman sweeps approximate each best response; the
    induced population is solved to ``ip_tolerance``.  ``br_tolerance`` is
    used wherever a best response is solved to convergence (metrics).  With
    ``warm_start`` each best response starts from the previous Q-table
    instead of zeros.
    """

    sweeps_per_iter: int = 20
    outer_iters: int = 50
    br_tolerance: float = 1e-8
    ip_tolerance: float = 1e-12
    policy_op: PolicyOperator = GREEDY
    warm_start: bool = False
    ip_max_iters: int = 200_000

    def __post_init__(self):
        if self.sweeps_per_iter < 1 or self.outer_iters < 1:
            raise ConfigError("sweep and outer-iteration counts must be at least 1")
        if not (self.br_tolerance > 0 and self.ip_tolerance > 0):
            raise ConfigError("solver tolerances must be positive")


@dataclass
class FpiResult:
    q: QTable
    m: PopulationDistribution
    trace: LearningTrace
    populations: list = field(default_factory=list)  # m_0, m_1, ..., m_K


class _Backup:
    """Bellman backup with reward and kernel frozen at one population."""

    def __init__(self, env: EnvironmentModel, m: PopulationDistribution, policy_op: PolicyOperator, k: int):
        self.valid = env.valid
        self.reward = env.reward_table(m)
        self.kernel = env.kernel_tensor(m)
        self.gamma = env.discount
        self.policy_op = policy_op
        self.k = k

    def __call__(self, q: QTable) -> QTable:
        pi = self.policy_op.rows(q, self.valid, self.k)
        v = np.einsum("sa,sa->s", pi, np.where(self.valid, q, 0.0))
        out = self.reward + self.gamma * (self.kernel @ v)
        return np.where(self.valid, out, 0.0)


def best_response(m: PopulationDistribution, env: EnvironmentModel, policy_op: PolicyOperator = GREEDY,
                  k: int = 0, max_sweeps: int = 100_000, tol: float = 1e-10,
                  q0: QTable | None = None) -> QTable:
    """Value iteration on Q-tables with the population frozen at ``m``.

    Stops once the sup-norm change of one sweep is at most ``tol``.  With
    ``tol == 0`` exactly ``max_sweeps`` sweeps are run and no error is raised.
    """
    backup = _Backup(env, m, policy_op, k)
    q = np.zeros(env.valid.shape) if q0 is None else np.where(env.valid, q0, 0.0)
    delta = math.inf
    for _ in range(max_sweeps):
        q_next = backup(q)
        delta = float(np.max(np.abs(q_next - q)))
        q = q_next
        if tol > 0 and delta <= tol:
            return q
    if tol > 0:
        raise ConvergenceError(f"best response did not converge in {max_sweeps} sweeps", residual=delta)
    return q


def chain_period(kernel: np.ndarray) -> int:
    """Largest period over the closed communicating classes of a chain."""
    graph = csr_matrix(kernel > 0)
    n_classes, labels = connected_components(graph, directed=True, connection="strong")
    rows, cols = graph.nonzero()
    period = 1
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        leaving = np.any(labels[cols[np.isin(rows, members)]] != c)
        if leaving:
            continue
        level = {int(members[0]): 0}
        order = [int(members[0])]
        g = 0
        for u in order:
            for v in graph.indices[graph.indptr[u]:graph.indptr[u + 1]]:
                v = int(v)
                if v not in level:
                    level[v] = level[u] + 1
                    order.append(v)
                else:
                    g = math.gcd(g, level[u] + 1 - level[v])
        period = max(period, g if g else 1)
    return period


def stationary_power(kernel: np.ndarray, tol: float = 1e-12, max_iters: int = 200_000,
                     start: np.ndarray | None = None) -> PopulationDistribution:
    """Power iteration ``mu <- mu P`` until the L1 change is at most ``tol``."""
    period = chain_period(kernel)
    if period > 1:
        raise ConvergenceError(
            f"induced chain is periodic with period {period}; power iteration oscillates",
            diagnostic={"period": period})
    mu = uniform_population(kernel.shape[0]) if start is None else np.array(start, dtype=float)
    step = math.inf
    for _ in range(max_iters):
        nxt = renormalize(mu @ kernel)
        step = float(np.abs(nxt - mu).sum())
        mu = nxt
        if step <= tol:
            return mu
    two_step = float(np.abs(renormalize(renormalize(mu @ kernel) @ kernel) - mu).sum())
    raise ConvergenceError(
        f"induced population did not converge in {max_iters} iterations", residual=step,
        diagnostic={"one_step_l1": step, "two_step_l1": two_step})


def induced_population(policy: Policy, env: EnvironmentModel, m_ref: PopulationDistribution | None = None,
                       tol: float = 1e-12, max_iters: int = 200_000,
                       start: PopulationDistribution | None = None) -> PopulationDistribution:
    """Stationary distribution of the chain ``policy`` induces, by power iteration from uniform."""
    if m_ref is None:
        m_ref = uniform_population(env.n_states)
    return stationary_power(induced_kernel(policy, env, m_ref), tol, max_iters, start)


def fpi_solve(env: EnvironmentModel, m0: PopulationDistribution, cfg: FpiConfig,
              metrics_hook: MetricsHook | None = None) -> FpiResult:
    """Alternate truncated best responses and induced populations for ``cfg.outer_iters`` rounds.

    Row ``k`` of the trace describes ``(q_{k+1}, m_{k+1})``; the sample
    column counts state updates, ``(k + 1) * S * sweeps_per_iter``.
    """
    m = as_population(m0, env.n_states)
    q = np.zeros(env.valid.shape)
    trace = LearningTrace(meta={"env": env.name, "algorithm": "fpi"})
    populations = [m]
    elapsed = 0.0
    for k in range(cfg.outer_iters):
        start = time.perf_counter()
        q = best_response(m, env, cfg.policy_op, k, max_sweeps=cfg.sweeps_per_iter, tol=0.0,
                          q0=q if cfg.warm_start else None)
        policy = cfg.policy_op(q, env.valid, k)
        m = induced_population(policy, env, m, tol=cfg.ip_tolerance, max_iters=cfg.ip_max_iters)
        populations.append(m)
        elapsed += time.perf_counter() - start
        if metrics_hook is not None:
            samples = (k + 1) * env.n_states * cfg.sweeps_per_iter
            trace = metrics_hook(trace, k, samples, q, m, elapsed * 1e3)
    return FpiResult(q, m, trace, populations)


class _GammaMap:
    """The exact FPI map ``m -> Gamma_IP(Gamma_BR(m))`` with warm-started best responses."""

    def __init__(self, env: EnvironmentModel, op: PolicyOperator, br_tol: float, ip_tol: float):
        self.env, self.op, self.br_tol, self.ip_tol = env, op, br_tol, ip_tol
        self.q: QTable | None = None

    def best_response(self, m: PopulationDistribution) -> QTable:
        return best_response(m, self.env, self.op, tol=self.br_tol, q0=self.q)

    def __call__(self, m: PopulationDistribution, keep: bool = True) -> PopulationDistribution:
        q = self.best_response(m)
        if keep:
            self.q = q
        return induced_population(self.op(q, self.env.valid), self.env, m, tol=self.ip_tol)


def _plain_fpi(gmap: _GammaMap, m: PopulationDistribution, tol: float, max_outer: int,
               window: int) -> PopulationDistribution:
    distances: list[float] = []
    for _ in range(max_outer):
        m_next = gmap(m)
        dist = float(np.linalg.norm(m_next - m))
        m = m_next
        if dist <= tol:
            return m
        distances.append(dist)
        if len(distances) > window and distances[-1] > distances[-1 - window]:
            raise ConvergenceError(
                "fixed-point iteration is not contracting on this game; a stabilized scheme "
                "(fictitious play, mirror descent) would be needed", residual=dist,
                diagnostic={"reason": "not_contracting"})
    raise ConvergenceError(f"ground truth did not converge in {max_outer} outer iterations",
                           residual=distances[-1], diagnostic={"reason": "max_outer"})


def newton_fixed_point(gmap, m: PopulationDistribution, tol: float, max_iters: int = 25,
                       fd_step: float = 1e-7) -> PopulationDistribution:
    """Solve ``gmap(m) = m`` on the simplex by Newton steps with a finite-difference Jacobian.

    Steps keep the total mass fixed and are halved until the iterate stays
    non-negative and the residual ``||gmap(m) - m||_2`` decreases.
    """
    n = m.shape[0]
    g = gmap(m)
    res = float(np.linalg.norm(g - m))
    for _ in range(max_iters):
        if res <= tol:
            return m
        jac = np.empty((n, n))
        for j in range(n):
            h = fd_step if m[j] > fd_step else -fd_step
            probe = m.copy()
            probe[j] += h
            jac[:, j] = (gmap(probe / probe.sum(), keep=False) * probe.sum() - g) / h
        system = np.vstack([jac - np.eye(n), np.ones(n)])
        step = np.linalg.lstsq(system, np.concatenate([m - g, [0.0]]), rcond=None)[0]
        scale = 1.0
        while scale > 1e-6:
            trial = m + scale * step
            if np.all(trial >= 0):
                trial = renormalize(trial)
                g_trial = gmap(trial)
                res_trial = float(np.linalg.norm(g_trial - trial))
                if res_trial < res:
                    m, g, res = trial, g_trial, res_trial
                    break
            scale /= 2
        else:
            break
    if res <= tol:
        return m
    raise ConvergenceError("Newton solve of the fixed-point equation stalled", residual=res)


def ground_truth_mfne(env: EnvironmentModel, policy_op: PolicyOperator, tol: float = 1e-10,
                      max_outer: int = 5000, m0: PopulationDistribution | None = None,
                      br_tol: float = 1e-13, ip_tol: float = 1e-13, window: int = 50,
                      k: int | None = None, method: str = "auto",
                      damping: float = 0.2) -> tuple[QTable, PopulationDistribution]:
    """Reference equilibrium ``(Q*, mu*)`` under a fixed policy operator.

    ``method="fpi"`` iterates the exact FPI map until successive populations
    are within ``tol`` and raises ``ConvergenceError`` when the distance grows
    over a ``window``-iteration span (the game does not contract in practice).

    ``method="auto"`` (default) does the same first.  If a softmax game does
    not contract, the same fixed-point equation is solved in three
    deterministic stages: the inverse temperature is halved until plain
    iteration converges; from that solution the averaged map
    ``m <- (1 - damping) m + damping Gamma(m)`` is iterated at the requested
    temperature; Newton steps then polish the result.  When several
    equilibria exist, the one returned is the one this path reaches.  In
    both modes ``||Gamma(mu*) - mu*||_2 <= tol`` on return.  A scheduled
    operator must be pinned with ``k``.
    """
    if method not in ("auto", "fpi"):
        raise ConfigError(f"unknown ground-truth method {method!r}")
    if not 0 < damping <= 1:
        raise ConfigError("damping must lie in (0, 1]")
    if k is not None:
        op = policy_op.at(k)
    elif policy_op.schedule != "constant":
        raise ConfigError("ground truth needs a fixed operator; pass k to pin the temperature schedule")
    else:
        op = policy_op
    start = uniform_population(env.n_states) if m0 is None else as_population(m0, env.n_states)
    gmap = _GammaMap(env, op, br_tol, ip_tol)
    try:
        m = _plain_fpi(gmap, start, tol, max_outer, window)
    except ConvergenceError as err:
        if method == "fpi" or op.kind != "softmax":
            raise
        m = _continuation(env, op, start, tol, max_outer, window, br_tol, ip_tol, damping, err)
        gmap = _GammaMap(env, op, br_tol, ip_tol)
        gmap(m)
    return gmap.best_response(m), m


COARSE_TOL = 1e-6


def _continuation(env, op, start, tol, max_outer, window, br_tol, ip_tol, damping, original_error):
    level = op.inverse_temperature
    m = None
    for _ in range(30):
        level /= 2
        coarse = _GammaMap(env, PolicyOperator("softmax", level), 1e-9, 1e-10)
        try:
            m = _plain_fpi(coarse, start, COARSE_TOL, max_outer, window)
            break
        except ConvergenceError:
            continue
    if m is None:
        raise original_error
    coarse = _GammaMap(env, op, 1e-9, 1e-10)
    for _ in range(max_outer):
        image = coarse(m)
        if np.linalg.norm(image - m) <= COARSE_TOL:
            break
        m = renormalize((1.0 - damping) * m + damping * image)
    else:
        raise ConvergenceError("averaged fixed-point iteration did not settle",
                               residual=float(np.linalg.norm(image - m))) from original_error
    try:
        return newton_fixed_point(_GammaMap(env, op, br_tol, ip_tol), m, tol)
    except ConvergenceError as err:
        raise ConvergenceError("Newton polish of the reference equilibrium stalled",
                               residual=err.residual) from original_error
