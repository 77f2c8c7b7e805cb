"""Speed control on a discretized ring road.

Cells ``i = 0..S-1`` sit at locations ``s_i = i * delta_s`` on the unit
circle; action ``j`` selects speed ``a_j = j * delta_a``.  A vehicle in cell
``i`` at speed ``a`` covers ``a * delta_t / delta_s`` of a cell per step,
which we realize by stochastic rounding: advance one cell with that
probability, otherwise stay.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from .base import EnvironmentModel, constant_kernel


@dataclass(frozen=True)
class RingRoadParams:
    n_cells: int = 50
    delta_s: float = 0.02
    delta_a: float = 0.02
    delta_t: float = 0.02
    mu_jam: float | None = None  # defaults to 3 / n_cells
    a_max: float = 1.0
    stimulus_amplitude: float = 0.2
    gamma: float = 0.98

    @property
    def jam_density(self) -> float:
        return 3.0 / self.n_cells if self.mu_jam is None else self.mu_jam

    @property
    def n_speeds(self) -> int:
        return int(round(self.a_max / self.delta_a))

    def locations(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.delta_s

    def speeds(self) -> np.ndarray:
        return np.arange(self.n_speeds) * self.delta_a

    def stimulus(self, s) -> np.ndarray:
        """Location preference ``b(s) = amp * (sin(4 pi s) + 1)``."""
        return self.stimulus_amplitude * (np.sin(4.0 * np.pi * np.asarray(s)) + 1.0)


def ring_road_reward(params: RingRoadParams, m: np.ndarray) -> np.ndarray:
    b = params.stimulus(params.locations())[:, None]
    congestion = 0.5 * (1.0 - m[:, None] / params.jam_density)
    gap = b + congestion - params.speeds()[None, :] / params.a_max
    return -0.5 * gap**2 * params.delta_s


def ring_road_kernel(params: RingRoadParams) -> np.ndarray:
    n, move = params.n_cells, params.speeds() * params.delta_t / params.delta_s
    kernel = np.zeros((n, params.n_speeds, n))
    cells = np.arange(n)
    kernel[cells, :, cells] = 1.0 - move
    kernel[cells, :, (cells + 1) % n] += move
    return kernel


def ring_road_reward_bound(params: RingRoadParams) -> float:
    b = params.stimulus(params.locations())
    top_speed = params.speeds()[-1] / params.a_max
    high = b.max() + 0.5
    low = b.min() + 0.5 * (1.0 - 1.0 / params.jam_density) - top_speed
    return 0.5 * max(abs(high), abs(low)) ** 2 * params.delta_s


def make_ring_road(params: RingRoadParams | None = None) -> EnvironmentModel:
    params = params or RingRoadParams()
    if params.delta_t > params.delta_s / params.a_max + 1e-15:
        raise ConfigError(
            f"CFL condition violated: delta_t={params.delta_t} > delta_s/a_max={params.delta_s / params.a_max}")
    if not math.isclose(params.n_cells * params.delta_s, 1.0):
        raise ConfigError("n_cells * delta_s must cover the unit ring")
    kernel = ring_road_kernel(params)
    valid = np.ones((params.n_cells, params.n_speeds), dtype=bool)
    return EnvironmentModel(
        name="ring_road",
        valid=valid,
        discount=params.gamma,
        reward_bound=ring_road_reward_bound(params),
        reward_fn=lambda m: ring_road_reward(params, m),
        kernel_fn=constant_kernel(kernel),
        params=asdict(params),
    )
