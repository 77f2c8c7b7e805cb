import numpy as np
import pytest

from mfgqmi.core import GREEDY, policy_greedy, policy_softmax, uniform_population
from mfgqmi.envs import (
    RingRoadParams,
    load_topology,
    make_ring_road,
    make_sioux_falls,
    parse_topology,
    sample_action,
    sample_transition,
    sioux_falls_path,
)
from mfgqmi.errors import ConfigError, StructuralError, TopologyError
from mfgqmi.fpi import induced_population
from conftest import REPO

# ---------------------------------------------------------------- ring road


def test_ring_dimensions_and_stimulus(ring):
    assert (ring.n_states, ring.n_actions) == (50, 50)
    params = RingRoadParams()
    assert params.stimulus(0.0) == pytest.approx(0.2)
    assert params.jam_density == pytest.approx(0.06)


def test_ring_reward_vanishes_when_speed_matches_preference(ring):
    # cell 0 has b = 0.2; at jam density the congestion term is zero; action 10 is speed 0.2
    m = np.full(50, (1 - 0.06) / 49)
    m[0] = 0.06
    assert ring.reward(0, 10, m) == pytest.approx(0.0, abs=1e-18)


def test_ring_reward_formula_spot_check(ring):
    m = uniform_population(50)
    s, a = 7, 13
    b = 0.2 * (np.sin(4 * np.pi * s * 0.02) + 1)
    expected = -0.5 * (b + 0.5 * (1 - 0.02 / 0.06) - a * 0.02) ** 2 * 0.02
    assert ring.reward(s, a, m) == pytest.approx(expected, rel=1e-13)


def test_ring_zero_speed_stays(ring):
    for s in range(50):
        row = ring.kernel(s, 0)
        assert row[s] == 1.0 and row.sum() == 1.0


def test_ring_kernel_rows_are_two_point_distributions(ring):
    kernel = ring.kernel_tensor()
    np.testing.assert_array_equal(kernel.sum(axis=2), 1.0)
    assert np.all(np.count_nonzero(kernel, axis=2) <= 2)
    s, a = 10, 25
    assert kernel[s, a, 11] == pytest.approx(0.5)


@pytest.mark.parametrize("speed", [0, 1, 17, 49])
def test_constant_speed_policy_has_uniform_stationary_law(ring, speed):
    q = np.zeros((50, 50))
    q[:, speed] = 1.0
    mu = induced_population(policy_greedy(q, ring.valid), ring)
    np.testing.assert_allclose(mu, 1 / 50, atol=1e-8)


def test_ring_reward_bound_holds_on_extreme_populations(ring, rng):
    populations = [np.eye(50)[i] for i in range(50)] + [rng.dirichlet(np.ones(50) * 0.1) for _ in range(200)]
    for m in populations:
        assert np.max(np.abs(ring.reward_table(m))) <= ring.reward_bound + 1e-15
    # the bound is attained at a point mass with top speed, so it is not loose
    worst = max(np.max(np.abs(ring.reward_table(np.eye(50)[i]))) for i in range(50))
    assert worst == pytest.approx(ring.reward_bound, rel=1e-12)


def test_ring_cfl_violation_rejected():
    with pytest.raises(ConfigError, match="CFL"):
        make_ring_road(RingRoadParams(delta_t=0.03))


def test_ring_sampler_matches_kernel_frequency(ring):
    rng = np.random.default_rng(7)
    draws = np.array([sample_transition(ring, 3, 49, None, rng) for _ in range(100_000)])
    assert set(np.unique(draws)) <= {3, 4}
    assert np.mean(draws == 4) == pytest.approx(0.98, abs=0.005)


def test_ring_sampler_zero_speed_always_stays(ring):
    rng = np.random.default_rng(0)
    assert all(sample_transition(ring, 12, 0, None, rng) == 12 for _ in range(1000))


# ---------------------------------------------------------------- Sioux Falls


def test_shipped_network_shape(sioux):
    topo = load_topology()
    assert len(topo.nodes) == 24
    assert topo.n_edges == 75
    restart = topo.edges[topo.restart_index]
    assert (restart.tail, restart.head, restart.edge_id) == (20, 1, 75)
    assert all(len(topo.valid_actions(i)) > 0 for i in range(75))
    assert sioux.n_states == sioux.n_actions == 75


def test_valid_actions_are_outgoing_edges_of_head():
    topo = load_topology()
    for i, edge in enumerate(topo.edges):
        expected = tuple(j for j, e in enumerate(topo.edges) if e.tail == edge.head)
        assert topo.valid_actions(i) == expected


def test_shipped_data_file_matches_package_copy():
    assert (REPO / "data" / "sioux_falls_edges.csv").read_bytes() == sioux_falls_path().read_bytes()


def test_sioux_rewards(sioux):
    restart = 74
    m = np.full(75, 0.0)
    m[0] = 0.01
    m[restart] = 0.99
    first_valid = [int(np.flatnonzero(sioux.valid[s])[0]) for s in range(75)]
    assert sioux.reward(restart, first_valid[restart], m) == 10.0
    assert sioux.reward(0, first_valid[0], m) == pytest.approx(-10.0)
    assert sioux.reward(5, first_valid[5], m) == 0.0


def test_sioux_kernel_is_deterministic_move_to_chosen_edge(sioux):
    rng = np.random.default_rng(1)
    for s in range(75):
        for a in np.flatnonzero(sioux.valid[s]):
            assert sample_transition(sioux, s, int(a), None, rng) == a


def test_sioux_invalid_action_rejected(sioux):
    s = 0
    bad = int(np.flatnonzero(~sioux.valid[s])[0])
    with pytest.raises(StructuralError):
        sample_transition(sioux, s, bad, None, np.random.default_rng(0))


def test_uniform_walk_always_reaches_restart_edge(sioux):
    rng = np.random.default_rng(2024)
    valid = sioux.valid
    cdf = np.cumsum(valid / valid.sum(axis=1, keepdims=True), axis=1)
    n_rollouts, restart = 10_000, 74
    state = rng.integers(0, 75, n_rollouts)
    done = state == restart
    for _ in range(10_000):
        if done.all():
            break
        u = rng.random(n_rollouts)
        nxt = (u[:, None] * cdf[state, -1][:, None] >= cdf[state]).sum(axis=1)
        state = np.where(done, state, nxt)
        done |= state == restart
    assert done.all()


TRIANGLE = """edge_id,tail_node,head_node
1,1,2
2,2,3
3,3,1
"""


def test_triangle_topology():
    topo = parse_topology(TRIANGLE, origin=1, destination=3)
    assert topo.n_edges == 4
    assert [(e.tail, e.head) for e in topo.edges][-1] == (3, 1)
    assert topo.valid_actions(topo.index_of(1)) == (topo.index_of(2),)


def test_unknown_node_reports_node_and_line():
    text = TRIANGLE + "4,3,99\n"
    with pytest.raises(TopologyError, match=r"line 5: .*node 99"):
        parse_topology(text, origin=1, destination=3, nodes=[1, 2, 3])


def test_duplicate_edge_id_reports_line():
    with pytest.raises(TopologyError, match=r"line 4: duplicate edge id 2"):
        parse_topology(TRIANGLE.replace("3,3,1", "2,3,1"), origin=1, destination=3)


def test_unreachable_destination():
    text = "edge_id,tail_node,head_node\n1,1,2\n2,2,1\n3,3,1\n"
    with pytest.raises(TopologyError, match="unreachable"):
        parse_topology(text, origin=1, destination=3)


def test_dead_end_edge_reports_line():
    text = TRIANGLE + "4,2,4\n"
    with pytest.raises(TopologyError, match=r"line 5: .*no outgoing edge"):
        parse_topology(text, origin=1, destination=3)


def test_header_and_comments():
    assert parse_topology("# a comment\n" + TRIANGLE, origin=1, destination=3).n_edges == 4
    with pytest.raises(TopologyError, match="header"):
        parse_topology("from,to\n1,2\n", origin=1, destination=2)


def test_included_restart_edge_is_not_duplicated():
    topo = parse_topology(TRIANGLE, origin=1, destination=2, restart_included=False)
    assert topo.n_edges == 4
    text = "edge_id,tail_node,head_node\n1,1,2\n2,2,1\n"
    assert parse_topology(text, origin=1, destination=2, restart_included=True).n_edges == 2


# ---------------------------------------------------------------- action sampling


def test_sample_action_one_hot():
    pi = policy_greedy(np.array([[0.0, 1.0, 0.0]]), np.ones((1, 3), bool))
    rng = np.random.default_rng(3)
    assert all(sample_action(pi, 0, rng) == 1 for _ in range(1000))


def test_sample_action_uniform_frequencies():
    pi = policy_softmax(np.zeros((1, 2)), 1.0, np.ones((1, 2), bool))
    rng = np.random.default_rng(4)
    draws = np.array([sample_action(pi, 0, rng) for _ in range(100_000)])
    assert np.mean(draws == 0) == pytest.approx(0.5, abs=0.01)


def test_sample_action_never_invalid():
    mask = np.array([[False, True, False, True]])
    pi = policy_softmax(np.zeros((1, 4)), 1.0, mask)
    rng = np.random.default_rng(5)
    draws = {sample_action(pi, 0, rng) for _ in range(100_000)}
    assert draws <= {1, 3}


def test_greedy_operator_is_shared_constant():
    assert GREEDY.kind == "greedy"
