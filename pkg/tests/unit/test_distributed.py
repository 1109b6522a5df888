"""Unit tests for pdsplit.distributed module."""

import numpy as np
import pytest

from pdsplit.composite import BatchProblem
from pdsplit.distributed import (
    ConsensusNetwork,
    DistributedState,
    NetworkSimulator,
    consensus_spread,
    daspdsds_step,
    distributed_step,
    dual_antisymmetry_gap,
    run_daspdsds,
    run_distributed,
)
from pdsplit.engine import CoverageError, StopRule, make_rng
from pdsplit.graph import ActivationSchedule, AgentGraph
from pdsplit.lasso import split_batches
from pdsplit.prox import DomainError, ZeroFunction
from pdsplit.schedule import ScheduleError, StepSchedule
from pdsplit.smooth import SquaredDistanceSmooth
from pdsplit.solvers import ADMMState, admmds_step

CENTERS = [1.0, -2.0, 4.0, 0.5]


def averaging_network(graph: AgentGraph, dim: int = 1) -> ConsensusNetwork:
    """Agent n holds 1/2 ||x - c_n||^2; the minimizer is the mean of the c_n."""
    centers = CENTERS[: graph.num_nodes]
    problem = BatchProblem(
        smooth=[SquaredDistanceSmooth(np.full(dim, c)) for c in centers],
        prox=[ZeroFunction() for _ in centers],
        dim=dim,
    )
    return ConsensusNetwork(graph, problem)


def antisymmetric_duals(network: ConsensusNetwork, rng: np.random.Generator) -> np.ndarray:
    half = rng.standard_normal((network.graph.num_edges, network.problem.dim))
    return np.stack([half, -half], axis=1)


class TestConsensusNetwork:
    """Tests for ConsensusNetwork."""

    def test_lipschitz_uses_degrees(self):
        """Test L = max_n beta_n / d_n."""
        network = averaging_network(AgentGraph.path(3))
        assert network.lipschitz == pytest.approx(1.0)
        assert averaging_network(AgentGraph.ring(4)).lipschitz == pytest.approx(0.5)

    def test_rejects_node_count_mismatch(self, small_lasso):
        """Test a problem with a different number of terms raises DomainError."""
        with pytest.raises(DomainError):
            ConsensusNetwork(AgentGraph.ring(3), split_batches(small_lasso, 4))

    def test_initial_state_broadcasts(self):
        """Test a single-point x0 is copied to every agent."""
        network = averaging_network(AgentGraph.ring(4), dim=2)
        state = network.initial_state(np.array([1.0, 2.0]))
        assert state.x.shape == (4, 2)
        assert state.y.shape == (4, 2, 2)
        np.testing.assert_array_equal(state.x[3], [1.0, 2.0])
        with pytest.raises(DomainError):
            network.initial_state(np.zeros((3, 2)))

    def test_as_composite(self):
        """Test the product-space form keeps the network constant."""
        network = averaging_network(AgentGraph.star(4))
        problem = network.as_composite()
        assert problem.composed_lipschitz() == pytest.approx(network.lipschitz)
        assert problem.D is network.edge_map


class TestDiagnostics:
    """Tests for spread and antisymmetry diagnostics."""

    def test_spread_and_gap(self):
        """Test both diagnostics on a hand-built state."""
        state = DistributedState(
            x=np.array([[0.0], [2.0]]),
            y=np.array([[[1.0], [-0.5]]]),
        )
        assert consensus_spread(state) == pytest.approx(1.0)
        assert consensus_spread(state.x) == pytest.approx(1.0)
        assert dual_antisymmetry_gap(state) == pytest.approx(0.5)
        assert state.x_mean == pytest.approx([1.0])


class TestDistributedStep:
    """Tests for the synchronous tick."""

    def test_matches_hand_computed_update(self, rng):
        """Test the per-agent formulas on a path of three agents."""
        network = averaging_network(AgentGraph.path(3))
        tau, mu = 0.5, 2.0
        schedule = StepSchedule.constant(tau, mu=mu)
        x = rng.standard_normal((3, 1))
        y = antisymmetric_duals(network, rng)
        out = distributed_step(network, schedule, DistributedState(x, y))

        edges = network.graph.edges
        for e, (a, b) in enumerate(edges):
            np.testing.assert_allclose(out.y[e, 0], y[e, 0] + (x[a] - x[b]) / (2 * mu))
            np.testing.assert_allclose(out.y[e, 1], y[e, 1] + (x[b] - x[a]) / (2 * mu))
        for n in range(3):
            d = network.degrees[n]
            coupling = np.zeros(1)
            for e, (a, b) in enumerate(edges):
                if n == a:
                    coupling += x[b] / mu - y[e, 0]
                elif n == b:
                    coupling += x[a] / mu - y[e, 1]
            grad = x[n] - CENTERS[n]
            expected = (1 - tau / mu) * x[n] - (tau / d) * grad + (tau / d) * coupling
            np.testing.assert_allclose(out.x[n], expected, atol=1e-14)
        assert out.k == 1

    def test_matches_product_space_step(self, rng):
        """Test the agent form equals the ADMM-form step on the edge map."""
        network = averaging_network(AgentGraph.ring(4), dim=2)
        schedule = StepSchedule.dynamic_admmds(network.lipschitz)
        x = rng.standard_normal((4, 2))
        y = antisymmetric_duals(network, rng)
        agent = distributed_step(network, schedule, DistributedState(x, y))
        zeros = np.zeros_like(y)
        product = admmds_step(network.as_composite(), schedule, ADMMState(x, y, zeros, zeros))
        np.testing.assert_allclose(agent.x, product.x, atol=1e-12)
        np.testing.assert_allclose(agent.y, product.y, atol=1e-12)

    def test_preserves_antisymmetry(self, rng):
        """Test antisymmetric duals stay antisymmetric."""
        network = averaging_network(AgentGraph.complete(4))
        state = network.initial_state(rng.standard_normal((4, 1)))
        schedule = StepSchedule.dynamic_admmds(network.lipschitz)
        for _ in range(20):
            state = distributed_step(network, schedule, state)
        assert dual_antisymmetry_gap(state) < 1e-12

    def test_printed_dual_step(self, rng):
        """Test the alternative dual gain of 1/2."""
        network = averaging_network(AgentGraph.path(2))
        x = np.array([[3.0], [1.0]])
        out = distributed_step(network, StepSchedule.constant(0.5, mu=4.0), DistributedState(x, np.zeros((1, 2, 1))), True)
        np.testing.assert_allclose(out.y[0, :, 0], [1.0, -1.0])

    def test_invalid_step(self):
        """Test a step violating 1/tau - 1/mu > L/2 raises ScheduleError."""
        network = averaging_network(AgentGraph.path(3))
        with pytest.raises(ScheduleError):
            distributed_step(network, StepSchedule.constant(4.0, mu=8.0), network.initial_state())


class TestDASPDSDSStep:
    """Tests for the asynchronous tick."""

    def test_inactive_agents_unchanged(self, rng):
        """Test agents outside the active set keep their blocks bitwise."""
        network = averaging_network(AgentGraph.ring(4), dim=2)
        state = DistributedState(rng.standard_normal((4, 2)), rng.standard_normal((4, 2, 2)))
        schedule = StepSchedule.dynamic_admmds(network.lipschitz)
        out, active = daspdsds_step(network, schedule, state, ActivationSchedule.single_agent(4), make_rng(9))
        assert len(active) == 1
        pairs = network.graph.pairs
        for n in range(4):
            if n in active:
                continue
            assert np.array_equal(out.x[n], state.x[n])
            for e, s in zip(*np.nonzero(pairs == n), strict=True):
                assert np.array_equal(out.y[e, s], state.y[e, s])

    def test_all_agents_matches_synchronous(self, rng):
        """Test waking every agent reproduces the synchronous tick."""
        network = averaging_network(AgentGraph.star(4), dim=2)
        schedule = StepSchedule.dynamic_admmds(network.lipschitz)
        state = DistributedState(rng.standard_normal((4, 2)), antisymmetric_duals(network, rng))
        sync = distributed_step(network, schedule, state)
        asyn, active = daspdsds_step(network, schedule, state, ActivationSchedule.all_agents(4), make_rng(0))
        assert active == (0, 1, 2, 3)
        np.testing.assert_allclose(asyn.x, sync.x, atol=1e-12)
        np.testing.assert_allclose(asyn.y, sync.y, atol=1e-12)

    def test_symmetrizes_duals(self):
        """Test an active agent's dual drops the antisymmetry defect."""
        network = averaging_network(AgentGraph.path(2))
        state = DistributedState(np.zeros((2, 1)), np.array([[[1.0], [1.0]]]))
        out, _ = daspdsds_step(
            network, StepSchedule.constant(0.5, mu=2.0), state, ActivationSchedule.explicit(2, [[0, 1]]), make_rng(0)
        )
        np.testing.assert_allclose(out.y[0, :, 0], [0.0, 0.0])


class TestNetworkSimulator:
    """Tests for the simulated runs."""

    @pytest.mark.parametrize("kind", ["path", "ring", "star", "complete"])
    def test_synchronous_reaches_consensus(self, kind):
        """Test every agent converges to the mean of the centers."""
        network = averaging_network(AgentGraph.from_kind(kind, 4))
        trace = run_distributed(
            network, StepSchedule.dynamic_admmds(network.lipschitz), StopRule(tol=1e-12, max_iters=20_000)
        )
        np.testing.assert_allclose(trace.final.x[:, 0], np.mean(CENTERS), atol=1e-6)
        assert consensus_spread(trace.final) < 1e-6
        assert trace.records[-1].spread == pytest.approx(consensus_spread(trace.final))

    def test_asynchronous_reaches_consensus(self):
        """Test single-agent activation reaches the same point."""
        network = averaging_network(AgentGraph.ring(4))
        trace = run_daspdsds(
            network, StepSchedule.dynamic_admmds(network.lipschitz), StopRule(tol=1e-12, max_iters=100_000), seed=2
        )
        np.testing.assert_allclose(trace.final.x[:, 0], np.mean(CENTERS), atol=1e-5)
        assert all(len(r.active_agents) == 1 for r in trace.records)
        assert trace.seed == 2

    def test_asynchronous_runs_repeat(self):
        """Test equal seeds give identical activation sequences."""
        network = averaging_network(AgentGraph.ring(4))
        schedule = StepSchedule.dynamic_admmds(network.lipschitz)
        stop = StopRule(tol=0.0, max_iters=64)
        a = run_daspdsds(network, schedule, stop, seed=11)
        b = run_daspdsds(network, schedule, stop, seed=11)
        assert [r.active_agents for r in a.records] == [r.active_agents for r in b.records]
        assert np.array_equal(a.final.x, b.final.x)

    def test_objective_at_mean(self):
        """Test records carry the objective at the agents' mean."""
        network = averaging_network(AgentGraph.ring(3))
        trace = run_distributed(
            network,
            StepSchedule.dynamic_admmds(network.lipschitz),
            StopRule(tol=0.0, max_iters=5),
            objective=network.problem.objective,
        )
        assert trace.records[-1].objective == pytest.approx(network.objective(trace.final))

    def test_rejects_non_antisymmetric_duals(self):
        """Test initial duals with y_e(n) != -y_e(m) raise DomainError."""
        network = averaging_network(AgentGraph.path(2))
        with pytest.raises(DomainError):
            run_distributed(network, StepSchedule.constant(0.5, mu=2.0), StopRule(), y0=np.ones((1, 2, 1)))

    def test_rejects_activation_of_wrong_size(self):
        """Test an activation schedule over other agents raises CoverageError."""
        network = averaging_network(AgentGraph.ring(3))
        with pytest.raises(CoverageError):
            run_daspdsds(network, StepSchedule.constant(0.5, mu=2.0), StopRule(), ActivationSchedule.single_agent(4))

    def test_rejects_primal_dual_schedule(self):
        """Test a sigma schedule raises ScheduleError."""
        network = averaging_network(AgentGraph.ring(3))
        with pytest.raises(ScheduleError):
            NetworkSimulator(network, StepSchedule.constant(0.1, sigma=1.0))
