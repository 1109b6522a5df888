"""Graph consensus solvers in a single-process agent simulator.

Handles:
- The synchronous distributed ADMMDS+ step (every agent, every tick)
- The asynchronous DASPDSDS step (a random set of agents per tick)
- Consensus spread diagnostics
- A sequential simulator driving either step to the stopping rule

Messages are delivered instantly at tick boundaries: the values an agent
writes at tick k are what its neighbors read at tick k+1.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .composite import BatchProblem, spread
from .engine import CoverageError, IterationTrace, StopRule, drive, make_rng
from .graph import ActivationSchedule, AgentGraph, EdgeMap, build_consensus_operator
from .prox import DomainError, PairConsensusIndicator, SeparableSum
from .schedule import ScheduleError, ScheduleReport, StepSchedule, check_admmds_point, check_admmds_schedule
from .smooth import SeparableSmooth
from .solvers import CompositeProblem

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]

# Slack on the edgewise dual antisymmetry y_e(n) + y_e(m) = 0
ANTISYMMETRY_TOL = 1e-12


@dataclass
class DistributedState:
    """Agent primal blocks x (N, dim) and edge duals y (|E|, 2, dim).

    y[e, 0] is held by the lower-numbered endpoint of edge e, y[e, 1] by the other.
    """

    x: Array
    y: Array
    k: int = 0

    def copy(self) -> "DistributedState":
        return DistributedState(self.x.copy(), self.y.copy(), self.k)

    @property
    def x_mean(self) -> Array:
        return self.x.mean(axis=0)


def consensus_spread(state: DistributedState | ArrayLike) -> float:
    """max_n ||x_n - xbar||."""
    x = state.x if isinstance(state, DistributedState) else state
    return spread(x)


def dual_antisymmetry_gap(state: DistributedState) -> float:
    """max over edges of ||y_e(n) + y_e(m)||."""
    if state.y.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(state.y[:, 0] + state.y[:, 1])))


@dataclass
class ConsensusNetwork:
    """A batch problem placed on the nodes of an agent graph.

    Node n holds f_n and g_n; the composed Lipschitz constant is max_n beta_n / d_n.
    """

    graph: AgentGraph
    problem: BatchProblem
    edge_map: EdgeMap = field(init=False)
    lipschitz: float = field(init=False)

    def __post_init__(self) -> None:
        if self.problem.batches != self.graph.num_nodes:
            raise DomainError(
                f"problem has {self.problem.batches} terms but the graph has {self.graph.num_nodes} nodes"
            )
        self.edge_map = build_consensus_operator(self.graph, self.problem.dim)
        betas = np.array([f.lipschitz for f in self.problem.smooth])
        self.lipschitz = float(np.max(betas / self.graph.degrees))

    @property
    def degrees(self) -> Array:
        return self.graph.degrees

    def as_composite(self) -> CompositeProblem:
        """The product-space form with the edge map and edgewise consensus indicator."""
        return CompositeProblem(
            f=SeparableSmooth(self.problem.smooth),
            g=SeparableSum(self.problem.prox),
            h=PairConsensusIndicator(),
            D=self.edge_map,
            L=self.lipschitz,
        )

    def initial_state(self, x0: ArrayLike | None = None, y0: ArrayLike | None = None) -> DistributedState:
        shape = self.edge_map.in_shape
        if x0 is None:
            x = np.zeros(shape)
        else:
            x = np.asarray(x0, dtype=np.float64)
            x = np.broadcast_to(x, shape).copy() if x.shape == (self.problem.dim,) else x.copy()
        y = np.zeros(self.edge_map.out_shape) if y0 is None else np.array(y0, dtype=np.float64, copy=True)
        if x.shape != shape or y.shape != self.edge_map.out_shape:
            raise DomainError(f"expected x {shape} and y {self.edge_map.out_shape}, got {x.shape} and {y.shape}")
        return DistributedState(x, y)

    def objective(self, state: DistributedState) -> float:
        """Objective of the summed problem at the agents' mean."""
        return self.problem.objective(state.x_mean)


def _parameters(network: ConsensusNetwork, schedule: StepSchedule, k: int) -> tuple[float, float]:
    if schedule.mu is None:
        raise ScheduleError("distributed solvers need a mu sequence")
    tau, mu = schedule.tau(k), schedule.mu(k)
    report = ScheduleReport(horizon=k)
    check_admmds_point(report, tau, mu, network.lipschitz, k)
    report.raise_if_invalid()
    return tau, mu


def _dual_gain(mu: float, printed_dual_step: bool) -> float:
    return 0.5 if printed_dual_step else 0.5 / mu


def _node_prox(network: ConsensusNetwork, point: Array, tau: float, nodes: Any) -> Array:
    out = np.empty((len(nodes), network.problem.dim))
    for i, n in enumerate(nodes):
        out[i] = network.problem.prox[n].prox(point[i], tau / network.degrees[n])
    return out


def distributed_step(
    network: ConsensusNetwork,
    schedule: StepSchedule,
    state: DistributedState,
    printed_dual_step: bool = False,
) -> DistributedState:
    """One synchronous tick: every agent updates its edge duals and primal block.

    y_{n,m}(n) += (x_n - x_m) / (2 mu) for every neighbor m, then
    x_n = prox_{tau g_n / d_n}[(1 - tau/mu) x_n - (tau/d_n) grad f_n(x_n)
          + (tau/d_n) sum_m (x_m/mu - y_{n,m}(n))] with the duals read before the tick.

    Raises:
        ScheduleError: If the schedule is invalid at state.k
    """
    tau, mu = _parameters(network, schedule, state.k)
    D = network.edge_map
    x_self = D.apply(state.x)
    x_other = x_self[:, ::-1]
    y_new = state.y + _dual_gain(mu, printed_dual_step) * (x_self - x_other)

    degrees = network.degrees[:, None]
    grads = np.stack([f.grad(state.x[n]) for n, f in enumerate(network.problem.smooth)])
    coupling = D.adjoint(x_other / mu - state.y)
    point = (1.0 - tau / mu) * state.x - (tau / degrees) * grads + (tau / degrees) * coupling
    x_new = _node_prox(network, point, tau, range(network.graph.num_nodes))
    return DistributedState(x=x_new, y=y_new, k=state.k + 1)


def daspdsds_step(
    network: ConsensusNetwork,
    schedule: StepSchedule,
    state: DistributedState,
    activation: ActivationSchedule,
    rng: np.random.Generator,
    printed_dual_step: bool = False,
) -> tuple[DistributedState, tuple[int, ...]]:
    """One asynchronous tick: only the sampled agents B update.

    For n in B and every neighbor m:
    y_{n,m}(n) = (y_{n,m}(n) - y_{n,m}(m))/2 + (x_n - x_m)/(2 mu), and
    x_n = prox_{tau g_n / d_n}[(1 - tau/mu) x_n - (tau/d_n) grad f_n(x_n)
          + (tau/d_n) sum_m (x_m/mu + y_{n,m}(m))].
    Agents outside B keep their x_n and y_{n,.}(n) bitwise.

    Returns:
        The next state and the active agents
    """
    tau, mu = _parameters(network, schedule, state.k)
    active = activation.sample(rng)
    D = network.edge_map
    pairs = network.graph.pairs

    x_self = D.apply(state.x)
    x_other = x_self[:, ::-1]
    y_other = state.y[:, ::-1]

    slot_active = np.isin(pairs, active)
    y_candidate = 0.5 * (state.y - y_other) + _dual_gain(mu, printed_dual_step) * (x_self - x_other)
    y_new = np.where(slot_active[..., None], y_candidate, state.y)

    nodes = list(active)
    coupling = D.adjoint(x_other / mu + y_other)[nodes]
    degrees = network.degrees[nodes][:, None]
    grads = np.stack([network.problem.smooth[n].grad(state.x[n]) for n in nodes])
    point = (1.0 - tau / mu) * state.x[nodes] - (tau / degrees) * grads + (tau / degrees) * coupling

    x_new = state.x.copy()
    x_new[nodes] = _node_prox(network, point, tau, nodes)
    return DistributedState(x=x_new, y=y_new, k=state.k + 1), active


class NetworkSimulator:
    """Sequential event loop running a consensus network to the stopping rule.

    Each run owns its state and random stream, so several simulators may run
    side by side on the same network.
    """

    def __init__(
        self,
        network: ConsensusNetwork,
        schedule: StepSchedule,
        printed_dual_step: bool = False,
    ):
        if schedule.mu is None:
            raise ScheduleError("distributed solvers need a mu sequence")
        self.network = network
        self.schedule = schedule
        self.printed_dual_step = printed_dual_step

    def _preflight(self, horizon: int, label: str) -> None:
        report = check_admmds_schedule(self.schedule, self.network.lipschitz, horizon)
        if not report.valid:
            logger.error(f"{label}: schedule rejected with {len(report.violations)} violation(s)")
        report.raise_if_invalid()

    def run_synchronous(
        self,
        stop: StopRule,
        x0: ArrayLike | None = None,
        y0: ArrayLike | None = None,
        *,
        record_every: int = 1,
        objective: Callable[[Array], float] | None = None,
        keep_history: bool = False,
    ) -> IterationTrace[DistributedState]:
        """Run the synchronous algorithm; the stop rule watches all agents' blocks.

        Raises:
            DomainError: If the initial duals are not antisymmetric on every edge
        """
        state = self.network.initial_state(x0, y0)
        scale = 1.0 + (float(np.max(np.abs(state.y))) if state.y.size else 0.0)
        if dual_antisymmetry_gap(state) > ANTISYMMETRY_TOL * scale:
            raise DomainError("initial edge duals must satisfy y_e(n) = -y_e(m)")
        self._preflight(stop.max_iters, "distributed")
        graph = self.network.graph
        logger.info(f"distributed: {graph.num_nodes} agents, {graph.num_edges} edges, L={self.network.lipschitz:.6g}")

        def step(s: DistributedState, k: int) -> tuple[DistributedState, dict[str, Any]]:
            nxt = distributed_step(self.network, self.schedule, s, self.printed_dual_step)
            return nxt, {"spread": consensus_spread(nxt)}

        return drive(
            step,
            state,
            lambda s: s.x,
            stop,
            objective=(lambda s: objective(s.x_mean)) if objective is not None else None,
            record_every=record_every,
            keep_history=keep_history,
            copy_state=DistributedState.copy,
            label="distributed",
        )

    def run_asynchronous(
        self,
        stop: StopRule,
        activation: ActivationSchedule | None = None,
        seed: int = 0,
        x0: ArrayLike | None = None,
        y0: ArrayLike | None = None,
        *,
        rng: np.random.Generator | None = None,
        record_every: int = 1,
        objective: Callable[[Array], float] | None = None,
        keep_history: bool = False,
    ) -> IterationTrace[DistributedState]:
        """Run DASPDSDS, uniform single-agent activation unless given.

        A stop window of one tick is widened to N ticks unless every agent
        wakes at every tick.

        Raises:
            CoverageError: If the activation schedule misses some agent
        """
        graph = self.network.graph
        activation = ActivationSchedule.single_agent(graph.num_nodes) if activation is None else activation
        if activation.block_count != graph.num_nodes:
            raise CoverageError(f"activation covers {activation.block_count} agents, graph has {graph.num_nodes}")
        if stop.check_every == 1 and not activation.is_full:
            stop = replace(stop, check_every=graph.num_nodes)
        self._preflight(stop.max_iters, "daspdsds")
        generator = make_rng(seed) if rng is None else rng
        state = self.network.initial_state(x0, y0)
        logger.info(f"daspdsds: {graph.num_nodes} agents, seed={seed}, window={stop.check_every}")

        def step(s: DistributedState, k: int) -> tuple[DistributedState, dict[str, Any]]:
            nxt, active = daspdsds_step(
                self.network, self.schedule, s, activation, generator, self.printed_dual_step
            )
            return nxt, {"active_agents": list(active), "spread": consensus_spread(nxt)}

        return drive(
            step,
            state,
            lambda s: s.x,
            stop,
            objective=(lambda s: objective(s.x_mean)) if objective is not None else None,
            record_every=record_every,
            keep_history=keep_history,
            copy_state=DistributedState.copy,
            seed=seed,
            label="daspdsds",
        )


def run_distributed(
    network: ConsensusNetwork,
    schedule: StepSchedule,
    stop: StopRule,
    printed_dual_step: bool = False,
    **kwargs: Any,
) -> IterationTrace[DistributedState]:
    """Run the synchronous algorithm on a network."""
    return NetworkSimulator(network, schedule, printed_dual_step).run_synchronous(stop, **kwargs)


def run_daspdsds(
    network: ConsensusNetwork,
    schedule: StepSchedule,
    stop: StopRule,
    activation: ActivationSchedule | None = None,
    seed: int = 0,
    printed_dual_step: bool = False,
    **kwargs: Any,
) -> IterationTrace[DistributedState]:
    """Run the asynchronous algorithm on a network."""
    simulator = NetworkSimulator(network, schedule, printed_dual_step)
    return simulator.run_asynchronous(stop, activation, seed, **kwargs)
