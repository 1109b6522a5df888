"""Experiment executor for the LASSO benchmark.

Handles:
- Expanding an ExperimentConfig into (solver, eps, seed) runs
- Building the instance, batch split, agent graph and schedule for each run
- Validating every schedule before any iteration starts
- Running the grid on a bounded pool of worker threads
- Writing per-run traces, (k, fval) curves and solver configs
"""

import asyncio
import logging
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .composite import BatchProblem, run_minibatch, run_smpdsds
from .config import ExperimentConfig, SolverConfig
from .distributed import ConsensusNetwork, run_daspdsds, run_distributed
from .engine import IterationTrace, StopRule, spawn_rngs
from .graph import ActivationSchedule, AgentGraph
from .lasso import LassoInstance, gen_lasso, split_batches
from .schedule import ScheduleReport, StepSchedule, check_admmds_schedule
from .solvers import CompositeProblem, solve_admmds, solve_pdsds, validate_schedule
from .trace import write_curve, write_trace
from .types import RunReport, SolverName, TraceHeader

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


@dataclass(frozen=True)
class RunSpec:
    """One cell of the experiment grid."""

    solver: SolverName
    eps: float
    seed: int

    @property
    def label(self) -> str:
        return f"{self.solver.value}_eps{self.eps:g}_seed{self.seed}"


@dataclass
class PreparedRun:
    """Everything a run needs besides the stopping rule."""

    spec: RunSpec
    instance: LassoInstance
    problem: CompositeProblem | BatchProblem | ConsensusNetwork
    schedule: StepSchedule
    batches: int
    graph: AgentGraph | None = None

    def validate(self, horizon: int) -> ScheduleReport:
        """Check the schedule against this run's problem constants."""
        if isinstance(self.problem, CompositeProblem):
            return validate_schedule(self.problem, self.schedule, horizon)
        return check_admmds_schedule(self.schedule, self.problem.lipschitz, horizon)


class ExperimentExecutor:
    """Runs an experiment grid and collects one RunReport per run.

    Instances are generated once per seed and shared by every solver and
    tolerance using that seed.
    """

    def __init__(self, config: ExperimentConfig):
        """Initialize the executor.

        Args:
            config: Validated experiment configuration
        """
        self._config = config
        self._instances: dict[int, LassoInstance] = {}
        self._graphs: dict[int, AgentGraph] = {}
        self._lock = threading.Lock()

    @property
    def config(self) -> ExperimentConfig:
        return self._config

    @property
    def out_dir(self) -> Path:
        return Path(self._config.out_dir)

    def plan(self) -> list[RunSpec]:
        """Runs in configuration order: solvers, then tolerances, then seeds."""
        return [
            RunSpec(solver, eps, seed)
            for solver in self._config.solvers
            for eps in self._config.eps
            for seed in self._config.seeds
        ]

    def instance_for(self, seed: int) -> LassoInstance:
        """The LASSO instance for a seed, loaded from file when one is configured."""
        with self._lock:
            cached = self._instances.get(seed)
            if cached is not None:
                return cached
            if self._config.instance_file:
                inst = LassoInstance.load(self._config.instance_file)
                if self._config.lam is not None:
                    inst = replace(inst, lam=self._config.lam)
            else:
                inst = gen_lasso(
                    self._config.n, lam=self._config.lam, seed=seed, lam_scale=self._config.lam_scale
                )
            self._instances[seed] = inst
            return inst

    def graph_for(self, seed: int) -> AgentGraph:
        """The agent graph for a seed: the edge-list file, or a named family on N nodes."""
        with self._lock:
            cached = self._graphs.get(seed)
            if cached is not None:
                return cached
            if self._config.graph_file:
                graph = AgentGraph.read_edge_list(self._config.graph_file)
            else:
                graph = AgentGraph.from_kind(self._config.graph, self._config.batches, seed=seed)
            self._graphs[seed] = graph
            return graph

    def prepare(self, spec: RunSpec) -> PreparedRun:
        """Build the problem and schedule of a run.

        Graph solvers use one batch per node, so N is the node count of the graph.
        """
        inst = self.instance_for(spec.seed)
        config = self._config
        if spec.solver in (SolverName.PDSDS, SolverName.ADMMDS):
            composite = inst.composite()
            if spec.solver == SolverName.PDSDS:
                schedule = config.schedule.to_schedule(spec.solver, beta=composite.beta, d_norm=composite.d_norm)
            else:
                schedule = config.schedule.to_schedule(spec.solver, lipschitz=composite.composed_lipschitz())
            return PreparedRun(spec, inst, composite, schedule, batches=1)

        if spec.solver.uses_graph:
            graph = self.graph_for(spec.seed)
            bp = split_batches(inst, graph.num_nodes, config.partition, spec.seed)
            network = ConsensusNetwork(graph, bp)
            schedule = config.schedule.to_schedule(spec.solver, lipschitz=network.lipschitz)
            return PreparedRun(spec, inst, network, schedule, batches=graph.num_nodes, graph=graph)

        bp = split_batches(inst, config.batches, config.partition, spec.seed)
        schedule = config.schedule.to_schedule(spec.solver, lipschitz=bp.lipschitz)
        return PreparedRun(spec, inst, bp, schedule, batches=config.batches)

    def check_schedules(self) -> list[ScheduleReport]:
        """Validate the schedule of every (solver, seed) pair over the full iteration cap.

        Tolerances do not change the schedule, so each pair is checked once.

        Raises:
            ScheduleError: For the first pair whose schedule is invalid
        """
        reports: list[ScheduleReport] = []
        seen: set[tuple[SolverName, int]] = set()
        for spec in self.plan():
            if (spec.solver, spec.seed) in seen:
                continue
            seen.add((spec.solver, spec.seed))
            report = self.prepare(spec).validate(self._config.max_iters)
            if not report.valid:
                logger.error(f"{spec.label}: schedule rejected")
            report.raise_if_invalid()
            reports.append(report)
        return reports

    def _solve(self, run: PreparedRun, stop: StopRule) -> tuple[Array, IterationTrace[Any]]:
        spec, problem, inst = run.spec, run.problem, run.instance
        options: dict[str, Any] = {"record_every": self._config.record_every, "objective": inst.fval}
        rng = spawn_rngs(spec.seed, 1)[0]

        if isinstance(problem, CompositeProblem):
            solve = solve_pdsds if spec.solver == SolverName.PDSDS else solve_admmds
            trace: IterationTrace[Any] = solve(problem, run.schedule, stop, **options)
            return trace.final.x, trace

        if isinstance(problem, ConsensusNetwork):
            printed = self._config.printed_dual_step
            if spec.solver == SolverName.DISTRIBUTED:
                trace = run_distributed(problem, run.schedule, stop, printed, **options)
            else:
                assert run.graph is not None
                activation = ActivationSchedule.from_kind(self._config.activation, run.graph)
                trace = run_daspdsds(problem, run.schedule, stop, activation, spec.seed, printed, rng=rng, **options)
            return trace.final.x_mean, trace

        if spec.solver == SolverName.SMPDSDS:
            trace = run_smpdsds(problem, run.schedule, stop, seed=spec.seed, rng=rng, **options)
        else:
            trace = run_minibatch(problem, run.schedule, stop, **options)
        return trace.final.x_mean, trace

    def run_one(self, run: PreparedRun | RunSpec) -> RunReport:
        """Run one grid cell to its stopping rule or the iteration cap."""
        prepared = self.prepare(run) if isinstance(run, RunSpec) else run
        spec, inst = prepared.spec, prepared.instance
        stop = StopRule(tol=spec.eps, max_iters=self._config.max_iters)

        start = time.perf_counter()
        x, trace = self._solve(prepared, stop)
        elapsed = time.perf_counter() - start

        report = RunReport(
            solver=spec.solver,
            n=inst.n,
            batches=prepared.batches,
            eps=spec.eps,
            seed=spec.seed,
            err=inst.err(x),
            fval=inst.fval(x),
            iterations=trace.iterations,
            seconds=elapsed if self._config.timing else None,
            converged=trace.converged,
            lam=inst.lam,
        )
        if report.converged and report.fval > inst.fval(np.zeros(inst.n)):
            logger.warning(f"{spec.label}: fval {report.fval:.6g} is above its value at the zero start")
        logger.info(
            f"{spec.label}: k={report.iterations}, converged={report.converged}, "
            f"Err={report.err:.4g}, fval={report.fval:.4g}"
        )
        if self._config.traces:
            self._write_artifacts(prepared, stop, trace)
        return report

    def _window(self, run: PreparedRun, stop: StopRule) -> int:
        """Stop window the solver actually used; stochastic runs widen one step to N."""
        if stop.check_every != 1 or not run.spec.solver.is_stochastic:
            return stop.check_every
        if run.spec.solver == SolverName.DASPDSDS and self._config.activation == "all_agents":
            return 1
        return run.batches

    def _write_artifacts(self, run: PreparedRun, stop: StopRule, trace: IterationTrace[Any]) -> None:
        spec = run.spec
        schedule = {"kind": run.schedule.kind.value, **run.schedule.params}
        header = TraceHeader(
            solver=spec.solver.value,
            seed=spec.seed,
            params={
                "eps": spec.eps,
                "max_iters": stop.max_iters,
                "check_every": self._window(run, stop),
                "batches": run.batches,
                "objective": "fval",
                "schedule": schedule,
            },
        )
        write_trace(self.out_dir / "traces" / f"{spec.label}.jsonl", header, trace.records)
        write_curve(self.out_dir / "curves" / f"{spec.label}.csv", trace.records)
        solver_config = SolverConfig(
            algorithm=spec.solver,
            schedule=schedule,
            seed=spec.seed,
            tolerance=spec.eps,
            max_iters=stop.max_iters,
            n=run.instance.n,
            batches=run.batches,
            lam=run.instance.lam,
            graph=repr(run.graph) if run.graph is not None else None,
        )
        path = self.out_dir / "configs" / f"{spec.label}.yaml"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(solver_config.to_text())

    async def run_experiment(self) -> list[RunReport]:
        """Validate every schedule, then run the grid on up to `workers` threads.

        Reports come back in plan order whatever order the runs finish in.

        Raises:
            ScheduleError: If any schedule is invalid; nothing is run in that case
        """
        self.check_schedules()
        specs = self.plan()
        logger.info(f"Running {len(specs)} run(s) on {self._config.workers} worker(s)")
        semaphore = asyncio.Semaphore(self._config.workers)

        async def run(item: RunSpec) -> RunReport:
            async with semaphore:
                return await asyncio.to_thread(self.run_one, item)

        return list(await asyncio.gather(*(run(item) for item in specs)))


def run_experiment(config: ExperimentConfig) -> list[RunReport]:
    """Run an experiment synchronously and return its reports in plan order."""
    return asyncio.run(ExperimentExecutor(config).run_experiment())
