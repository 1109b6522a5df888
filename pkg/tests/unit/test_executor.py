"""Unit tests for pdsplit.executor module."""

import pytest

from pdsplit.composite import BatchProblem
from pdsplit.config import ExperimentConfig, ScheduleSpec, SolverConfig
from pdsplit.distributed import ConsensusNetwork
from pdsplit.executor import ExperimentExecutor, RunSpec, run_experiment
from pdsplit.lasso import gen_lasso
from pdsplit.schedule import ScheduleError
from pdsplit.solvers import CompositeProblem
from pdsplit.trace import read_trace
from pdsplit.types import SolverName


def small_config(tmp_path, **overrides) -> ExperimentConfig:
    fields = {
        "solvers": [s.value for s in SolverName],
        "n": 64,
        "batches": 4,
        "eps": [1e-3],
        "seeds": [0],
        "max_iters": 200,
        "lam": 1.0,
        "graph": "ring",
        "record_every": 10,
        "out_dir": str(tmp_path / "results"),
    }
    fields.update(overrides)
    return ExperimentConfig(**fields)


class TestRunSpec:
    """Tests for RunSpec."""

    def test_label(self):
        """Test labels name the solver, tolerance and seed."""
        assert RunSpec(SolverName.DASPDSDS, 1e-5, 3).label == "daspdsds_eps1e-05_seed3"


class TestPlanning:
    """Tests for grid expansion and run preparation."""

    def test_plan_order(self, tmp_path):
        """Test solvers vary slowest, seeds fastest."""
        executor = ExperimentExecutor(
            small_config(tmp_path, solvers=["minibatch", "pdsds"], eps=[1e-3, 1e-4], seeds=[0, 1])
        )
        labels = [spec.label for spec in executor.plan()]
        assert labels[:3] == ["minibatch_eps0.001_seed0", "minibatch_eps0.001_seed1", "minibatch_eps0.0001_seed0"]
        assert len(labels) == 8
        assert labels[-1] == "pdsds_eps0.0001_seed1"

    def test_instances_shared_per_seed(self, tmp_path):
        """Test one instance per seed, reused across solvers."""
        executor = ExperimentExecutor(small_config(tmp_path))
        assert executor.instance_for(0) is executor.instance_for(0)
        assert executor.instance_for(0) is not executor.instance_for(1)
        assert executor.instance_for(0).lam == 1.0

    def test_instance_file_with_lambda_override(self, tmp_path):
        """Test a saved instance is loaded and lam overridden."""
        path = tmp_path / "inst.npz"
        gen_lasso(64, lam=2.0, seed=9).save(path)
        executor = ExperimentExecutor(small_config(tmp_path, instance_file=str(path), lam=0.5))
        inst = executor.instance_for(0)
        assert inst.seed == 9
        assert inst.lam == 0.5

    def test_prepare_by_solver(self, tmp_path):
        """Test each solver family gets its problem form and schedule family."""
        executor = ExperimentExecutor(small_config(tmp_path))
        pdsds = executor.prepare(RunSpec(SolverName.PDSDS, 1e-3, 0))
        assert isinstance(pdsds.problem, CompositeProblem)
        assert pdsds.batches == 1
        assert not pdsds.schedule.is_admm
        minibatch = executor.prepare(RunSpec(SolverName.MINIBATCH, 1e-3, 0))
        assert isinstance(minibatch.problem, BatchProblem)
        assert minibatch.batches == 4
        assert minibatch.schedule.is_admm
        dist = executor.prepare(RunSpec(SolverName.DISTRIBUTED, 1e-3, 0))
        assert isinstance(dist.problem, ConsensusNetwork)
        assert dist.graph is not None and dist.graph.num_edges == 4

    def test_graph_file_sets_agent_count(self, tmp_path):
        """Test graph solvers take N from the edge-list file."""
        path = tmp_path / "path.txt"
        path.write_text("1 2\n2 3\n")
        executor = ExperimentExecutor(small_config(tmp_path, graph_file=str(path)))
        run = executor.prepare(RunSpec(SolverName.DASPDSDS, 1e-3, 0))
        assert run.batches == 3

    def test_check_schedules_once_per_pair(self, tmp_path):
        """Test one validation per (solver, seed) pair."""
        executor = ExperimentExecutor(small_config(tmp_path, eps=[1e-3, 1e-4], seeds=[0, 1]))
        reports = executor.check_schedules()
        assert len(reports) == len(SolverName) * 2
        assert all(report.valid for report in reports)

    def test_check_schedules_rejects_invalid(self, tmp_path):
        """Test an oversized constant schedule raises ScheduleError."""
        spec = ScheduleSpec(kind="constant", tau=10.0, mu=10.0)
        executor = ExperimentExecutor(small_config(tmp_path, solvers=["minibatch"], schedule=spec))
        with pytest.raises(ScheduleError):
            executor.check_schedules()


class TestRuns:
    """Tests for running grid cells."""

    def test_run_one_writes_artifacts(self, tmp_path):
        """Test a run reports its outcome and writes trace, curve and config."""
        executor = ExperimentExecutor(small_config(tmp_path))
        spec = RunSpec(SolverName.SMPDSDS, 1e-3, 0)
        report = executor.run_one(spec)
        assert report.solver == SolverName.SMPDSDS
        assert report.n == 64
        assert report.batches == 4
        assert 0 < report.iterations <= 200
        assert report.seconds is not None and report.seconds >= 0

        out = tmp_path / "results"
        header, records = read_trace(out / "traces" / f"{spec.label}.jsonl")
        assert header.solver == "smpdsds"
        assert header.params["check_every"] == 4
        assert records and all(r.batch_selected is not None for r in records)
        assert (out / "curves" / f"{spec.label}.csv").read_text().startswith("k,fval")
        config = SolverConfig.from_text((out / "configs" / f"{spec.label}.yaml").read_text())
        assert config.algorithm == SolverName.SMPDSDS
        assert config.tolerance == 1e-3

    def test_untimed_run(self, tmp_path):
        """Test timing off leaves seconds empty."""
        executor = ExperimentExecutor(small_config(tmp_path, timing=False, traces=False))
        report = executor.run_one(RunSpec(SolverName.MINIBATCH, 1e-3, 0))
        assert report.seconds is None
        assert not (tmp_path / "results" / "traces").exists()

    def test_seeded_runs_repeat(self, tmp_path):
        """Test stochastic runs repeat exactly for a fixed seed."""
        first = ExperimentExecutor(small_config(tmp_path, traces=False)).run_one(RunSpec(SolverName.DASPDSDS, 1e-3, 2))
        second = ExperimentExecutor(small_config(tmp_path, traces=False)).run_one(RunSpec(SolverName.DASPDSDS, 1e-3, 2))
        assert first.err == second.err
        assert first.iterations == second.iterations

    @pytest.mark.asyncio
    async def test_run_experiment_keeps_plan_order(self, tmp_path):
        """Test every solver runs and reports follow the plan."""
        executor = ExperimentExecutor(small_config(tmp_path, workers=3, seeds=[0, 1], traces=False))
        reports = await executor.run_experiment()
        assert [(r.solver, r.seed) for r in reports] == [(s.solver, s.seed) for s in executor.plan()]

    @pytest.mark.asyncio
    async def test_run_experiment_validates_first(self, tmp_path):
        """Test an invalid schedule stops the experiment before any run."""
        spec = ScheduleSpec(kind="constant", tau=10.0, mu=10.0)
        executor = ExperimentExecutor(small_config(tmp_path, solvers=["smpdsds"], schedule=spec))
        with pytest.raises(ScheduleError):
            await executor.run_experiment()
        assert not (tmp_path / "results").exists()

    def test_run_experiment_sync(self, tmp_path):
        """Test the synchronous wrapper."""
        reports = run_experiment(small_config(tmp_path, solvers=["pdsds", "admmds"], traces=False))
        assert [r.solver for r in reports] == [SolverName.PDSDS, SolverName.ADMMDS]
        assert all(r.batches == 1 for r in reports)
