"""Unit tests for pdsplit.config module."""

import os

import pytest

from pdsplit.config import (
    ENV_VAR_PATTERN,
    ConfigError,
    ExperimentConfig,
    ScheduleSpec,
    SolverConfig,
    load_config,
    load_schedule,
    resolve_env_tree,
    resolve_env_vars,
)
from pdsplit.schedule import ScheduleError, check_admmds_schedule, check_pdsds_schedule
from pdsplit.types import ErrorCode, PartitionMode, ScheduleKind, SolverName


class TestEnvVarPattern:
    """Tests for environment variable pattern matching."""

    def test_matches_valid_env_vars(self):
        """Test pattern matches valid env var references."""
        assert ENV_VAR_PATTERN.search("${HOME}")
        assert ENV_VAR_PATTERN.search("${_PRIVATE}")
        assert ENV_VAR_PATTERN.search("${VAR123}")

    def test_does_not_match_invalid(self):
        """Test pattern doesn't match invalid references."""
        assert not ENV_VAR_PATTERN.search("$HOME")  # Missing braces
        assert not ENV_VAR_PATTERN.search("${123VAR}")  # Starts with number


class TestResolveEnv:
    """Tests for environment resolution."""

    def test_resolve_simple(self):
        """Test resolving a set variable."""
        os.environ["PDSPLIT_TEST_DIR"] = "/tmp/runs"
        try:
            assert resolve_env_vars("${PDSPLIT_TEST_DIR}/out") == "/tmp/runs/out"
        finally:
            del os.environ["PDSPLIT_TEST_DIR"]

    def test_unset_left_as_is(self):
        """Test an unset variable keeps its reference."""
        os.environ.pop("PDSPLIT_UNSET_VAR", None)
        assert resolve_env_vars("${PDSPLIT_UNSET_VAR}") == "${PDSPLIT_UNSET_VAR}"

    def test_resolve_tree(self):
        """Test nested dicts and lists are resolved and other values kept."""
        os.environ["PDSPLIT_TEST_NAME"] = "ring"
        try:
            data = {"graph": "${PDSPLIT_TEST_NAME}", "eps": [1e-3], "nested": {"items": ["${PDSPLIT_TEST_NAME}", 2]}}
            resolved = resolve_env_tree(data)
            assert resolved == {"graph": "ring", "eps": [1e-3], "nested": {"items": ["ring", 2]}}
        finally:
            del os.environ["PDSPLIT_TEST_NAME"]


class TestScheduleSpec:
    """Tests for ScheduleSpec."""

    def test_defaults(self):
        """Test the default spec is dynamic with no explicit stepsizes."""
        spec = ScheduleSpec()
        assert spec.kind == ScheduleKind.DYNAMIC
        assert spec.tau is None

    def test_rejects_non_positive(self):
        """Test non-positive stepsizes fail validation."""
        with pytest.raises(ValueError):
            ScheduleSpec(tau=0.0)

    def test_constant_pdsds(self):
        """Test a constant primal-dual schedule."""
        schedule = ScheduleSpec(kind="constant", tau=0.1, sigma=1.0).to_schedule(SolverName.PDSDS)
        assert schedule.tau(5) == 0.1
        assert schedule.sigma(5) == 1.0
        assert check_pdsds_schedule(schedule, beta=2.0, d_norm=1.0, horizon=5).valid

    def test_constant_needs_both_steps(self):
        """Test a constant schedule without its dual stepsize raises ConfigError."""
        with pytest.raises(ConfigError) as exc_info:
            ScheduleSpec(kind="constant", tau=0.1).to_schedule(SolverName.PDSDS)
        assert exc_info.value.code == ErrorCode.CONFIG_INVALID
        with pytest.raises(ConfigError):
            ScheduleSpec(kind="constant", tau=0.1, sigma=1.0).to_schedule(SolverName.MINIBATCH)

    def test_rho_only_for_pdsds(self):
        """Test rho is kept for PDSDS and rejected for every ADMM-form solver."""
        spec = ScheduleSpec(kind="constant", tau=0.1, sigma=1.0, mu=1.0, rho=1.2)
        assert spec.to_schedule(SolverName.PDSDS).relaxation(0, 1.5) == 1.2
        for solver in SolverName:
            if solver == SolverName.PDSDS:
                continue
            with pytest.raises(ConfigError) as exc_info:
                spec.to_schedule(solver, lipschitz=1.0)
            assert "rho" in str(exc_info.value)
        with pytest.raises(ConfigError):
            ScheduleSpec(rho=1.0).to_schedule(SolverName.ADMMDS, lipschitz=1.0)

    def test_dynamic_defaults_per_family(self):
        """Test dynamic specs pick the right family and limits."""
        pd = ScheduleSpec().to_schedule(SolverName.PDSDS, beta=2.0, d_norm=1.0)
        assert pd.sigma is not None and pd.mu is None
        admm = ScheduleSpec().to_schedule(SolverName.SMPDSDS, lipschitz=2.0)
        assert admm.is_admm
        assert admm.tau_limit == pytest.approx(0.4)
        assert check_admmds_schedule(admm, lipschitz=2.0, horizon=100).valid

    def test_explicit_limits(self):
        """Test dynamic limits taken from the spec."""
        schedule = ScheduleSpec(tau=0.2, mu=1.0).to_schedule(SolverName.DISTRIBUTED, lipschitz=1.0)
        assert schedule.tau_limit == pytest.approx(0.2)
        assert schedule.mu_limit == pytest.approx(1.0)

    def test_invalid_constant_schedule_is_caught_by_validation(self):
        """Test an oversized constant schedule fails validation, not construction."""
        schedule = ScheduleSpec(kind="constant", tau=1.0, sigma=1.0).to_schedule(SolverName.PDSDS)
        with pytest.raises(ScheduleError):
            check_pdsds_schedule(schedule, beta=2.0, d_norm=1.0, horizon=1).raise_if_invalid()


class TestExperimentConfig:
    """Tests for ExperimentConfig."""

    def test_defaults(self):
        """Test default experiment values."""
        config = ExperimentConfig()
        assert config.solvers == [SolverName.MINIBATCH]
        assert config.n == 1024
        assert config.eps == [1e-5]
        assert config.max_iters == 40_000
        assert config.partition == PartitionMode.CONTIGUOUS
        assert config.timing

    @pytest.mark.parametrize(
        "field,value",
        [("n", 0), ("batches", -1), ("eps", []), ("eps", [1e-3, 0.0]), ("seeds", []), ("workers", 0)],
    )
    def test_rejects_invalid_values(self, field, value):
        """Test invalid field values fail validation."""
        with pytest.raises(ValueError):
            ExperimentConfig(**{field: value})

    def test_rejects_unknown_solver(self):
        """Test an unknown solver name fails validation."""
        with pytest.raises(ValueError):
            ExperimentConfig(solvers=["newton"])

    def test_to_dict(self):
        """Test conversion to a JSON-ready dict."""
        data = ExperimentConfig(solvers=["pdsds", "dist"]).to_dict()
        assert data["solvers"] == ["pdsds", "dist"]
        assert data["schedule"]["kind"] == "dynamic"


class TestLoadConfig:
    """Tests for config files and overrides."""

    def test_file_then_overrides(self, tmp_path):
        """Test overrides win over the file and None overrides are ignored."""
        path = tmp_path / "exp.yaml"
        path.write_text("n: 256\nbatches: 8\neps: [0.001]\nschedule:\n  kind: constant\n  tau: 0.1\n  mu: 1.0\n")
        config = load_config(path, {"batches": 2, "n": None})
        assert config.n == 256
        assert config.batches == 2
        assert config.eps == [0.001]
        assert config.schedule.kind == ScheduleKind.CONSTANT

    def test_env_references(self, tmp_path):
        """Test ${VAR} references in the file are resolved."""
        path = tmp_path / "exp.yaml"
        path.write_text("out_dir: ${PDSPLIT_TEST_OUT}\n")
        os.environ["PDSPLIT_TEST_OUT"] = str(tmp_path / "runs")
        try:
            assert load_config(path).out_dir == str(tmp_path / "runs")
        finally:
            del os.environ["PDSPLIT_TEST_OUT"]

    def test_no_file(self):
        """Test overrides alone build a config."""
        assert load_config(overrides={"seeds": [1, 2]}).seeds == [1, 2]

    def test_empty_file(self, tmp_path):
        """Test an empty file gives the defaults."""
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path) == ExperimentConfig()

    def test_missing_file(self, tmp_path):
        """Test a missing file raises ConfigError."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_non_mapping(self, tmp_path):
        """Test a YAML list raises ConfigError."""
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_invalid_values(self, tmp_path):
        """Test validation failures become ConfigError."""
        path = tmp_path / "bad.yaml"
        path.write_text("n: -5\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_load_schedule(self, tmp_path):
        """Test bare and nested schedule files."""
        bare = tmp_path / "bare.yaml"
        bare.write_text("kind: constant\ntau: 1.0\nsigma: 1.0\n")
        nested = tmp_path / "nested.yaml"
        nested.write_text("schedule:\n  tau: 0.3\n")
        assert load_schedule(bare).sigma == 1.0
        assert load_schedule(nested).tau == 0.3
        bad = tmp_path / "bad.yaml"
        bad.write_text("tau: -1\n")
        with pytest.raises(ConfigError):
            load_schedule(bad)


class TestSolverConfig:
    """Tests for the per-run solver config."""

    def test_text_round_trip(self):
        """Test YAML text loads back to an equal model."""
        config = SolverConfig(
            algorithm=SolverName.SMPDSDS,
            schedule={"kind": "dynamic", "tau": 0.4},
            seed=3,
            tolerance=1e-4,
            max_iters=1000,
            n=1024,
            batches=4,
            lam=1.0,
        )
        text = config.to_text()
        assert text.startswith("algorithm: smpdsds\n")
        assert SolverConfig.from_text(text) == config

    def test_from_text_rejects_garbage(self):
        """Test invalid text raises ConfigError."""
        with pytest.raises(ConfigError):
            SolverConfig.from_text("algorithm: [unclosed")
        with pytest.raises(ConfigError):
            SolverConfig.from_text("algorithm: nope\nseed: 1\n")
