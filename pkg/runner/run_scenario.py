"""Scenario Orchestrator - runs one scenario and writes its summary."""

import logging
import traceback
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import IntEnum
from typing import Any, Dict, List, Optional

from config import LogConfig
from runner.export import ArtifactWriter
from runner.scenario import ScenarioConfig
from runner.suites import RUN_ROUTINES, SuiteContext
from vlasovkit.errors import ConfigError, KineticError
from vlasovkit.logging_config import CheckRecord, RunLogger, create_run_logger

logger = logging.getLogger(__name__)

SUMMARY_NAME = "summary"
# measured per run but not reproducible; kept in the logs, out of the summary
TIMING_KEYS = ("duration_seconds", "samples_per_second")


class ExitCode(IntEnum):
    PASSED = 0
    CHECK_FAILED = 1
    CONFIG_ERROR = 2
    RUNTIME_ERROR = 3


def _summary_check(record: CheckRecord) -> Dict[str, Any]:
    metrics = {k: v for k, v in record.metrics.items() if k not in TIMING_KEYS}
    return {"name": record.name, "status": record.status, "passed": record.passed,
            "measured": record.measured, "metrics": metrics, "error": record.error}


@dataclass
class RunSummary:
    scenario: str
    run: str
    seed: int
    status: str = "pending"
    exit_code: int = ExitCode.PASSED
    checks: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[Dict[str, Any]] = field(default_factory=list)
    error: Optional[Dict[str, Any]] = None
    config: Dict[str, Any] = field(default_factory=dict)
    generated_at: Optional[str] = None

    @property
    def failed_checks(self) -> List[str]:
        return [c["name"] for c in self.checks if not c["passed"]]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ScenarioRunner:
    def __init__(self, config: ScenarioConfig, log_config: Optional[LogConfig] = None):
        self.config = config
        self.log_config = log_config
        self.writer = ArtifactWriter.for_run(config.name, config.output)
        self.run_logger: Optional[RunLogger] = None
        self.summary = RunSummary(config.name, config.run.value, config.seed,
                                  config=config.model_dump(mode="json"))

    @property
    def run_dir(self):
        return self.writer.run_dir

    def execute(self) -> RunSummary:
        self.run_logger = create_run_logger(self.config.name, self.log_config)
        log = self.run_logger
        log.info(f"Scenario '{self.config.name}' started (run={self.config.run.value}, seed={self.config.seed})")
        try:
            ctx = SuiteContext.build(self.config, log, self.writer)
            RUN_ROUTINES[self.config.run](ctx)
            failed = [r.name for r in log.records if not r.passed]
            if failed:
                self.summary.status = "failed"
                self.summary.exit_code = ExitCode.CHECK_FAILED
                log.warning(f"Scenario '{self.config.name}' failed checks: {', '.join(failed)}")
            else:
                self.summary.status = "passed"
                self.summary.exit_code = ExitCode.PASSED
                log.info(f"Scenario '{self.config.name}' passed {len(log.records)} checks")
        except ConfigError as e:
            self._fail(ExitCode.CONFIG_ERROR, e.to_dict())
            log.error(f"Scenario configuration error: {e}")
        except KineticError as e:
            self._fail(ExitCode.RUNTIME_ERROR, e.to_dict())
            log.error(f"Scenario '{self.config.name}' aborted: {e}", exc_info=True)
        except (ArithmeticError, ValueError, FloatingPointError) as e:
            self._fail(ExitCode.RUNTIME_ERROR, {"error_code": type(e).__name__, "message": str(e),
                                                "context": {"traceback": traceback.format_exc(limit=3)}})
            log.error(f"Scenario '{self.config.name}' aborted: {e}", exc_info=True)
        finally:
            self.summary.checks = [_summary_check(r) for r in log.records]
            self.summary.generated_at = datetime.now(timezone.utc).isoformat()
            self.summary.artifacts = self.writer.manifest()
            self.writer.write_json(SUMMARY_NAME, self.summary.to_dict())
            log.info(f"Summary written to {self.run_dir / (SUMMARY_NAME + '.json')}")
            log.close()
        return self.summary

    def _fail(self, code: ExitCode, error: Dict[str, Any]):
        self.summary.status = "error"
        self.summary.exit_code = code
        self.summary.error = error


def run_scenario(config: ScenarioConfig, log_config: Optional[LogConfig] = None) -> RunSummary:
    return ScenarioRunner(config, log_config).execute()


def format_summary(summary: RunSummary) -> str:
    """Console table of checks, in the style of a run report."""
    lines = ["=" * 80, f"SCENARIO {summary.scenario} ({summary.run})", "=" * 80,
             f"Seed:      {summary.seed}", f"Status:    {summary.status}", f"Exit code: {int(summary.exit_code)}",
             "-" * 80, f"{'Check':<45} {'Status':<10} {'Samples':<10} {'Failed'}", "-" * 80]
    for check in summary.checks:
        metrics = check["metrics"]
        lines.append(f"{check['name']:<45} {check['status']:<10} "
                     f"{metrics.get('samples_evaluated', 0):<10} {metrics.get('samples_failed', 0)}")
    if summary.error:
        lines += ["-" * 80, f"ERROR {summary.error['error_code']}: {summary.error['message']}"]
    lines.append("=" * 80)
    return "\n".join(lines)
