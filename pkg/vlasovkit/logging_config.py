"""Run Logging Configuration and Utilities."""

import sys
import uuid
import json
import logging
from datetime import datetime, timezone
from typing import Dict, List, Optional, Any
from pathlib import Path
from dataclasses import dataclass, asdict, field
from contextlib import contextmanager

from config import LogConfig


@dataclass
class CheckMetrics:
    samples_evaluated: int = 0
    samples_passed: int = 0
    samples_failed: int = 0
    duration_seconds: float = 0.0
    samples_per_second: float = 0.0
    failure_rate: float = 0.0

    def calculate_rates(self):
        if self.duration_seconds > 0:
            self.samples_per_second = round(self.samples_evaluated / self.duration_seconds, 2)
        if self.samples_evaluated > 0:
            self.failure_rate = round(self.samples_failed / self.samples_evaluated, 4)


@dataclass
class CheckRecord:
    """One named check as it lands in the run summary."""
    name: str
    status: str
    measured: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.status == 'success'


class CorrelationFilter(logging.Filter):
    def __init__(self, correlation_id: str = None):
        super().__init__()
        self.correlation_id = correlation_id or str(uuid.uuid4())[:8]

    def filter(self, record):
        record.correlation_id = self.correlation_id
        return True


class JSONFormatter(logging.Formatter):
    def format(self, record):
        log_data = {
            'timestamp': datetime.now(timezone.utc).isoformat(),
            'level': record.levelname,
            'correlation_id': getattr(record, 'correlation_id', 'N/A'),
            'logger': record.name,
            'message': record.getMessage(),
            'module': record.module,
            'function': record.funcName,
            'line': record.lineno
        }

        if record.exc_info:
            log_data['exception'] = self.formatException(record.exc_info)

        if hasattr(record, 'metrics'):
            log_data['metrics'] = record.metrics

        if hasattr(record, 'check'):
            log_data['check'] = record.check

        return json.dumps(log_data)


class RunLogger:
    def __init__(self, run_name: str = None, correlation_id: str = None,
                 log_config: LogConfig = None):
        self.run_name = run_name or 'adhoc'
        self.correlation_id = correlation_id or str(uuid.uuid4())
        self.config = log_config or LogConfig.from_env()
        self.records: List[CheckRecord] = []
        self.logger = None
        self.library = logging.getLogger('vlasovkit')
        self._library_handlers: List[logging.Handler] = []
        self._library_level = self.library.level
        self._setup_logger()

    def _setup_logger(self):
        self.logger = logging.getLogger(f'vlasovkit.run.{self.run_name}')
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()

        correlation_filter = CorrelationFilter(self.correlation_id[:8])

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(getattr(logging, self.config.level, logging.INFO))
        console_format = logging.Formatter(
            '%(asctime)s | %(levelname)-5s | [%(correlation_id)s] | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        console_handler.setFormatter(console_format)
        console_handler.addFilter(correlation_filter)
        self.logger.addHandler(console_handler)
        self._attach_library(console_handler)

        if not self.config.json_files:
            return

        log_dir = Path(self.config.log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

        log_file = log_dir / f'vlasovkit_{datetime.now().strftime("%Y%m%d")}.log'
        file_handler = logging.FileHandler(log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(JSONFormatter())
        file_handler.addFilter(correlation_filter)
        self.logger.addHandler(file_handler)

        error_file = log_dir / 'vlasovkit_errors.log'
        error_handler = logging.FileHandler(error_file)
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(JSONFormatter())
        error_handler.addFilter(correlation_filter)
        self.logger.addHandler(error_handler)
        self._attach_library(file_handler)
        self._attach_library(error_handler)

    def _attach_library(self, handler: logging.Handler):
        """Library modules log under 'vlasovkit'; their records share the run's handlers."""
        self.library.setLevel(getattr(logging, self.config.level, logging.INFO))
        self.library.addHandler(handler)
        self._library_handlers.append(handler)

    def info(self, message: str, **kwargs):
        extra = {'check': kwargs.get('check')} if 'check' in kwargs else {}
        self.logger.info(message, extra=extra)

    def warning(self, message: str, **kwargs):
        extra = {'check': kwargs.get('check')} if 'check' in kwargs else {}
        self.logger.warning(message, extra=extra)

    def error(self, message: str, **kwargs):
        extra = {'check': kwargs.get('check')} if 'check' in kwargs else {}
        self.logger.error(message, extra=extra, exc_info=kwargs.get('exc_info', False))

    def debug(self, message: str, **kwargs):
        self.logger.debug(message)

    def log_metrics(self, check: str, metrics: CheckMetrics):
        metrics.calculate_rates()
        record = self.logger.makeRecord(
            self.logger.name, logging.INFO, '', 0,
            f"Check '{check}' metrics: {metrics.samples_evaluated} samples, "
            f"{metrics.samples_per_second} samples/sec, {metrics.failure_rate:.2%} failure rate",
            (), None
        )
        record.metrics = asdict(metrics)
        record.check = check
        record.correlation_id = self.correlation_id[:8]
        self.logger.handle(record)

    def record_check(self, name: str, status: str, metrics: CheckMetrics,
                     measured: Dict[str, Any] = None, error: str = None) -> CheckRecord:
        entry = CheckRecord(name=name, status=status, measured=dict(measured or {}),
                            metrics=asdict(metrics), error=error)
        self.records.append(entry)
        return entry

    def close(self):
        for handler in self._library_handlers:
            self.library.removeHandler(handler)
        self._library_handlers.clear()
        self.library.setLevel(self._library_level)
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()


@dataclass
class CheckOutcome:
    """Mutable handle yielded by ``timed_check``; the body fills it in."""
    metrics: CheckMetrics = field(default_factory=CheckMetrics)
    measured: Dict[str, Any] = field(default_factory=dict)
    passed: bool = True


@contextmanager
def timed_check(logger: RunLogger, check_name: str):
    start_time = datetime.now()
    outcome = CheckOutcome()
    error_msg = None
    status = 'running'

    logger.info(f"Starting check: {check_name}", check=check_name)

    try:
        yield outcome
        status = 'success' if outcome.passed and outcome.metrics.samples_failed == 0 else 'failed'
    except Exception as e:
        status = 'error'
        error_msg = str(e)
        logger.error(f"Check '{check_name}' raised: {e}", check=check_name, exc_info=True)
        raise
    finally:
        metrics = outcome.metrics
        metrics.duration_seconds = (datetime.now() - start_time).total_seconds()
        metrics.calculate_rates()

        logger.log_metrics(check_name, metrics)
        logger.record_check(check_name, status, metrics, outcome.measured, error_msg)

        level = logger.info if status == 'success' else logger.warning
        level(
            f"Completed check: {check_name} ({status}) - "
            f"{metrics.samples_evaluated} samples in {metrics.duration_seconds:.2f}s",
            check=check_name
        )


def create_run_logger(run_name: str = None, log_config: LogConfig = None) -> RunLogger:
    correlation_id = str(uuid.uuid4())
    return RunLogger(run_name=run_name, correlation_id=correlation_id, log_config=log_config)
