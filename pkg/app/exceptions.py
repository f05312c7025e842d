class SimulatorError(Exception):
    """Base class of every error raised by the simulator and the metrics engine."""


class ConfigError(SimulatorError, ValueError):
    pass


class EmptyTimelineError(SimulatorError, ValueError):
    def __init__(self, request_id: str | None = None):
        message = "no output tokens"
        if request_id is not None:
            message = f"{message} (request {request_id})"
        super().__init__(message)


class MetricUndefinedError(SimulatorError, ValueError):
    pass


class EmptyWindowError(SimulatorError, ValueError):
    pass


class SchedulingError(SimulatorError):
    pass


class WorkloadError(SimulatorError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TraceError(WorkloadError):
    pass


class InfeasibleBracketError(SimulatorError):
    pass
