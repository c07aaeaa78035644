class ConfigError(ValueError):
    """Raised when a scenario or model parameter set is invalid."""


class SimulationError(RuntimeError):
    """Raised when a running simulation produces a non-finite signal."""

    def __init__(self, signal, step):
        super().__init__(f"non-finite value in signal '{signal}' at step {step}")
        self.signal = signal
        self.step = step
