"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Configuration is malformed or violates a model admissibility rule.

    ``path`` is the dotted key path of the offending entry, e.g.
    ``"converter.torque_ratio"``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class SimulationFault(RuntimeError):
    """The simulation hit a non-recoverable condition (non-finite state,
    accounting violation, stuck phase)."""

    def __init__(self, message: str, phase: str | None = None, step: int | None = None):
        self.phase = phase
        self.step = step
        detail = message
        if phase is not None:
            detail += f" [phase={phase}"
            detail += f", step={step}]" if step is not None else "]"
        super().__init__(detail)
