"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid SoC floorplan, NoC parameter or register configuration."""


class ModelError(ValueError):
    """Shape or parameter mismatch in a kernel model."""


class ValidationError(ValueError):
    """A dataflow failed validation; ``issues`` lists every violation found."""

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(self.issues))


class AllocationError(RuntimeError):
    pass


class DeadlockError(RuntimeError):
    """Raised by the watchdog when the simulation stops making progress."""

    def __init__(self, message, cycle, waiting=()):
        self.cycle = cycle
        self.waiting = list(waiting)
        super().__init__(message)


class AcceleratorError(RuntimeError):
    """An accelerator finished an invocation with STATUS == Error."""
