"""Exception types shared across the package."""


class UqliftError(Exception):
    """Base class for package errors."""


class ConfigError(UqliftError):
    """Malformed model, unknown catalog name, or invalid configuration value."""


class CapacityError(UqliftError):
    """A requested grid or scan exceeds the configured index/size budget."""


class CFLError(UqliftError):
    """Time step violates the admissibility bound for the requested scheme."""


class PositivityError(UqliftError):
    """A sampled coefficient a_i(z_m) is non-positive; carries (i, m)."""

    def __init__(self, i, m, value):
        self.i, self.m, self.value = i, m, value
        super().__init__(f"a_{i}(z_{m}) = {value!r} is not positive")


class InstabilityError(UqliftError):
    """A non-finite value appeared during time marching; carries the step index."""

    def __init__(self, step):
        self.step = step
        super().__init__(f"non-finite value at step {step}")


class LayoutError(UqliftError):
    """Field/state layout mismatch between producer and consumer."""


class StateError(UqliftError):
    """Operation requested on an unpopulated or inconsistent object."""


class ContractError(UqliftError):
    """Input violates an operation's structural contract (e.g. non-Hermitian)."""
