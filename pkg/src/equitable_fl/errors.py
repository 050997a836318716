"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument broke a documented precondition."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of sweeps."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual off-diagonal norm {residual:.3e})")
        self.residual = residual


class DivergenceError(RuntimeError):
    """Local training produced a non-finite loss or gradient."""

    def __init__(self, message: str, step: int, round_index: int | None = None,
                 client_id: int | None = None):
        ctx = [f"step {step}"]
        if round_index is not None:
            ctx.append(f"round {round_index}")
        if client_id is not None:
            ctx.append(f"client {client_id}")
        super().__init__(f"{message} ({', '.join(ctx)})")
        self.step = step
        self.round_index = round_index
        self.client_id = client_id


class FormatError(ValueError):
    """A data file did not match the expected binary layout."""


class CapacityError(ValueError):
    """The source pool holds too few samples of some label."""

    def __init__(self, label: int, shortfall: int):
        super().__init__(f"label {label}: short by {shortfall} samples")
        self.label = label
        self.shortfall = shortfall


class DegenerateRowError(ValueError):
    """A zero row cannot be normalized."""
