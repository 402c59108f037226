"""Exception types shared across the package."""


class HiglassoError(Exception):
    """Base class for all package errors."""


class InputError(HiglassoError, ValueError):
    """Raised when user-supplied data or options are invalid."""


class RankDeficientError(InputError):
    """Raised when a design block is numerically rank deficient."""

    def __init__(self, block_name: str, detail: str = ""):
        self.block_name = block_name
        msg = f"design block {block_name!r} is rank deficient"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
