"""Exception hierarchy shared by all modules."""


class UQFError(Exception):
    """Base class for errors raised by this package."""


class InvalidModelError(UQFError, ValueError):
    """A model, policy or spec violates its structural invariants."""


class EnumerationLimitError(UQFError):
    """A brute-force oracle would need to enumerate too many paths."""


class SpectralRadiusTooLarge(UQFError):
    """The Neumann series for the UQF terminal vector does not converge."""

    def __init__(self, rho, limit):
        self.rho = float(rho)
        self.limit = float(limit)
        super().__init__(
            f"spectral radius of gamma * sum(B_sigma) is {self.rho:.6g}, "
            f"must be below {self.limit:.6g}"
        )


class RankDeficiencyError(UQFError):
    """Requested rank exceeds the effective rank of a Hankel estimate."""

    def __init__(self, requested, effective, singular_values):
        self.requested = int(requested)
        self.effective = int(effective)
        self.singular_values = [float(s) for s in singular_values]
        shown = ", ".join(f"{s:.3g}" for s in self.singular_values[:12])
        super().__init__(
            f"rank {self.requested} requested but effective rank is "
            f"{self.effective}; singular values: [{shown}]"
        )


class ZeroSamplingProbability(UQFError, ValueError):
    """An action has (near) zero probability under the sampling policy."""
