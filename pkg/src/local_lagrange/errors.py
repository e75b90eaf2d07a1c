"""Exception types. CLI exit codes key off these."""


class LocalLagrangeError(Exception):
    exit_code = 1


class NumericalError(LocalLagrangeError):
    exit_code = 3


class DegenerateNodesError(NumericalError, ValueError):
    """Duplicate nodes (zero separation)."""


class NonUnisolventError(NumericalError):
    def __init__(self, rank: int, Q: int, where: str = ""):
        self.rank = rank
        self.Q = Q
        msg = f"side-basis matrix has rank {rank} < {Q}"
        super().__init__(f"{msg} ({where})" if where else msg)


class LocalUnisolventError(NonUnisolventError):
    def __init__(self, center: int, rank: int, Q: int):
        self.center = center
        super().__init__(rank, Q, where=f"footprint of node {center}; try a larger M")


class ConditioningError(NumericalError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"saddle system is numerically singular (condition estimate {cond:.3e})")


class ConvergenceError(NumericalError):
    def __init__(self, report):
        self.report = report
        super().__init__(
            f"GMRES did not converge in {report.iterations} iterations "
            f"(relative residual {report.residual_history[-1]:.3e})"
        )


class ResourceCapError(LocalLagrangeError):
    exit_code = 4
