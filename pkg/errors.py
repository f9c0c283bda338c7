class NESError(Exception):
    """모든 시뮬레이터 에러의 base class"""
    code = "runtime"
    exit_code = 2


class ConfigError(NESError):
    code = "config"
    exit_code = 1


class InvalidSpecError(ConfigError):
    code = "invalid-spec"


class InvalidArgumentError(NESError, ValueError):
    code = "invalid-argument"


class InvalidInstanceError(NESError):
    code = "invalid-instance"


class ConsistencyError(NESError):
    code = "consistency"


class ConvergenceError(NESError):
    code = "convergence"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LyapunovError(NESError):
    code = "lyapunov"


class NumericalBlowupError(NESError):
    code = "blowup"

    def __init__(self, message, t=None, player=None, term=None):
        super().__init__(message)
        self.t = t
        self.player = player
        self.term = term


class MonteCarloError(NESError):
    code = "monte-carlo"

    def __init__(self, message, failed_seeds=()):
        super().__init__(message)
        self.failed_seeds = list(failed_seeds)
