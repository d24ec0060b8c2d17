"""Exception hierarchy shared by every module."""


class LeagueError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LeagueError, ValueError):
    pass


class CapacityError(LeagueError):
    pass


class NotFoundError(LeagueError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class StateError(LeagueError):
    pass


class NumericError(LeagueError, ArithmeticError):
    pass


class NoDataError(LeagueError):
    """Raised where a quantity is undefined for lack of observations (distinct from a value of 0)."""


class ConfigError(LeagueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class CheckpointError(LeagueError):
    pass


class MigrationError(CheckpointError):
    pass
