'''
    Exceptions raised across the toolkit. Everything a caller can fix by changing its input is
    a `ValueError`; a solver that runs out of iterations raises `NonConvergenceError`.
'''


class IngestionError(ValueError):
    """ A cell of an input file could not be read as a finite number."""


class ValidationError(ValueError):
    """ An input is well-formed but violates a precondition of the requested operation."""


class SchemaVersionError(ValueError):
    """ A model file was written with a schema version this package does not read."""


class NoSignalError(ValueError):
    """ The between-group scatter is zero, so no discriminant direction exists."""


class NonConvergenceError(RuntimeError):
    """ A solve hit its iteration caps before meeting its convergence criteria."""
