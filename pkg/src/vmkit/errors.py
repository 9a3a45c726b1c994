"""Exception types shared across the package.

Each maps to a CLI exit code (see ``vmkit.cli``).
"""


class VmkitError(Exception):
    exit_code = 1


class InvalidArgumentError(VmkitError, ValueError):
    exit_code = 2


class SchemaError(VmkitError, ValueError):
    exit_code = 3


class StorageError(VmkitError, OSError):
    exit_code = 4


class DegenerateGeometryError(VmkitError, ValueError):
    exit_code = 5

