"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: usage/config problems exit 2,
data/domain problems exit 3, alignment problems exit 4.
"""


class FormatError(ValueError):
    """An input file is malformed (bad magic, truncation, unparsable line)."""


class ContractError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class DataError(ValueError):
    """Input data is well-formed but outside the supported domain."""


class AlignmentError(ValueError):
    """Paired inputs that must describe the same sentences do not match."""


class OovWordError(DataError):
    """A word has no entry in the embedding vocabulary."""
