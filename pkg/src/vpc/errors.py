"""Shared exception bases for domain errors.

Every module raises subclasses of VpcError for conditions the caller is
expected to handle; the CLI maps them to exit code 1. ParseError marks
the subset caused by unreadable input files (manifests, templates,
hypothesis files, configs), which the CLI reports as usage-level exit 2.
Programming errors (bad arguments to library functions) stay
ValueError/TypeError.
"""


class VpcError(Exception):
    """Base class for all domain-level failures in this package."""


class ParseError(VpcError):
    """An input file could not be parsed into its schema."""
