#!/usr/bin/python3
#
# options.py
#
# Exception hierarchy and common run options shared by the library
# and the sgl command-line tools

import os

class SteerableError(Exception):
    """
    Base class for every failure the library reports to its callers.

    Each subclass carries the process exit code the sgl CLI uses when
    that failure escapes a command.
    """

    exit_code = 1

    def __init__(self, message, *args):
        self.message = message

        super(SteerableError, self).__init__(message, *args)

class ConfigError(SteerableError):
    exit_code = 2

class LayoutError(ConfigError):
    pass

class DimensionError(ConfigError):
    pass

class AliasingError(ConfigError):
    pass

class FormatError(SteerableError):
    exit_code = 3

class NumericalError(SteerableError):
    exit_code = 4

class IsolatedPointError(NumericalError):
    def __init__(self, index, degree, *args):
        self.index = index
        self.degree = degree

        super(IsolatedPointError, self).__init__(
            f"point {index} is isolated (degree {degree:.3g}); "
            "epsilon is too small for the spread of the data", *args)

class Options:
    def __init__(self, threads = None, colour = None, debug = False):
        self.threads = threads
        self.colour = colour
        self.debug = debug

    def worker_count(self):
        """
        Resolve the number of worker threads: an explicit --threads
        value wins, then the SGL_THREADS environment variable, then a
        single worker.
        """

        threads = self.threads
        if threads is None:
            threads = os.environ.get("SGL_THREADS")

        try:
            threads = int(threads) if threads is not None else 1
        except ValueError:
            raise ConfigError(f"invalid thread count {threads!r}")

        if threads < 1:
            raise ConfigError(f"thread count must be positive, got {threads}")

        return threads
