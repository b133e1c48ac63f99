import sys
import os
import json
import platform
from contextlib import contextmanager, redirect_stdout
from dataclasses import dataclass, field, asdict
from tempfile import NamedTemporaryFile

from .options import FormatError

@contextmanager
def safe_redirect_stdout(input_paths, new_filename, mode = "w+t"):
    """
    Output redirection helper.

    Creates a context within which stdout is redirected to a given
    filename, so that the CSV output drivers can always just write to
    stdout.

    Takes a sequence of input paths which must *not* be clobbered
    while the command is still reading them.  If the output filename
    names one of those inputs, stdout goes to a temporary file in the
    same directory, which is renamed over the target only when the
    context finishes.
    """

    # Redirecting to "-" (or nowhere) leaves stdout as it is.

    if new_filename is None or new_filename == "-":
        yield
        return

    for path in input_paths:
        if path is None or not os.path.exists(new_filename):
            continue
        if not os.path.samefile(path, new_filename):
            continue

        directory = os.path.dirname(os.path.abspath(new_filename))
        with NamedTemporaryFile(mode = mode,
                                dir = directory,
                                delete = False) as tmpfile:
            tmpname = tmpfile.name
            with redirect_stdout(tmpfile):
                yield

        os.replace(tmpname, new_filename)
        return

    with open(new_filename, mode = mode, newline = "") as outfile:
        with redirect_stdout(outfile):
            yield

@dataclass
class RunManifest:
    """
    Everything needed to rerun an sgl command: the resolved
    configuration, seeds, and the files it read and wrote.
    """

    command: str
    config: dict
    seeds: dict = field(default_factory = dict)
    inputs: list = field(default_factory = list)
    outputs: list = field(default_factory = list)
    wall_clock: float = 0.0
    version: str = ""
    python: str = field(default_factory = platform.python_version)

    def manifest_path(self):
        if not self.outputs or self.outputs[0] in (None, "-"):
            return None
        return self.outputs[0] + ".manifest.json"

    def write(self, path = None):
        """
        Write the manifest as JSON next to the first output (or to an
        explicit path).  Output on stdout has no manifest file; the
        manifest goes to stderr instead so it is never lost.
        """

        path = path or self.manifest_path()
        text = json.dumps(asdict(self), indent = 2, sort_keys = True,
                          default = _jsonable)

        if path is None:
            print(text, file = sys.stderr)
            return None

        with open(path, "wt") as outfile:
            outfile.write(text + "\n")
        return path

    @staticmethod
    def read(path):
        """Load a manifest written by write(), for comparing or replaying runs."""
        try:
            with open(path, "rt") as infile:
                return RunManifest(**json.load(infile))
        except (ValueError, TypeError) as e:
            raise FormatError(f"{path}: not a run manifest ({e})")

def _jsonable(value):
    # numpy scalars and arrays sneak into resolved configs
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, float) and value != value:
        return None
    return str(value)
