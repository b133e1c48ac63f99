from abc import abstractmethod
import csv
import math
import numbers

class OutputDriver():
    """
    Abstract Base Class for table output drivers.

    Every sgl command that produces a table writes it through an
    OutputDriver; the subclass fixes the header line and how one
    record is formatted into CSV fields.  Plotting is left to whatever
    reads the CSV.
    """

    header = None

    def __init__(self, stream, dialect_args = None, *args, **kwargs):
        self.stream = stream
        self.dialect_args = dialect_args or {"lineterminator": "\n"}
        self.writer = csv.writer(self.stream, **self.dialect_args)
        self.rows = 0

    def emit_preamble(self):
        self.writer.writerow(self.header)

    @abstractmethod
    def emit_record(self, record):
        """
        Emit one record of the table.  Records are whatever the
        producing operation yields (a tuple, a report entry); the
        driver knows how to flatten them.
        """
        pass

    def emit_all(self, records):
        self.emit_preamble()
        for record in records:
            self.emit_record(record)
        return self.rows

    def write_fields(self, fields):
        self.writer.writerow([self.format_value(value) for value in fields])
        self.rows += 1

    # Common helpers for formatting numbers

    @staticmethod
    def format_value(value):
        """
        Full-precision text for floats (repr round-trips exactly),
        "inf"/"-inf"/"nan" for the non-finite ones.
        """
        if isinstance(value, (numbers.Integral, str)):
            return str(value)
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)

class SpectrumOutputDriver(OutputDriver):
    header = ["m", "k", "lambda"]

    def emit_record(self, record):
        m, k, value = record
        self.write_fields([int(m), int(k), value])

class DiagnosticsOutputDriver(OutputDriver):
    header = ["m", "k_m", "rank", "residual", "degenerate"]

    def emit_record(self, record):
        self.write_fields([record.m, record.k, record.rank,
                           record.residual, int(record.degenerate)])

class ConvergenceOutputDriver(OutputDriver):
    header = ["epsilon", "err_steerable", "err_standard"]

    def emit_record(self, record):
        self.write_fields(record)

class NoiseOutputDriver(OutputDriver):
    header = ["D", "sigma2", "err_noisy", "err_clean"]

    def emit_record(self, record):
        self.write_fields([record.D, record.sigma2,
                           record.err_noisy, record.err_clean])

class XvalOutputDriver(OutputDriver):
    """
    Cross-validation table: one row per grid cell, then the selected
    cell repeated as a final row with argmax set to 1.
    """

    header = ["epsilon", "lambda_c", "J", "argmax"]

    def emit_record(self, record):
        epsilon, lambda_c, J = record
        self.write_fields([epsilon, lambda_c, J, 0])

    def emit_argmax(self, epsilon, lambda_c, J):
        self.write_fields([epsilon, lambda_c, J, 1])
