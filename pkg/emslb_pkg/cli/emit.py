# emslb_pkg/cli/emit.py
import csv
import io
import logging
import math
from pathlib import Path

from ..errors import OutputError

logger = logging.getLogger(__name__)


def _format(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        # repr() is the shortest string that round-trips exactly
        return repr(value) if math.isfinite(value) else str(value).lower()
    return str(value)


def render_csv(table):
    """
    CSV text: `# key=value` provenance lines (sorted by key), a `# units=` line,
    the header row, then one line per row. LF line endings throughout.
    """
    buffer = io.StringIO()
    for key in sorted(table.provenance):
        buffer.write(f"# {key}={table.provenance[key]}\n")
    buffer.write("# units=" + ",".join(table.units) + "\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.column_names)
    for row in table.rows:
        writer.writerow([_format(value) for value in row])
    return buffer.getvalue()


def emit(table, path, format="csv"):
    """
    Writes the table as UTF-8 CSV.

    Raises:
        OutputError: on unsupported formats or I/O failure, with the path attached.
    """
    if format != "csv":
        raise OutputError(f"unsupported output format '{format}'", path)
    path = Path(path)
    text = render_csv(table)
    try:
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as error:
        raise OutputError(f"cannot write results to {path}: {error.strerror or error}", path) from error
    logger.info(f"[CLI] wrote {len(table.rows)} row(s) to {path}")
    return path
