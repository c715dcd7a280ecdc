"""Byte-stable CSV and JSON writing shared by the exporters.

Floats render with 17 significant digits so equal values always produce
equal bytes; data files carry no timestamps.
"""

import csv
import json


def fmt(value) -> str:
    """Render one cell: floats at full precision, everything else via str."""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def write_csv(path, header, rows) -> None:
    """Write rows of mixed cells with a fixed header and LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(cell) for cell in row])


def write_json(path, payload) -> None:
    """Write JSON with sorted keys so output bytes are order-independent."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
