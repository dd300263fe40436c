"""
Delta-system transducer simulator -- Result files

Sweep lattices are written as UTF-8 CSV: a block of ``#`` header lines
carrying provenance (config hash, constants version, axis and output
units), one header row of column names, then one row per cell with the
axis values first, the outputs next and a ``converged`` flag last.
Floats are written with ``repr`` so a file reads back bit-exactly, and
nothing time-dependent goes into the file, so identical runs produce
identical bytes.

Usage:
    from src.result_writer import write_result, read_result

    write_result(result, "output/mw_sweep.csv")
    again = read_result("output/mw_sweep.csv")
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from .models import TWO_PI, AxisScale, SweepAxis, SweepResult
from .scenarios import PopulationMapReport

logger = logging.getLogger(__name__)

FORMAT_TAG = "delta-sim sweep v1"


def _fmt(value: Any) -> str:
    return repr(float(value))


def _ensure_parent(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)


# ---------------------------------------------------------------------------
# Sweep results
# ---------------------------------------------------------------------------

def write_result(result: SweepResult, path: str | Path) -> Path:
    """Write a sweep lattice as commented-header CSV (C order, last axis fastest)."""
    path = Path(path)
    _ensure_parent(path)
    outputs = list(result.values)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# {FORMAT_TAG}\n")
        for key in sorted(result.provenance):
            f.write(f"# {key}: {result.provenance[key]}\n")
        for axis in result.axes:
            f.write(
                f"# axis: {axis.name} unit={axis.unit or 'none'} scale={axis.scale.value} "
                f"start={_fmt(axis.start)} stop={_fmt(axis.stop)} count={axis.count}\n"
            )
        for name in outputs:
            f.write(f"# output: {name}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([axis.name for axis in result.axes] + outputs + ["converged"])
        for idx in np.ndindex(*result.shape):
            row = [_fmt(vals[i]) for vals, i in zip(result.axis_values, idx)]
            row += [_fmt(result.values[name][idx]) for name in outputs]
            row.append("1" if result.converged[idx] else "0")
            writer.writerow(row)
    logger.info("Wrote %d cells to %s", result.converged.size, path)
    return path


def _parse_axis(text: str) -> SweepAxis:
    name, *pairs = text.split()
    fields = dict(pair.split("=", 1) for pair in pairs)
    unit = fields.get("unit", "")
    return SweepAxis(
        name=name,
        start=float(fields["start"]),
        stop=float(fields["stop"]),
        count=int(fields["count"]),
        scale=AxisScale(fields.get("scale", AxisScale.LINEAR.value)),
        unit="" if unit == "none" else unit,
    )


def read_result(path: str | Path) -> SweepResult:
    """Parse a CSV written by write_result back into a SweepResult."""
    path = Path(path)
    provenance: dict[str, str] = {}
    axes: list[SweepAxis] = []
    outputs: list[str] = []
    body: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line in f:
            if not line.startswith("#"):
                body.append(line)
                continue
            text = line[1:].strip()
            key, sep, value = text.partition(": ")
            if not sep:
                continue
            if key == "axis":
                axes.append(_parse_axis(value))
            elif key == "output":
                outputs.append(value)
            else:
                provenance[key] = value

    rows = list(csv.reader(body))
    if not rows or not axes:
        raise ValueError(f"{path}: not a sweep result file")
    header, data = rows[0], rows[1:]
    expected = [axis.name for axis in axes] + outputs + ["converged"]
    if header != expected:
        raise ValueError(f"{path}: column header {header} does not match metadata {expected}")

    shape = tuple(axis.count for axis in axes)
    if len(data) != math.prod(shape):
        raise ValueError(f"{path}: expected {math.prod(shape)} rows, found {len(data)}")
    table = np.array([[float(cell) for cell in row[:-1]] for row in data], dtype=float).reshape(shape + (-1,))
    converged = np.array([row[-1] == "1" for row in data], dtype=bool).reshape(shape)

    axis_values = []
    for k in range(len(axes)):
        index: list[Any] = [0] * len(axes)
        index[k] = slice(None)
        axis_values.append(table[tuple(index) + (k,)].copy())
    values = {name: table[..., len(axes) + j].copy() for j, name in enumerate(outputs)}
    return SweepResult(
        axes=tuple(axes),
        axis_values=tuple(axis_values),
        values=values,
        converged=converged,
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Population maps and JSON reports
# ---------------------------------------------------------------------------

def write_population_map(report: PopulationMapReport, path: str | Path, provenance: dict[str, str]) -> Path:
    """One row per lattice node: ion detunings (Hz), rho11 - rho33 and its microwave-induced change."""
    path = Path(path)
    _ensure_parent(path)
    pop = report.map
    change = report.change.values
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("# delta-sim population map v1\n")
        for key in sorted(provenance):
            f.write(f"# {key}: {provenance[key]}\n")
        f.write(f"# p_mw_dbm: {_fmt(report.p_mw_dbm)}\n")
        f.write(f"# lattice: {pop.row_name} x {pop.col_name} [Hz]\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([pop.row_name, pop.col_name, "popdiff", "popdiff_change"])
        for i, j in np.ndindex(*pop.values.shape):
            writer.writerow([
                _fmt(pop.delta_o[i, j] / TWO_PI),
                _fmt(pop.delta_mu[i, j] / TWO_PI),
                _fmt(pop.values[i, j]),
                _fmt(change[i, j]),
            ])
    logger.info("Wrote population map (%d nodes) to %s", pop.values.size, path)
    return path


def _json_safe(value: Any) -> Any:
    """Replace non-finite floats with None, recursively."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_json(data: dict[str, Any], path: str | Path) -> Path:
    """Pretty, key-sorted JSON; NaN and infinities become null."""
    path = Path(path)
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_safe(data), f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    logger.info("Wrote %s", path)
    return path
