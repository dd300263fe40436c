"""
Delta-system transducer simulator -- Report Renderer

Renders the plain-text summaries printed by the CLI (solve, predict,
validate, sweep and popmap) from Jinja2 templates in ``templates/``.

Usage:
    from src.report import ReportRenderer

    renderer = ReportRenderer()
    print(renderer.render("predict.txt.j2", report=prediction))
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader

from .config import PROJECT_ROOT

# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------

_DEFAULT_TEMPLATE_DIR = PROJECT_ROOT / "templates"


# ---------------------------------------------------------------------------
# Format helpers (registered as filters)
# ---------------------------------------------------------------------------

def format_sci(value: Any, digits: int = 3) -> str:
    """Scientific notation: 1.260e-05.  NaN and None print as 'n/a'."""
    if value is None:
        return "n/a"
    value = float(value)
    if math.isnan(value):
        return "n/a"
    return f"{value:.{digits}e}"


def format_db(ratio: Any) -> str:
    """Power ratio in decibels: 0.5 -> '-3.01 dB'."""
    if ratio is None:
        return "n/a"
    ratio = float(ratio)
    if math.isnan(ratio) or ratio < 0.0:
        return "n/a"
    if ratio == 0.0:
        return "-inf dB"
    return f"{10.0 * math.log10(ratio):.2f} dB"


def format_hz(value: Any) -> str:
    """Frequency with an SI prefix: 1.7e6 -> '1.700 MHz'."""
    if value is None:
        return "n/a"
    value = float(value)
    if math.isnan(value):
        return "n/a"
    for scale, prefix in ((1e9, "G"), (1e6, "M"), (1e3, "k")):
        if abs(value) >= scale:
            return f"{value / scale:.3f} {prefix}Hz"
    return f"{value:.3f} Hz"


class ReportRenderer:
    """Jinja2 renderer for CLI text reports."""

    def __init__(self, template_dir: str | Path | None = None) -> None:
        self.template_dir = Path(template_dir) if template_dir is not None else _DEFAULT_TEMPLATE_DIR
        self.env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            autoescape=False,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters["sci"] = format_sci
        self.env.filters["db"] = format_db
        self.env.filters["hz"] = format_hz

    def render(self, template_file: str, **context: Any) -> str:
        return self.env.get_template(template_file).render(**context)
