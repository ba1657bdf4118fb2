"""
Line plots of spectral profiles written as standalone SVG files.

Figures are drawn on a pyplot-free :class:`matplotlib.figure.Figure`; rcParams
are only changed inside an ``rc_context`` while rendering. A fixed hash salt and
an empty date keep the files byte-identical between runs. Text stays text, and
the DTD declaration matplotlib emits is dropped so the file references nothing
outside itself.
"""

import io
import logging
import re
from typing import List, Literal, Optional, Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from pydantic import BaseModel, model_validator

from specfid.config import SVG_HASH_SALT

logger = logging.getLogger(__name__)

_DOCTYPE = re.compile(rb"<!DOCTYPE[^>]*>\s*")


class Series(BaseModel):
    """One line, optionally drawn with a +/- band around it."""

    label: str
    x: List[float]
    y: List[float]
    band: Optional[List[float]] = None

    @model_validator(mode="after")
    def _lengths_match(self) -> "Series":
        if len(self.x) != len(self.y):
            raise ValueError(f"Series {self.label!r}: {len(self.x)} x values, {len(self.y)} y values")
        if self.band is not None and len(self.band) != len(self.y):
            raise ValueError(f"Series {self.label!r}: band length differs from y")
        return self


class PlotSpec(BaseModel):
    series: List[Series]
    y_scale: Literal["linear", "log"] = "log"
    title: str = ""
    x_label: str = "radius"
    y_label: str = "power"

    @model_validator(mode="after")
    def _has_series(self) -> "PlotSpec":
        if not self.series:
            raise ValueError("A plot needs at least one series")
        return self


def profile_series(label: str, mean: Sequence[float], std: Optional[Sequence[float]] = None) -> Series:
    """Series over radii 0..L-1 of a mean profile and its standard deviation."""
    return Series(
        label=label,
        x=[float(r) for r in range(len(mean))],
        y=[float(v) for v in mean],
        band=None if std is None else [float(v) for v in std],
    )


def render_svg(spec: PlotSpec, path: str) -> None:
    """Draw ``spec`` and save it as SVG.

    :param spec: What to draw
    :type spec: PlotSpec
    :param path: Destination file
    :type path: str
    """
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 4))
        ax = fig.subplots()
        for series in spec.series:
            x = np.asarray(series.x)
            y = np.asarray(series.y)
            (line,) = ax.plot(x, y, label=series.label)
            if series.band is not None:
                band = np.asarray(series.band)
                ax.fill_between(x, y - band, y + band, color=line.get_color(), alpha=0.2)
        if spec.y_scale == "log":
            ax.set_yscale("log", nonpositive="mask")
        ax.set_title(spec.title)
        ax.set_xlabel(spec.x_label)
        ax.set_ylabel(spec.y_label)
        ax.grid(alpha=0.15)
        ax.legend(loc="best")
        fig.tight_layout()
        buffer = io.BytesIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    svg = _DOCTYPE.sub(b"", buffer.getvalue(), count=1)
    with open(path, "wb") as f:
        f.write(svg)
    logger.info("Wrote plot %s", path)
