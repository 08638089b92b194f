"""Figure output: SVG line charts or gnuplot-style data blocks.

SVGs are made reproducible by pinning the hash salt used for element ids
and dropping the creation date from the metadata.
"""

from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "figure.figsize": (5.0, 3.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "hesaw",
    "svg.fonttype": "path",
}

Series = Tuple[np.ndarray, np.ndarray, str]


def line_chart(path, series: Sequence[Series], xlabel: str, ylabel: str,
               title: Optional[str] = None, fmt: str = "svg",
               logx: bool = False, logy: bool = False) -> Path:
    """Write ``series`` as an SVG chart or as plain two-column data.

    For ``fmt="dat"`` each series is a block of ``x y`` rows headed by a
    comment with its label; blocks are separated by two blank lines so
    gnuplot's ``index`` picks them out.
    """
    path = Path(path)
    if fmt == "dat":
        path = path.with_suffix(".dat")
        chunks = [f"# {title or ''}\n# x: {xlabel}\n# y: {ylabel}"]
        for x, y, label in series:
            body = "\n".join(f"{float(a):.10g} {float(b):.10g}" for a, b in zip(x, y))
            chunks.append(f"# {label}\n{body}")
        path.write_text("\n\n\n".join(chunks) + "\n")
        return path
    if fmt != "svg":
        raise ValueError(f"unknown plot format {fmt!r}")
    path = path.with_suffix(".svg")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for x, y, label in series:
            ax.plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
