"""Static SVG coverage/length figures from simulation reports."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sim import SimulationReport  # noqa: E402

# RI red, SSRI black, SSRI without baseline blue
_COLORS = {"RI": "#d62728", "SSRI": "black", "SSRI-nobase": "#1f77b4"}
_FALLBACK = ["#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"]


def _color(method: str, i: int) -> str:
    return _COLORS.get(method.split("(")[0], _FALLBACK[i % len(_FALLBACK)])


def figure_svg(reports: Sequence[SimulationReport], n: int, alpha: float = 0.05) -> bytes:
    """Two-panel SVG for sample size ``n``: coverage on top, average CI length below."""
    series = []
    for rep in reports:
        label_dgp = rep.config.get("dgp", {}).get("kind", "")
        for m in rep.method_names:
            if n in rep.sample_sizes:
                name = m if len(reports) == 1 else f"{m} [{label_dgp}]"
                series.append((name, m, rep.column("coverage", m, n), rep.column("avg_ci_length", m, n)))
    if not series:
        raise ValueError(f"no report contains sample size {n}")
    k = len(series[0][2])
    width = 0.8 / len(series)
    x = np.arange(1, k + 1)
    with plt.rc_context({"svg.hashsalt": "gates-ri", "svg.fonttype": "none"}):
        fig, (ax_cov, ax_len) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        for i, (name, method, cov, length) in enumerate(series):
            offset = (i - (len(series) - 1) / 2) * width
            color = _color(method, i)
            ax_cov.bar(x + offset, cov, width, color=color, label=name)
            ax_len.bar(x + offset, length, width, color=color, label=name)
        ax_cov.axhline(1 - alpha, color="grey", linestyle="--", linewidth=1)
        ax_cov.set_ylim(0, 1)
        ax_cov.set_ylabel("coverage")
        ax_cov.set_title(f"n = {n}")
        ax_cov.legend(loc="lower right", fontsize=8)
        ax_len.set_ylabel("average CI length")
        ax_len.set_xlabel("sorted group")
        ax_len.set_xticks(x)
        fig.tight_layout()
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def write_figures(reports: Sequence[SimulationReport], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    alpha = float(reports[0].config.get("alpha", 0.05))
    sizes = sorted({n for r in reports for n in r.sample_sizes})
    paths = []
    for n in sizes:
        path = out_dir / f"coverage_length_n{n}.svg"
        path.write_bytes(figure_svg(reports, n, alpha))
        paths.append(path)
    return paths
