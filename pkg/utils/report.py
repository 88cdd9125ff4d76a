"""
Human-readable summaries and plot-script emission
"""
import math
from pathlib import Path
from typing import Dict, Iterable, Optional

import pandas as pd

from utils.errors import InvalidParameterError

WIDTH = 80


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if math.isnan(value):
            return "n/a"
        return f"{value:.6e}"
    return str(value)


def render_summary(
    title: str,
    items: Dict[str, object],
    table: Optional[pd.DataFrame] = None,
    max_rows: int = 20,
) -> str:
    """
    Banner, one `name: value` line per item, then an optional table

    Tables longer than max_rows show their head and tail.
    """
    lines = ["=" * WIDTH, title, "=" * WIDTH]
    if items:
        pad = max(len(k) for k in items)
        for key, value in items.items():
            lines.append(f"  {key:<{pad}}  {_format_value(value)}")

    if table is not None and not table.empty:
        lines.append("-" * WIDTH)
        if len(table) > max_rows:
            half = max_rows // 2
            shown = pd.concat([table.head(half), table.tail(half)])
            body = shown.to_string(index=False, float_format=lambda v: f"{v:.4e}")
            rows = body.splitlines()
            rows.insert(half + 1, "  ...")
            lines.extend(rows)
        else:
            lines.append(table.to_string(index=False, float_format=lambda v: f"{v:.4e}"))
    lines.append("=" * WIDTH)
    return "\n".join(lines)


PLOT_GROUPS = {
    "energies": ("E0", "E1", "E2"),
    "dissipations": ("D0", "D1", "D1_tilde", "D2"),
    "besov": ("u_besov_m1_2", "u_besov_m3_2", "u_besov_1_2_1"),
    "lipschitz": ("w_inf", "grad_w_inf", "grad_u_inf", "rho_inf"),
}


def plot_script(ledger_path: Path, groups: Iterable[str] = tuple(PLOT_GROUPS)) -> str:
    """Standalone matplotlib script plotting ledger columns against t on log axes"""
    groups = list(groups)
    unknown = [name for name in groups if name not in PLOT_GROUPS]
    if unknown:
        raise InvalidParameterError(f"unknown plot groups {unknown}; expected some of {list(PLOT_GROUPS)}")
    panels = {name: PLOT_GROUPS[name] for name in groups}
    panel_lines = "\n".join(f"    ({name!r}, {list(cols)!r})," for name, cols in panels.items())
    return f'''"""Plots for {Path(ledger_path).name}; needs pandas and matplotlib"""
import sys

import matplotlib.pyplot as plt
import pandas as pd

LEDGER = sys.argv[1] if len(sys.argv) > 1 else {str(ledger_path)!r}
PANELS = [
{panel_lines}
]

frame = pd.read_csv(LEDGER)
fig, axes = plt.subplots(len(PANELS), 1, figsize=(8, 3 * len(PANELS)), sharex=True, squeeze=False)
for ax, (title, columns) in zip(axes[:, 0], PANELS):
    for column in columns:
        positive = frame[frame[column] > 0]
        ax.loglog(positive["t"], positive[column], label=column)
    ax.set_title(title)
    ax.legend()
axes[-1, 0].set_xlabel("t")
fig.tight_layout()
fig.savefig(LEDGER.rsplit(".", 1)[0] + ".png", dpi=120)
'''
