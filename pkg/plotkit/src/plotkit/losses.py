"""Render the harness's training-loss CSVs, one curve per time step."""

from pathlib import Path
from typing import Dict, List, Tuple

from .errors import PlotkitError

HEADER = ["step", "iteration", "loss"]


def read_losses(path) -> Dict[int, List[Tuple[int, float]]]:
    """Parse a loss CSV into {step: [(iteration, loss), ...]}."""
    header = None
    curves: Dict[int, List[Tuple[int, float]]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if raw.startswith("#") or not raw.strip():
            continue
        parts = raw.split(",")
        if header is None:
            header = parts
            if header != HEADER:
                raise PlotkitError(f"{path}:{lineno}: expected header "
                                   f"{','.join(HEADER)}, got {raw!r}")
            continue
        try:
            step, it, loss = int(parts[0]), int(parts[1]), float(parts[2])
        except (ValueError, IndexError) as exc:
            raise PlotkitError(f"{path}:{lineno}: {exc}") from None
        curves.setdefault(step, []).append((it, loss))
    if header is None or not curves:
        raise PlotkitError(f"{path}: no loss rows")
    return curves


def plot_losses(loss_csv_path, output_image_path):
    """Per-step loss trajectories on a log scale; every recorded iteration is
    drawn (no decimation). Returns the figure."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curves = read_losses(loss_csv_path)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for step in sorted(curves):
        pts = curves[step]
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                lw=0.8, label=f"step {step}")
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("training loss per time step")
    if len(curves) <= 12:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(output_image_path)
    return fig
