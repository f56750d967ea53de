"""Parse and render the harness's slice CSVs (estimated vs exact u over x)."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .errors import PlotkitError


@dataclass
class SliceFile:
    d: int
    x: List[List[float]]               # (n_points, d)
    u_hat: List[float]
    z_hat: List[List[float]]
    u_exact: Optional[List[float]]     # None when the exact columns are empty
    z_exact: Optional[List[List[float]]]
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def has_exact(self) -> bool:
        return self.u_exact is not None

    def max_abs_deviation(self) -> float:
        """max |u_hat - u_exact| over the rows of the file."""
        if not self.has_exact:
            raise PlotkitError("file carries no exact solution columns")
        return max(abs(h - e) for h, e in zip(self.u_hat, self.u_exact))


def _expected_header(d: int) -> List[str]:
    return ([f"x_{j + 1}" for j in range(d)] + ["u_hat"]
            + [f"z_hat_{j + 1}" for j in range(d)] + ["u_exact"]
            + [f"z_exact_{j + 1}" for j in range(d)])


def _parse_meta(line: str) -> Dict[str, str]:
    out = {}
    for token in line[len("# meta"):].split():
        if "=" in token:
            key, val = token.split("=", 1)
            out[key] = val
    return out


def read_slice(path) -> SliceFile:
    """Parse one slice CSV, validating the header against the emit_slice
    contract; raises PlotkitError naming the offending line otherwise."""
    meta: Dict[str, str] = {}
    header = None
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if raw.startswith("# meta"):
            meta = _parse_meta(raw)
            continue
        if raw.startswith("#") or not raw.strip():
            continue
        parts = raw.split(",")
        if header is None:
            header = parts
            if "u_hat" not in header:
                raise PlotkitError(f"{path}:{lineno}: missing u_hat column")
            d = header.index("u_hat")
            if d < 1 or header != _expected_header(d):
                raise PlotkitError(f"{path}:{lineno}: header deviates from the "
                                   f"slice schema: {raw!r}")
            continue
        if len(parts) != len(header):
            raise PlotkitError(f"{path}:{lineno}: expected {len(header)} "
                               f"fields, got {len(parts)}")
        rows.append((lineno, parts))
    if header is None:
        raise PlotkitError(f"{path}: empty file")

    d = header.index("u_hat")
    x, u_hat, z_hat, u_exact, z_exact = [], [], [], [], []
    for lineno, parts in rows:
        try:
            x.append([float(v) for v in parts[:d]])
            u_hat.append(float(parts[d]))
            z_hat.append([float(v) for v in parts[d + 1:2 * d + 1]])
            exact_part = parts[2 * d + 1:]
            if any(v.strip() for v in exact_part):
                u_exact.append(float(exact_part[0]))
                z_exact.append([float(v) for v in exact_part[1:]])
        except ValueError as exc:
            raise PlotkitError(f"{path}:{lineno}: {exc}") from None
    if u_exact and len(u_exact) != len(u_hat):
        raise PlotkitError(f"{path}: exact columns filled on only some rows")
    return SliceFile(d=d, x=x, u_hat=u_hat, z_hat=z_hat,
                     u_exact=u_exact or None, z_exact=z_exact or None,
                     meta=meta)


def plot_slice(slice_csv_path, output_image_path):
    """Line plot of u_hat (and u_exact when present) against the first
    coordinate; returns (figure, printed_deviation_or_None)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sf = read_slice(slice_csv_path)
    x1 = [row[0] for row in sf.x]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x1, sf.u_hat, label="estimated u", lw=1.5)
    deviation = None
    if sf.has_exact:
        ax.plot(x1, sf.u_exact, label="exact u", lw=1.0, ls="--")
        deviation = sf.max_abs_deviation()
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    title = "u slice"
    if sf.meta:
        bits = [f"{k}={v}" for k, v in sf.meta.items()]
        title = " ".join(bits)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(output_image_path)
    return fig, deviation
