"""Train one run and export the estimated-vs-exact value function slice.

After a single desk-scale solve of the bounded d=1, T=2 problem, the trained
step-0 network is evaluated on a uniform grid of points around x0 and written
as a slice CSV. If the optional plotting package (dadm-plotkit) is installed
the slice is also rendered to PNG; the numerical pipeline does not depend
on it.
"""

from pathlib import Path

from dadm.harness import build_config, emit_slice, run_experiment

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

config = build_config(preset="desk", problem="bounded", scheme="dadm",
                      d=1, T=2.0, runs=1, seed=42)
print("training a single run (a minute or two at desk scale)...")
report = run_experiment(config, keep_stacks=True)
print(f"  Y0 estimate: {report.estimates[0]:.6f}  (exact {report.exact:.6f})")

csv_path = out / "bounded_slice_i0.csv"
emit_slice(report.stacks[0], 0, (-2.0, 2.0), 101, csv_path)
print(f"wrote {csv_path}")

try:
    from plotkit import plot_slice
except ImportError:
    print("plotkit not installed; skipping the rendered figure")
else:
    png_path = out / "bounded_slice_i0.png"
    _, deviation = plot_slice(csv_path, png_path)
    print(f"wrote {png_path} (max |u_hat - u_exact| = {deviation:.4f})")
