"""Report figures: every CLI construction that writes a sample file also
renders a determinant-error map and a displacement map next to it.

Rendering is deterministic for fixed inputs (fixed dpi, no timestamps in
the metadata) so repeated runs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mapfile import MapSamples  # noqa: E402

__all__ = ["render_sample_figures"]

_SAVE_KW = dict(dpi=130, metadata={"Software": "sympext"})


def render_sample_figures(samples: MapSamples, out_prefix: str):
    """Write <prefix>.det.png and <prefix>.disp.png; returns the paths."""
    paths = []
    if samples.dim != 2:
        return paths
    x, y = samples.points_in[:, 0], samples.points_in[:, 1]
    err = np.abs(samples.dets - 1.0)

    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    sc = ax.scatter(x, y, c=np.log10(np.maximum(err, 1e-17)), s=6,
                    cmap="viridis", rasterized=True)
    fig.colorbar(sc, ax=ax, label="log10 |det - 1|")
    ax.set_aspect("equal")
    ax.set_title("Jacobian determinant error")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    det_path = f"{out_prefix}.det.png"
    fig.savefig(det_path, **_SAVE_KW)
    plt.close(fig)
    paths.append(det_path)

    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    step = max(1, len(x) // 800)
    dx = samples.points_out[::step, 0] - x[::step]
    dy = samples.points_out[::step, 1] - y[::step]
    ax.quiver(x[::step], y[::step], dx, dy, angles="xy", scale_units="xy",
              scale=1.0, width=0.0025, color="#20446a")
    ax.set_aspect("equal")
    ax.set_title("Displacement field")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    disp_path = f"{out_prefix}.disp.png"
    fig.savefig(disp_path, **_SAVE_KW)
    plt.close(fig)
    paths.append(disp_path)
    return paths
