"""Plot-ready output: two-column ``x y`` data files and PNG figures."""

from __future__ import annotations

import math
import os
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .grid import Grid, peak_location


class OutputError(OSError):
    """The output directory cannot be created or written."""


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {p}: {exc.strerror}") from None
    if not os.access(p, os.W_OK):
        raise OutputError(f"output directory {p} is not writable")
    return p


def _write_xy(path: Path, x, y) -> Path:
    rows = [f"{a:.17g} {b:.17g}" for a, b in zip(np.ravel(x), np.ravel(y))]
    try:
        path.write_text("\n".join(rows) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror}") from None
    return path


def scaling_points(records) -> tuple[np.ndarray, np.ndarray]:
    pts = [(r.eps, r.c_eps) for r in records if r.c_eps > 0]
    return np.log([p[0] for p in pts]), np.log([p[1] for p in pts])


def profile_slices(grid: Grid, f: np.ndarray) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Axis lines through the discrete peak of ``f``: ``(axis, x, values)`` per axis."""
    peak = grid.nearest_index(peak_location(grid, f))
    out = []
    for ax in range(grid.dim):
        idx = list(peak)
        idx[ax] = slice(None)
        out.append((ax, grid.axis, np.asarray(f[tuple(idx)])))
    return out


def emit_plotdata(
    out_dir,
    records: Optional[Sequence] = None,
    grid: Optional[Grid] = None,
    fields: Optional[Mapping[str, np.ndarray]] = None,
) -> list[Path]:
    """Write ``scaling_loglog.dat`` for sweep records and ``profile_*.dat`` slices for fields.

    A 1D field gives one file; in 2D and 3D there is one file per axis,
    named ``profile_<name>_ax<i>.dat``.
    """
    if records is None and fields is None:
        raise ValueError("nothing to emit")
    if records is not None and len(records) == 0:
        raise ValueError("empty record list")
    if fields is not None and (len(fields) == 0 or grid is None):
        raise ValueError("fields need a grid and at least one entry")
    out = ensure_dir(out_dir)
    written = []
    if records is not None:
        x, y = scaling_points(records)
        written.append(_write_xy(out / "scaling_loglog.dat", x, y))
    if fields is not None:
        for name, f in fields.items():
            for ax, x, y in profile_slices(grid, np.asarray(f)):
                fname = f"profile_{name}.dat" if grid.dim == 1 else f"profile_{name}_ax{ax}.dat"
                written.append(_write_xy(out / fname, x, y))
    return written


# figures -----------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_scaling_figure(path, records, fit=None) -> Path:
    plt = _pyplot()
    x, y = scaling_points(records)
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(x, y, "o", label="solves")
    if fit is not None:
        xs = np.linspace(x.min(), x.max(), 50)
        ax.plot(xs, fit.fitted_slope * xs + fit.intercept, "-", lw=1,
                label=f"slope {fit.fitted_slope:.3f}")
        if math.isfinite(fit.E_W_reference):
            ax.plot(xs, fit.predicted_exponent * xs + math.log(fit.E_W_reference), "--", lw=1,
                    label=f"predicted {fit.predicted_exponent:g}")
    ax.set_xlabel(r"$\log\varepsilon$")
    ax.set_ylabel(r"$\log c_\varepsilon$")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_profile_figure(path, grid: Grid, fields: Mapping[str, np.ndarray]) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(1, grid.dim, figsize=(4.5 * grid.dim, 3.5), squeeze=False)
    for name, f in fields.items():
        for ax_i, x, y in profile_slices(grid, np.asarray(f)):
            axes[0, ax_i].plot(x, y, lw=1.2, label=name)
    for ax_i in range(grid.dim):
        axes[0, ax_i].set_xlabel(f"$x_{ax_i + 1}$")
        axes[0, ax_i].legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
