"""Figures for CLI runs.  Imported only when --plot is given; needs matplotlib."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path.name


def _convergence(rows, x, ys, path, xlabel, title):
    fig, ax = plt.subplots(figsize=(5, 4))
    xs = np.array([r[x] for r in rows])
    for y in ys:
        vals = np.abs([r[y] for r in rows])
        ax.loglog(xs, np.maximum(vals, 1e-300), "o-", label=y)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("|error|")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def _trace(rows, x, y, path, title):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r[x] for r in rows], [r[y] for r in rows], ".-")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(title)
    return _save(fig, path)


def _polar(rows, path):
    th = np.array([r["theta"] for r in rows])
    fig, ax = plt.subplots(figsize=(4.5, 4.5), subplot_kw={"projection": "polar"})
    ax.plot(th, [r["phi"] for r in rows], label="phi")
    ax.plot(th, [r["phi_env"] for r in rows], "--", label="phi**")
    ax.legend(fontsize=8, loc="lower right")
    return _save(fig, path)


def _field(path_bin, path_png, title):
    from .field import read_binary

    f = read_binary(path_bin)
    lo = f.grid.origin
    hi = [a + e for a, e in zip(f.grid.origin, f.grid.extent)]
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(f.values.T, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), cmap="RdBu_r", vmin=-1, vmax=1)
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    return _save(fig, path_png)


def render(command: str, tables: dict, run_dir) -> list:
    out = []
    if command == "profile-check":
        out.append(_convergence(tables["profile.csv"], "eps", ["kinetic_error", "tail", "residual"],
                                run_dir / "profile.png", "eps", "profile masses"))
    elif command == "recovery-energy":
        out.append(_convergence(tables["recovery.csv"], "eps", ["rel_error"], run_dir / "recovery.png", "eps",
                                "recovery energy vs sharp limit"))
    elif command == "point-energy":
        out.append(_convergence(tables["point_energy.csv"], "eps",
                                ["total_rel_error", "mm_rel_error", "willmore_rel_error"],
                                run_dir / "point_energy.png", "eps", "point energy vs 4 pi"))
    elif command == "convexify":
        out.append(_polar(tables["convexify.csv"], run_dir / "convexify.png"))
    elif command == "minimize":
        out.append(_trace(tables["trace.csv"], "step", "total", run_dir / "trace.png", "F_eps descent"))
        out.append(_field(run_dir / "v_final.bin", run_dir / "v_final.png", "v"))
    elif command == "ms-minimize":
        out.append(_trace(tables["trace.csv"], "cycle", "objective", run_dir / "trace.png", "alternating descent"))
        for name in ("u", "v", "w"):
            out.append(_field(run_dir / f"{name}_final.bin", run_dir / f"{name}_final.png", name))
    elif command == "ms-recovery":
        out.append(_field(run_dir / "v.bin", run_dir / "v.png", "v"))
    return out
