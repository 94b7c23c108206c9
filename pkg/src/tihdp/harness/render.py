"""Render trajectory logs to SVG: top-down paths per time window and priority shares."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .trajlog import read_log  # noqa: E402

CLASS_COLORS = ("tab:green", "tab:orange", "tab:gray")
CLASS_NAMES = ("Light", "Medium", "Heavy")
SVG_SALT = "tihdp-replay"


def _save(fig, path: Path) -> None:
    with plt.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def robot_paths(header: dict, steps: list) -> np.ndarray:
    """Robot positions over time, shape ``(steps + 1, N, 2)`` including the start."""
    start = np.asarray(header["initial"]["robot_position"], dtype=float)
    rows = [start] + [np.asarray([r["position"] for r in s["robots"]], dtype=float) for s in steps]
    return np.stack(rows)


def object_paths(header: dict, steps: list) -> np.ndarray:
    start = np.asarray(header["initial"]["object_position"], dtype=float)
    rows = [start] + [np.asarray([o["position"] for o in s["objects"]], dtype=float) for s in steps]
    return np.stack(rows)


def priority_shares(steps: list) -> np.ndarray:
    """Priority vectors over time, shape ``(T, N, M)``."""
    if not steps:
        return np.zeros((0, 0, 0))
    return np.asarray([[r["priority"] for r in s["robots"]] for s in steps], dtype=float)


def window_bounds(n_steps: int, windows: int) -> list:
    """Split ``[0, n_steps]`` (path indices) into ``windows`` contiguous ranges."""
    windows = max(1, min(windows, max(n_steps, 1)))
    edges = np.linspace(0, n_steps, windows + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def draw_trajectories(ax, header: dict, robots: np.ndarray, objects: np.ndarray, lo: int, hi: int) -> None:
    init = header["initial"]
    goals = np.asarray(init["object_goal"], dtype=float)
    classes = init["object_class"]
    for l, g in enumerate(goals):
        ax.plot(g[0], g[1], marker="x", color=CLASS_COLORS[classes[l]], markersize=9, linestyle="none")
    for l in range(objects.shape[1]):
        seg = objects[lo:hi + 1, l]
        color = CLASS_COLORS[classes[l]]
        ax.plot(seg[:, 0], seg[:, 1], color=color, linewidth=2.5, alpha=0.6)
        ax.add_patch(plt.Circle(seg[-1], header["scenario"]["disc_radius"], color=color, alpha=0.5))
    for i in range(robots.shape[1]):
        seg = robots[lo:hi + 1, i]
        color = f"C{i % 10}"
        if np.all(seg == seg[0]):
            ax.plot(seg[0, 0], seg[0, 1], marker="o", color=color, linestyle="none", label=f"robot {i}")
        else:
            ax.plot(seg[:, 0], seg[:, 1], color=color, linewidth=1.2, label=f"robot {i}")
            ax.plot(seg[-1, 0], seg[-1, 1], marker="o", color=color, linestyle="none")
    ax.set_aspect("equal")
    ax.set_title(f"steps {lo}-{hi}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")


def render_log(log, out_dir, windows: int = 4) -> list:
    """Write ``trajectories.svg`` and ``priorities.svg`` into ``out_dir``.

    A truncated log renders the complete steps and warns; a header-only log
    yields a single titled figure.
    """
    header, steps, _ = read_log(log)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = header["scenario"]
    title = (
        f"{header['variant']}  {scenario['n_light']}L/{scenario['n_medium']}M/{scenario['n_heavy']}H "
        f"N={scenario['n_robots']}  seed {header['seed']}"
    )
    if not steps:
        fig, ax = plt.subplots(figsize=(5, 2))
        ax.set_axis_off()
        ax.set_title(title + "\n(no steps recorded)")
        path = out / "trajectories.svg"
        _save(fig, path)
        return [path]

    robots = robot_paths(header, steps)
    objects = object_paths(header, steps)
    bounds = window_bounds(len(steps), windows)
    fig, axes = plt.subplots(1, len(bounds), figsize=(4 * len(bounds), 4.2), squeeze=False)
    for ax, (lo, hi) in zip(axes[0], bounds):
        draw_trajectories(ax, header, robots, objects, lo, hi)
    axes[0][0].legend(loc="upper left", fontsize=7)
    fig.suptitle(title)
    fig.tight_layout()
    paths = [out / "trajectories.svg"]
    _save(fig, paths[0])

    shares = priority_shares(steps)
    T, N, M = shares.shape
    fig, axes = plt.subplots(N, 1, figsize=(7, 1.6 * N + 0.6), sharex=True, squeeze=False)
    t = np.arange(1, T + 1)
    for i in range(N):
        ax = axes[i][0]
        ax.stackplot(t, shares[:, i, :].T, labels=[f"object {l}" for l in range(M)],
                     colors=[f"C{l % 10}" for l in range(M)], step="post")
        ax.set_ylim(0.0, 1.0)
        ax.set_xlim(1, max(T, 2))
        ax.set_ylabel(f"robot {i}")
    axes[0][0].legend(loc="upper right", fontsize=7, ncol=M)
    axes[-1][0].set_xlabel("step")
    fig.suptitle("task priority shares")
    fig.tight_layout()
    paths.append(out / "priorities.svg")
    _save(fig, paths[1])
    return paths
