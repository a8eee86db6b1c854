"""Qualitative figures: input image beside stick figures of the 3D pose seen from chosen azimuths."""
import math
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PREDICTED_COLOR = 'red'
TARGET_COLOR = 'green'


def view_coordinates(pose3d, azimuth_degrees):
    """Orthographic (x, y) of a pose turned about the vertical axis through its centroid."""
    pose3d = np.asarray(pose3d, dtype=np.float64)
    centered = pose3d - pose3d.mean(axis=0, keepdims=True)
    angle = math.radians(azimuth_degrees)
    c, s = math.cos(angle), math.sin(angle)
    rotation = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return (centered @ rotation.T)[:, :2]


def draw_skeleton(axes, points, topology, color, label=None):
    for k, (i, j) in enumerate(topology.edges):
        axes.plot(
            [points[i, 0], points[j, 0]], [points[i, 1], points[j, 1]],
            color=color, linewidth=2, label=label if k == 0 else None,
        )


def pose_figure(image, predicted, topology, target=None, views=(0.0, 90.0)):
    views = list(views)
    figure, axes = plt.subplots(1, 1 + len(views), figsize=(3 * (1 + len(views)), 3), squeeze=False)
    axes = axes[0]
    axes[0].imshow(np.asarray(image), cmap='gray', vmin=0.0, vmax=1.0)
    axes[0].set_axis_off()

    for panel, azimuth in zip(axes[1:], views):
        if target is not None:
            draw_skeleton(panel, view_coordinates(target, azimuth), topology, TARGET_COLOR, 'target')
        draw_skeleton(panel, view_coordinates(predicted, azimuth), topology, PREDICTED_COLOR, 'predicted')
        panel.set_title(f'azimuth {azimuth:g}')
        panel.set_aspect('equal')
        panel.set_xticks([])
        panel.set_yticks([])
    return figure


def emit_pose_figure(image, predicted, topology, path, target=None, views=(0.0, 90.0)):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure = pose_figure(image, predicted, topology, target, views)
    figure.savefig(path, bbox_inches='tight')
    plt.close(figure)
    return path


def emit_curve(steps, values, title, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure, axes = plt.subplots(figsize=(5, 3.5))
    axes.plot(steps, values, linewidth=1.5)
    axes.set_xlabel('step')
    axes.set_title(title)
    axes.grid(alpha=0.3)
    figure.savefig(path, bbox_inches='tight')
    plt.close(figure)
    return path
