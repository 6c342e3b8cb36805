"""Deterministic per-(camera, wall) statistics over the adjustment field.

The three 2-vector channels collected per column (wall-offset delta along the
wall normal, camera translation delta, and the boundary-implied hit
displacement) are projected onto each wall's normal and direction axes and
reduced to their population mean and standard deviation, scaled by 100.  The
result is the fixed feature layout a learned consumer would ingest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .column_ba import AdjustmentField
from .scene import Scene

FEATURE_SCALE = 100.0
CHANNELS = ("delta_b", "delta_t", "hit_disp")
AXES = ("normal", "direction")


@dataclass(frozen=True)
class WallCameraStats:
    """Projected mean/std of the three channels for one (camera, wall) pair.

    ``means`` and ``stds`` have shape (3 channels, 2 axes): axis 0 is the
    wall-normal projection, axis 1 the wall-direction projection, both
    scaled by 100.
    """

    camera_id: int
    wall_id: int
    means: np.ndarray
    stds: np.ndarray
    count: int


def projected_stats(field: AdjustmentField, scene: Scene) -> list[WallCameraStats]:
    """Reduce the column axis per (camera, wall); pairs with no columns are absent.

    Population statistics (std is 0 for single-column groups); invariant to
    column order and linear in the field values.
    """
    if len(field) == 0:
        return []
    if np.any(field.wall_ids >= scene.n_walls):
        raise ValueError("field references a wall outside the scene")
    normals = scene.walls.normals[field.wall_ids]
    dirs = scene.walls.directions[field.wall_ids]
    ch_vals = np.empty((len(field), 3, 2))
    ch_vals[:, 0, :] = field.delta_b[:, None] * normals
    ch_vals[:, 1, :] = field.delta_t
    ch_vals[:, 2, :] = field.hit_displacement
    proj = np.empty((len(field), 3, 2))
    proj[:, :, 0] = np.einsum("mcj,mj->mc", ch_vals, normals)
    proj[:, :, 1] = np.einsum("mcj,mj->mc", ch_vals, dirs)

    keys = np.stack([field.camera_ids, field.wall_ids], axis=1)
    order = np.lexsort((field.wall_ids, field.camera_ids))
    keys = keys[order]
    proj = proj[order]
    boundaries = np.nonzero(np.any(np.diff(keys, axis=0) != 0, axis=1))[0] + 1
    groups = np.split(np.arange(len(field)), boundaries)
    out = []
    for grp in groups:
        vals = proj[grp]
        out.append(WallCameraStats(
            camera_id=int(keys[grp[0], 0]),
            wall_id=int(keys[grp[0], 1]),
            means=vals.mean(axis=0) * FEATURE_SCALE,
            stds=vals.std(axis=0) * FEATURE_SCALE,
            count=len(grp),
        ))
    return out


def write_stats_csv(stats: list[WallCameraStats], path) -> None:
    """CSV rows: camera_id,wall_id,channel,axis,mean,std,count."""
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["camera_id", "wall_id", "channel", "axis",
                         "mean", "std", "count"])
        for s in stats:
            for ci, channel in enumerate(CHANNELS):
                for ai, axis in enumerate(AXES):
                    writer.writerow([s.camera_id, s.wall_id, channel, axis,
                                     repr(float(s.means[ci, ai])),
                                     repr(float(s.stds[ci, ai])), s.count])
