"""Angle-constrained layout machinery: validity masks and loop propagation.

With wall directions frozen, each polygon vertex keeps exactly one free xy
coordinate; the other is implied by the incoming wall's line.  The validity
mask marks the free coordinate per vertex, and the directional regularizer
walks the loop overwriting the constrained coordinates of free-form vertex
predictions so every walked edge is collinear with its fixed direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import SceneError, cross2


@dataclass(frozen=True)
class ValidityMask:
    """Per-vertex (x_valid, y_valid) flags; exactly one set per vertex."""

    flags: np.ndarray  # (K, 2) bool

    def __post_init__(self):
        f = np.ascontiguousarray(self.flags, dtype=bool)
        if f.ndim != 2 or f.shape[1] != 2:
            raise SceneError(f"mask must have shape (K, 2), got {f.shape}")
        f.setflags(write=False)
        object.__setattr__(self, "flags", f)

    def __len__(self) -> int:
        return len(self.flags)

    @property
    def valid_axis(self) -> np.ndarray:
        """0 where x is the free coordinate, 1 where y is."""
        return np.where(self.flags[:, 0], 0, 1)


def build_validity_mask(directions: np.ndarray) -> ValidityMask:
    """Free-coordinate flags from the incoming wall of each vertex.

    Vertex k is the endpoint of wall k-1; its free axis is the dominant
    component of direction_{k-1} (ties go to x), which keeps the implied-
    coordinate solve well conditioned.
    """
    dirs = np.asarray(directions, dtype=float)
    if dirs.ndim != 2 or dirs.shape[1] != 2 or len(dirs) < 3:
        raise SceneError(f"need (K>=3, 2) directions, got {dirs.shape}")
    incoming = np.roll(dirs, 1, axis=0)
    x_valid = np.abs(incoming[:, 0]) >= np.abs(incoming[:, 1])
    flags = np.stack([x_valid, ~x_valid], axis=1)
    return ValidityMask(flags)


def ldr_propagate(predicted_vertices: np.ndarray, directions: np.ndarray,
                  mask: ValidityMask, start_index: int = 0) -> np.ndarray:
    """Walk the loop from the start vertex, fixing constrained coordinates.

    The start vertex is taken as fully determined.  For each step the free
    coordinate of the next vertex comes from the prediction and the other is
    solved from ``v_next = v_k + t * d_k``.  If the wall direction has a zero
    component on the free axis, t is solved from the constrained axis instead
    and the "free" prediction is overwritten (degenerate-direction guard).

    Every edge along the walk ends up collinear with its wall direction; the
    closing edge back to the start is *not* adjusted (see closure_residual).
    """
    pred = np.array(predicted_vertices, dtype=float)
    dirs = np.asarray(directions, dtype=float)
    k = len(pred)
    if dirs.shape != (k, 2) or len(mask) != k:
        raise SceneError("vertices, directions and mask sizes must agree")
    if np.any(np.linalg.norm(dirs, axis=1) < 1e-12):
        raise SceneError("zero wall direction")
    out = pred.copy()
    axis = mask.valid_axis
    for step in range(1, k):
        j = (start_index + step) % k
        prev = (j - 1) % k
        d = dirs[prev]
        free = int(axis[j])
        other = 1 - free
        if abs(d[free]) < 1e-12:
            # solve t on the constrained axis, overriding the free prediction
            free, other = other, free
        t = (pred[j, free] - out[prev, free]) / d[free]
        out[j, free] = pred[j, free]
        out[j, other] = out[prev, other] + t * d[other]
    return out


def closure_residual(vertices: np.ndarray, directions: np.ndarray) -> float:
    """Distance between the loop-propagated final vertex and the start.

    Walks v_0 along direction 0 to match v_1's along-track coordinate and so
    on around the loop; any vertex set produced from consistent wall offsets
    closes exactly (residual 0).
    """
    v = np.asarray(vertices, dtype=float)
    dirs = np.asarray(directions, dtype=float)
    k = len(v)
    if k < 3 or dirs.shape != (k, 2):
        raise SceneError("need K >= 3 vertices with matching directions")
    cur = v[0].copy()
    for i in range(k):
        d = dirs[i]
        nxt = v[(i + 1) % k] if i + 1 < k else v[0]
        # advance along the wall line to the foot closest to the next vertex
        t = float((nxt - cur) @ d)
        cur = cur + t * d
    return float(np.linalg.norm(cur - v[0]))


def direction_consistency(vertices: np.ndarray, directions: np.ndarray,
                          start_index: int = 0) -> float:
    """Max |cross(edge, direction)| over the walked (non-closing) edges."""
    v = np.asarray(vertices, dtype=float)
    dirs = np.asarray(directions, dtype=float)
    k = len(v)
    worst = 0.0
    for step in range(k - 1):
        j = (start_index + step) % k
        edge = v[(j + 1) % k] - v[j]
        worst = max(worst, abs(float(cross2(edge, dirs[j]))))
    return worst
