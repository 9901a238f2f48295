"""Uniform nested square partitions of the unit square.

All geometry is dyadic: an entity is identified by integer cell coordinates
plus the level, so containment between nested levels is exact integer
arithmetic.  Every edge carries a fixed unit normal, +x for vertical edges
and +y for horizontal edges, independent of which elements touch it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, LevelOrderError

MAX_LEVEL = 20

# Local edge order used everywhere: (left, right, bottom, top).
# sigma = n . n_e, where n is the element outward normal and n_e the fixed
# edge normal (+x vertical, +y horizontal).  Same for every element.
EDGE_SIGNS = np.array([-1.0, 1.0, -1.0, 1.0])


@dataclass(frozen=True)
class MeshLevel:
    """A uniform 2^level x 2^level partition of (0,1)^2.

    Elements are ordered lexicographically by (iy, ix).  Vertical edges come
    first, ordered by (j, i) with i in 0..n and j in 0..n-1; horizontal edges
    follow, ordered by (j, i) with i in 0..n-1 and j in 0..n.
    """

    level: int
    n: int
    h: float
    elem_ix: np.ndarray
    elem_iy: np.ndarray
    edge_orient: np.ndarray      # 0 = vertical (normal +x), 1 = horizontal (+y)
    edge_i: np.ndarray
    edge_j: np.ndarray
    boundary_flags: np.ndarray
    elem_edges: np.ndarray       # (Ne, 4) edge ids in (left, right, bottom, top) order
    interior_index: np.ndarray   # position among interior edges, -1 on the boundary
    interior_edges: np.ndarray

    @property
    def num_elements(self) -> int:
        return self.n * self.n

    @property
    def num_edges(self) -> int:
        return self.edge_orient.size

    @property
    def num_boundary_edges(self) -> int:
        return int(self.boundary_flags.sum())

    @property
    def num_interior_edges(self) -> int:
        return self.interior_edges.size

    def element_centers(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.elem_ix + 0.5) * self.h, (self.elem_iy + 0.5) * self.h

    def element_origins(self) -> tuple[np.ndarray, np.ndarray]:
        return self.elem_ix * self.h, self.elem_iy * self.h

    def edge_midpoints(self) -> tuple[np.ndarray, np.ndarray]:
        vertical = self.edge_orient == 0
        mx = np.where(vertical, self.edge_i * self.h, (self.edge_i + 0.5) * self.h)
        my = np.where(vertical, (self.edge_j + 0.5) * self.h, self.edge_j * self.h)
        return mx, my

    def to_debug_dict(self) -> dict:
        return {
            "level": self.level,
            "mesh_size": self.h,
            "num_elements": self.num_elements,
            "num_edges": self.num_edges,
            "num_boundary_edges": self.num_boundary_edges,
            "elements": [
                {"ix": int(ix), "iy": int(iy)}
                for ix, iy in zip(self.elem_ix, self.elem_iy)
            ],
            "edges": [
                {
                    "orient": "vertical" if o == 0 else "horizontal",
                    "i": int(i),
                    "j": int(j),
                    "boundary": bool(b),
                }
                for o, i, j, b in zip(
                    self.edge_orient, self.edge_i, self.edge_j, self.boundary_flags
                )
            ],
            "element_edges": self.elem_edges.tolist(),
            "edge_signs": EDGE_SIGNS.tolist(),
        }

    def dump_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_debug_dict(), fh, indent=2, sort_keys=True)


def build_uniform(level: int) -> MeshLevel:
    """Build the uniform mesh at the given refinement level (h = 2^-level)."""
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    if level > MAX_LEVEL:
        raise CapacityError(f"level {level} exceeds the supported maximum {MAX_LEVEL}")

    n = 1 << level
    h = 2.0 ** (-level)

    idx = np.arange(n * n)
    elem_ix = idx % n
    elem_iy = idx // n

    # Vertical edges: x = i*h, y in [j*h, (j+1)*h]; id = j*(n+1) + i.
    nv = n * (n + 1)
    vid = np.arange(nv)
    vi = vid % (n + 1)
    vj = vid // (n + 1)
    # Horizontal edges: y = j*h, x in [i*h, (i+1)*h]; id = nv + j*n + i.
    hid = np.arange(nv)
    hi = hid % n
    hj = hid // n

    edge_orient = np.concatenate([np.zeros(nv, dtype=np.int8), np.ones(nv, dtype=np.int8)])
    edge_i = np.concatenate([vi, hi])
    edge_j = np.concatenate([vj, hj])
    boundary = np.concatenate([(vi == 0) | (vi == n), (hj == 0) | (hj == n)])

    left = elem_iy * (n + 1) + elem_ix
    right = left + 1
    bottom = nv + elem_iy * n + elem_ix
    top = nv + (elem_iy + 1) * n + elem_ix
    elem_edges = np.column_stack([left, right, bottom, top])

    interior_index = np.full(edge_orient.size, -1, dtype=np.int64)
    interior_edges = np.nonzero(~boundary)[0]
    interior_index[interior_edges] = np.arange(interior_edges.size)

    return MeshLevel(
        level=level,
        n=n,
        h=h,
        elem_ix=elem_ix,
        elem_iy=elem_iy,
        edge_orient=edge_orient,
        edge_i=edge_i,
        edge_j=edge_j,
        boundary_flags=boundary,
        elem_edges=elem_edges,
        interior_index=interior_index,
        interior_edges=interior_edges,
    )


def containment_map(coarse: MeshLevel, fine: MeshLevel) -> np.ndarray:
    """Map each fine element to the coarse element that contains it.

    Pure integer arithmetic: fine cell (ix, iy) lies in coarse cell
    (ix >> d, iy >> d) with d the level difference.
    """
    if fine.level < coarse.level:
        raise LevelOrderError(
            f"fine level {fine.level} is coarser than coarse level {coarse.level}"
        )
    d = fine.level - coarse.level
    return (fine.elem_iy >> d) * coarse.n + (fine.elem_ix >> d)
