"""Structured Cartesian meshes with periodic wrap and boundary tags.

Cells are numbered lexicographically with the last axis running fastest
(``np.ravel_multi_index`` in C order).  All cells of a mesh share one size,
so every cell mapping is the same diagonal affine map up to a shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class BoundaryTag(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    PERIODIC = "periodic"


SIDE_NAMES = ("lower", "upper")


@dataclass(frozen=True)
class Cell:
    index: tuple
    lower: np.ndarray
    upper: np.ndarray
    volume: float
    h: float


@dataclass(frozen=True)
class FaceLink:
    owner: int
    neighbor: int
    axis: int
    # +1: the owner's outward normal points along +axis
    orientation: int
    periodic_wrap: bool


@dataclass(frozen=True)
class Face:
    cell: int
    axis: int
    side: int  # 0 -> lower side (normal -e_axis), 1 -> upper side (normal +e_axis)


@dataclass(frozen=True)
class AxisFaces:
    """Interior faces normal to one axis, as parallel owner/neighbor arrays.

    Within one axis every cell owns at most one face and neighbors at most
    one, so scatter-adds through either array never alias.
    """

    axis: int
    owner: np.ndarray
    neighbor: np.ndarray
    wrap: np.ndarray


@dataclass(frozen=True)
class BoundarySide:
    axis: int
    side: int
    tag: BoundaryTag
    cells: np.ndarray

    @property
    def normal_sign(self) -> float:
        return 1.0 if self.side == 1 else -1.0


@dataclass(frozen=True)
class Mesh:
    dim: int
    bounds: tuple
    n_cells: tuple
    periodic_axes: tuple
    side_tags: dict = field(repr=False)
    axis_faces: tuple = field(repr=False)
    boundary_sides: tuple = field(repr=False)

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.n_cells))

    @property
    def cell_size(self) -> np.ndarray:
        return np.array([(b - a) / n for (a, b), n in zip(self.bounds, self.n_cells)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.cell_size))

    @property
    def h_e(self) -> float:
        return self.cell_volume ** (1.0 / self.dim)

    @property
    def h_min(self) -> float:
        return float(min(self.h_e, self.cell_size.min()))

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in self.bounds]))

    def cell_index(self, cell_id):
        return np.unravel_index(cell_id, self.n_cells)

    def cell_lower_corners(self) -> np.ndarray:
        """Lower corner of every cell, shape (num_cells, dim)."""
        idx = np.stack(np.unravel_index(np.arange(self.num_cells), self.n_cells), axis=1)
        lo = np.array([a for a, _ in self.bounds])
        return lo + idx * self.cell_size

    def cell(self, cell_id: int) -> Cell:
        if not 0 <= cell_id < self.num_cells:
            raise IndexError(f"cell id {cell_id} outside [0, {self.num_cells})")
        idx = tuple(int(i) for i in self.cell_index(cell_id))
        lo = np.array([a for a, _ in self.bounds]) + np.array(idx) * self.cell_size
        return Cell(index=idx, lower=lo, upper=lo + self.cell_size, volume=self.cell_volume, h=self.h_e)

    @property
    def interior_faces(self) -> list:
        links = []
        for af in self.axis_faces:
            for o, nb, w in zip(af.owner, af.neighbor, af.wrap):
                links.append(FaceLink(int(o), int(nb), af.axis, +1, bool(w)))
        return links

    @property
    def boundary_faces(self) -> list:
        out = []
        for bs in self.boundary_sides:
            out.extend((Face(int(c), bs.axis, bs.side), bs.tag) for c in bs.cells)
        return out

    def has_tag(self, tag: BoundaryTag) -> bool:
        return any(bs.tag == tag for bs in self.boundary_sides)

    def sides_with(self, tag: BoundaryTag) -> list:
        return [bs for bs in self.boundary_sides if bs.tag == tag]

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic_axes)


def cell_metrics(mesh: Mesh, cell_id: int) -> tuple:
    """Return ``(V_e, h_e)`` of a cell; ``h_e = V_e ** (1 / dim)``."""
    c = mesh.cell(cell_id)
    return c.volume, c.h


def _normalize_spec(boundary_spec, dim):
    """Accept a single tag, a per-axis list, or a {(axis, side): tag} mapping."""
    if isinstance(boundary_spec, (str, BoundaryTag)):
        tag = BoundaryTag(boundary_spec)
        return {(a, s): tag for a in range(dim) for s in (0, 1)}
    if isinstance(boundary_spec, dict):
        out = {}
        for key, tag in boundary_spec.items():
            if isinstance(key, str):
                # "x0_lower" style keys
                ax, side = key.split("_")
                key = (int(ax.lstrip("x")), SIDE_NAMES.index(side))
            out[tuple(key)] = BoundaryTag(tag)
        missing = [(a, s) for a in range(dim) for s in (0, 1) if (a, s) not in out]
        if missing:
            raise ValueError(f"boundary_spec misses sides {missing}")
        return out
    spec = list(boundary_spec)
    if len(spec) != dim:
        raise ValueError(f"need {dim} per-axis boundary entries, got {len(spec)}")
    out = {}
    for a, entry in enumerate(spec):
        if isinstance(entry, (str, BoundaryTag)):
            entry = (entry, entry)
        out[(a, 0)] = BoundaryTag(entry[0])
        out[(a, 1)] = BoundaryTag(entry[1])
    return out


def build_cartesian_mesh(bounds, n_cells, boundary_spec="dirichlet") -> Mesh:
    """Build a uniform Cartesian mesh.

    Parameters
    ----------
    bounds : sequence of (low, high)
        Per-axis extent; ``len(bounds)`` sets the dimension (2 or 3).
    n_cells : int or sequence of int
        Cells per axis.
    boundary_spec : str, sequence or dict
        One tag for all sides, one tag (or (lower, upper) pair) per axis, or a
        ``{(axis, side): tag}`` map.  Tags: ``"dirichlet"``, ``"neumann"``,
        ``"periodic"``; a periodic axis must be periodic on both sides.
    """
    bounds = tuple((float(a), float(b)) for a, b in bounds)
    dim = len(bounds)
    if dim not in (2, 3):
        raise ValueError(f"only 2D and 3D meshes are supported, got dim={dim}")
    if np.isscalar(n_cells):
        n_cells = (int(n_cells),) * dim
    n_cells = tuple(int(n) for n in n_cells)
    if len(n_cells) != dim:
        raise ValueError("n_cells and bounds disagree in dimension")
    if any(n < 1 for n in n_cells):
        raise ValueError(f"cell counts must be >= 1, got {n_cells}")
    if any(b <= a for a, b in bounds):
        raise ValueError(f"non-positive extent in bounds {bounds}")

    tags = _normalize_spec(boundary_spec, dim)
    periodic = []
    for a in range(dim):
        lo_p = tags[(a, 0)] == BoundaryTag.PERIODIC
        hi_p = tags[(a, 1)] == BoundaryTag.PERIODIC
        if lo_p != hi_p:
            raise ValueError(f"axis {a}: periodic marking must cover both sides")
        periodic.append(lo_p)
    periodic = tuple(periodic)

    ids = np.arange(int(np.prod(n_cells))).reshape(n_cells)
    axis_faces = []
    boundary_sides = []
    for a in range(dim):
        n = n_cells[a]
        if periodic[a]:
            owner = ids
            neighbor = np.roll(ids, -1, axis=a)
            wrap_mask = np.zeros(n_cells, dtype=bool)
            sl = [slice(None)] * dim
            sl[a] = n - 1
            wrap_mask[tuple(sl)] = True
        else:
            lo = [slice(None)] * dim
            hi = [slice(None)] * dim
            lo[a] = slice(0, n - 1)
            hi[a] = slice(1, n)
            owner = ids[tuple(lo)]
            neighbor = ids[tuple(hi)]
            wrap_mask = np.zeros(owner.shape, dtype=bool)
            for side in (0, 1):
                sl = [slice(None)] * dim
                sl[a] = 0 if side == 0 else n - 1
                boundary_sides.append(
                    BoundarySide(a, side, tags[(a, side)], np.ascontiguousarray(ids[tuple(sl)].ravel()))
                )
        # keep owner order lexicographic
        owner = owner.ravel()
        order = np.argsort(owner, kind="stable")
        axis_faces.append(
            AxisFaces(
                a,
                np.ascontiguousarray(owner[order]),
                np.ascontiguousarray(neighbor.ravel()[order]),
                np.ascontiguousarray(wrap_mask.ravel()[order]),
            )
        )
    return Mesh(
        dim=dim,
        bounds=bounds,
        n_cells=n_cells,
        periodic_axes=periodic,
        side_tags=tags,
        axis_faces=tuple(axis_faces),
        boundary_sides=tuple(boundary_sides),
    )
