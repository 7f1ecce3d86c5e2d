from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from hho_afem import error, util
from hho_afem.fem import settings

# Local edge j joins local vertices (j+1) % 3 and (j+2) % 3 and lies opposite
# local vertex j.
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


class Mesh:
    """Immutable conforming triangulation with side topology.

    Each triangle's vertices are stored counterclockwise. A side is stored
    once with its vertices sorted by index, which fixes the orientation of
    side polynomials. ``side_cells[F] = (T+, T-)`` with ``T- = -1`` on the
    boundary; the unit normal ``side_normals[F]`` points from ``T+`` into
    ``T-``.

    Attributes
    ----------
    vertices
        Coordinates, shape ``(nV, 2)``.
    triangles
        Vertex indices, shape ``(nT, 3)``.
    refinement_edge
        Local index of each triangle's refinement edge (the edge opposite
        the newest vertex). Defaults to the longest edge.
    generation
        Number of bisections between each triangle and its initial ancestor.
    parents
        Index of each triangle's parent in the previous mesh, or ``None`` for
        an initial mesh.
    """

    def __init__(
        self,
        vertices: np.ndarray,
        triangles: np.ndarray,
        *,
        refinement_edge: Optional[np.ndarray] = None,
        generation: Optional[np.ndarray] = None,
        parents: Optional[np.ndarray] = None,
        boundary_markers: Optional[Iterable[Sequence[int]]] = None,
    ):
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)

        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise error.ValidationError("vertices must have shape (n, 2)")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise error.ValidationError("triangles must have shape (n, 3)")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise error.ValidationError("triangle vertex index out of range")

        self.vertices = vertices
        self.triangles = triangles
        self.refinement_edge = (
            _longest_edge(vertices, triangles)
            if refinement_edge is None
            else np.array(refinement_edge, dtype=np.int64)
        )
        self.generation = (
            np.zeros(len(triangles), dtype=np.int64)
            if generation is None
            else np.array(generation, dtype=np.int64)
        )
        self.parents = None if parents is None else np.array(parents, np.int64)

        self._init_geometry()
        self._init_sides()
        self._check_conformity(boundary_markers)

        for name in (
            "vertices",
            "triangles",
            "refinement_edge",
            "generation",
            "jacobians",
            "determinants",
            "areas",
            "sides",
            "side_cells",
            "cell_sides",
            "cell_side_flip",
            "side_normals",
            "side_lengths",
            "is_boundary",
        ):
            getattr(self, name).setflags(write=False)

    # -- construction --

    def _init_geometry(self) -> None:
        p0, p1, p2 = (self.vertices[self.triangles[:, i]] for i in range(3))
        self.jacobians = np.stack([p1 - p0, p2 - p0], axis=2)
        self.determinants = (
            self.jacobians[:, 0, 0] * self.jacobians[:, 1, 1]
            - self.jacobians[:, 0, 1] * self.jacobians[:, 1, 0]
        )

        edge_lengths = np.stack(
            [np.linalg.norm(p2 - p1, axis=1), np.linalg.norm(p0 - p2, axis=1),
             np.linalg.norm(p1 - p0, axis=1)],
            axis=1,
        )
        scale = edge_lengths.max(axis=1) ** 2

        degenerate = np.abs(self.determinants) <= settings.GEOMETRY_TOLERANCE * scale
        if degenerate.any():
            raise error.DegenerateElementError(
                f"Triangle {int(np.flatnonzero(degenerate)[0])} has zero area",
                details={"triangles": np.flatnonzero(degenerate).tolist()},
            )
        if (self.determinants < 0).any():
            bad = np.flatnonzero(self.determinants < 0)
            raise error.OrientationError(
                f"Triangle {int(bad[0])} is oriented clockwise",
                details={"triangles": bad.tolist()},
            )

        self.areas = 0.5 * self.determinants
        self.diameters = edge_lengths.max(axis=1)
        self.centroids = (p0 + p1 + p2) / 3.0

    def _init_sides(self) -> None:
        n_cells = len(self.triangles)
        local = self.triangles[:, LOCAL_EDGES]  # (nT, 3, 2)
        keys = np.sort(local, axis=2).reshape(-1, 2)

        sides, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.ravel()
        if (counts > 2).any():
            bad = sides[np.flatnonzero(counts > 2)[0]]
            raise error.NonConformingMeshError(
                f"Side {tuple(bad.tolist())} is shared by more than two triangles"
            )

        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(order), dtype=bool)
        first[1:] = inverse[order[1:]] != inverse[order[:-1]]

        side_cells = -np.ones((len(sides), 2), dtype=np.int64)
        side_cells[inverse[order[first]], 0] = order[first] // 3
        side_cells[inverse[order[~first]], 1] = order[~first] // 3

        self.sides = sides
        self.side_cells = side_cells
        self.cell_sides = inverse.reshape(n_cells, 3)
        self.cell_side_flip = local[:, :, 0] != sides[self.cell_sides][:, :, 0]

        self.is_boundary = side_cells[:, 1] < 0

        tangent = self.vertices[sides[:, 1]] - self.vertices[sides[:, 0]]
        self.side_lengths = np.linalg.norm(tangent, axis=1)
        normals = np.column_stack([tangent[:, 1], -tangent[:, 0]])
        normals /= self.side_lengths[:, None]

        # a counterclockwise triangle has its outward normal on the right of
        # its local edge direction
        plus_cell = side_cells[:, 0]
        plus_local = np.argmax(self.cell_sides[plus_cell] == np.arange(len(sides))[:, None], axis=1)
        plus_flip = self.cell_side_flip[plus_cell, plus_local]
        self.side_normals = np.where(plus_flip[:, None], -normals, normals)

    def _check_conformity(self, boundary_markers) -> None:
        boundary = self.sides[self.is_boundary]
        a = self.vertices[boundary[:, 0]]
        b = self.vertices[boundary[:, 1]]
        t = b - a
        length2 = np.einsum("ij,ij->i", t, t)

        for start in range(0, len(boundary), 64):
            stop = start + 64
            d = self.vertices[None, :, :] - a[start:stop, None, :]
            cross = t[start:stop, None, 0] * d[:, :, 1] - t[start:stop, None, 1] * d[:, :, 0]
            along = np.einsum("sj,svj->sv", t[start:stop], d) / length2[start:stop, None]
            on_line = np.abs(cross) <= settings.GEOMETRY_TOLERANCE * length2[start:stop, None]
            inside = on_line & (along > 1e-10) & (along < 1.0 - 1e-10)
            if inside.any():
                s, v = np.argwhere(inside)[0]
                raise error.NonConformingMeshError(
                    f"Hanging vertex {int(v)} on side "
                    f"{tuple(boundary[start + s].tolist())}"
                )

        if boundary_markers is not None:
            marked = {tuple(sorted(int(i) for i in side)) for side in boundary_markers}
            topological = {tuple(side) for side in boundary.tolist()}
            if marked != topological:
                raise error.NonConformingMeshError(
                    "Boundary markers disagree with the triangulation",
                    details={
                        "missing": sorted(topological - marked),
                        "unexpected": sorted(marked - topological),
                    },
                )

    # -- topology --

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.triangles)

    @property
    def n_sides(self) -> int:
        return len(self.sides)

    @property
    def boundary_sides(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary)

    @property
    def interior_sides(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.sides[self.is_boundary])

    @property
    def domain_area(self) -> float:
        return float(self.areas.sum())

    # -- geometry --

    def map_to_physical(
        self, reference_points: np.ndarray, cells: Optional[np.ndarray] = None
    ) -> np.ndarray:
        """Maps reference points to every (or the selected) cell, ``(n, m, 2)``."""
        cells = slice(None) if cells is None else cells
        origin = self.vertices[self.triangles[cells, 0]]
        return origin[:, None, :] + np.einsum(
            "cij,mj->cmi", self.jacobians[cells], np.asarray(reference_points)
        )

    def map_to_reference(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Pulls physical points ``(n, m, 2)`` back to the reference triangle."""
        origin = self.vertices[self.triangles[cells, 0]]
        inverse = np.linalg.inv(self.jacobians[cells])
        return np.einsum("cij,cmj->cmi", inverse, points - origin[:, None, :])

    def minimum_angle(self) -> float:
        """Smallest interior angle over all triangles, in radians."""
        angles = []
        for j in range(3):
            p = self.vertices[self.triangles[:, j]]
            q = self.vertices[self.triangles[:, (j + 1) % 3]]
            r = self.vertices[self.triangles[:, (j + 2) % 3]]
            u, v = q - p, r - p
            cosine = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1)
            )
            angles.append(np.arccos(np.clip(cosine, -1.0, 1.0)))
        return float(np.min(angles))

    def __repr__(self):
        return (
            f"Mesh(vertices={self.n_vertices}, triangles={self.n_cells}, "
            f"sides={self.n_sides})"
        )


def _longest_edge(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Longest local edge per triangle, ties to the smallest opposite vertex."""
    p = vertices[triangles]
    lengths = np.stack(
        [np.linalg.norm(p[:, (j + 2) % 3] - p[:, (j + 1) % 3], axis=1) for j in range(3)],
        axis=1,
    )
    longest = lengths.max(axis=1, keepdims=True)
    candidate = lengths >= longest * (1.0 - settings.GEOMETRY_TOLERANCE)
    opposite = np.where(candidate, triangles, np.iinfo(np.int64).max)
    return np.argmin(opposite, axis=1)


def build_mesh(
    vertices: Sequence[Sequence[float]],
    triangles: Sequence[Sequence[int]],
    boundary_markers: Optional[Iterable[Sequence[int]]] = None,
) -> Mesh:
    """Builds an initial mesh with longest-edge refinement edges.

    Parameters
    ----------
    vertices
        Vertex coordinates.
    triangles
        Counterclockwise vertex index triples (0-based).
    boundary_markers
        Optional boundary sides as vertex pairs; checked against the
        topological boundary when given.

    Raises
    ------
    error.DegenerateElementError
        Thrown for a zero-area triangle.
    error.OrientationError
        Thrown for a clockwise triangle.
    error.NonConformingMeshError
        Thrown for hanging vertices, over-shared sides or wrong markers.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    return Mesh(
        vertices,
        triangles,
        boundary_markers=boundary_markers,
    )


def _bisect(
    mesh: Mesh, marked_sides: np.ndarray
) -> Mesh:
    marked = np.array(marked_sides, dtype=bool)
    cells = np.arange(mesh.n_cells)
    ref_side = mesh.cell_sides[cells, mesh.refinement_edge]

    # closure: a triangle with any marked side has its refinement edge marked
    while True:
        touched = marked[mesh.cell_sides].any(axis=1)
        update = marked.copy()
        update[ref_side[touched]] = True
        if (update == marked).all():
            break
        marked = update

    if not marked.any():
        return Mesh(
            mesh.vertices,
            mesh.triangles,
            refinement_edge=mesh.refinement_edge,
            generation=mesh.generation,
            parents=cells,
        )

    marked_index = np.flatnonzero(marked)
    new_ids = mesh.n_vertices + np.arange(len(marked_index))
    midpoints = 0.5 * (
        mesh.vertices[mesh.sides[marked_index, 0]]
        + mesh.vertices[mesh.sides[marked_index, 1]]
    )
    midpoint_of = {
        (int(a), int(b)): int(m)
        for (a, b), m in zip(mesh.sides[marked_index], new_ids)
    }

    triangles, refinement_edge, generation, parents = [], [], [], []

    def split(a: int, b: int, c: int, gen: int, parent: int) -> None:
        # (a, b) is the refinement edge, c the newest vertex
        m = midpoint_of.get((a, b) if a < b else (b, a))
        if m is None:
            triangles.append((a, b, c))
            refinement_edge.append(2)
            generation.append(gen)
            parents.append(parent)
            return
        split(c, a, m, gen + 1, parent)
        split(b, c, m, gen + 1, parent)

    for t, (tri, j) in enumerate(zip(mesh.triangles.tolist(), mesh.refinement_edge.tolist())):
        split(tri[(j + 1) % 3], tri[(j + 2) % 3], tri[j], int(mesh.generation[t]), t)

    refined = Mesh(
        np.vstack([mesh.vertices, midpoints]),
        np.array(triangles, dtype=np.int64),
        refinement_edge=np.array(refinement_edge),
        generation=np.array(generation),
        parents=np.array(parents),
    )

    util.log_debug(
        "Refined mesh",
        triangles_before=mesh.n_cells,
        triangles_after=refined.n_cells,
        bisected_sides=len(marked_index),
    )
    return refined


def refine_nvb(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus closure.

    Every marked triangle is bisected at least once. ``parents`` of the
    returned mesh maps each triangle to the triangle of ``mesh`` it came
    from; an empty marking returns a copy with the identity parent map.
    """
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if len(marked) and (marked.min() < 0 or marked.max() >= mesh.n_cells):
        raise error.ValidationError("marked triangle index out of range")

    sides = np.zeros(mesh.n_sides, dtype=bool)
    sides[mesh.cell_sides[marked, mesh.refinement_edge[marked]]] = True
    return _bisect(mesh, sides)


def uniform_refine(mesh: Mesh) -> Mesh:
    """Bisects every side once, so every triangle gets exactly four children."""
    return _bisect(mesh, np.ones(mesh.n_sides, dtype=bool))


# -- plain-text format --
#
#   nodes <n>
#   <index> <x> <y>
#   elements <n>
#   <index> <v1> <v2> <v3>
#   boundary <n>
#   <index> <v1> <v2>
#
# Indices are 1-based; '#' starts a comment line.


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> None:
    lines = ["# hho-afem mesh", f"nodes {mesh.n_vertices}"]
    lines += [
        f"{i + 1} {x!r} {y!r}" for i, (x, y) in enumerate(mesh.vertices.tolist())
    ]
    lines.append(f"elements {mesh.n_cells}")
    lines += [
        f"{i + 1} {a + 1} {b + 1} {c + 1}"
        for i, (a, b, c) in enumerate(mesh.triangles.tolist())
    ]
    boundary = mesh.sides[mesh.is_boundary].tolist()
    lines.append(f"boundary {len(boundary)}")
    lines += [f"{i + 1} {a + 1} {b + 1}" for i, (a, b) in enumerate(boundary)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: Union[str, Path]) -> Mesh:
    """Reads the plain-text format into an initial mesh.

    Raises
    ------
    error.MeshError
        Thrown on malformed blocks, in addition to the ``build_mesh`` errors.
    """
    rows = [
        line.split()
        for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]

    blocks = {}
    position = 0
    for name, width in (("nodes", 3), ("elements", 4), ("boundary", 3)):
        if position >= len(rows) or rows[position][0] != name:
            raise error.MeshError(f"Expected block '{name}' in {path}")
        count = int(rows[position][1])
        block = rows[position + 1 : position + 1 + count]
        if len(block) != count or any(len(row) != width for row in block):
            raise error.MeshError(f"Malformed block '{name}' in {path}")
        blocks[name] = block
        position += count + 1

    vertices = [[float(x), float(y)] for _, x, y in blocks["nodes"]]
    triangles = [[int(v) - 1 for v in row[1:]] for row in blocks["elements"]]
    boundary = [[int(v) - 1 for v in row[1:]] for row in blocks["boundary"]]

    return build_mesh(vertices, triangles, boundary_markers=boundary)
