"""Tetrahedral meshes: structured cube generation, quality metrics, JSON I/O.

Meshes are immutable after construction.  Element orientation is normalized
to positive signed volume when a mesh is built, so downstream assembly can
use signed determinants directly.
"""

import itertools
import json
from dataclasses import dataclass

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate or non-conforming elements)."""


# The six tetrahedra of the Kuhn subdivision of the unit cube, as vertex
# paths 0 -> e_{s1} -> e_{s1}+e_{s2} -> (1,1,1) for each permutation s.
_KUHN_PATHS = []
for _perm in itertools.permutations(range(3)):
    _path = [np.zeros(3, dtype=np.int64)]
    for _axis in _perm:
        _step = _path[-1].copy()
        _step[_axis] = 1
        _path.append(_step)
    _KUHN_PATHS.append(np.array(_path))


class Mesh:
    """Conforming tetrahedral mesh given by node coordinates and connectivity."""

    def __init__(self, nodes, tets):
        nodes = np.ascontiguousarray(np.asarray(nodes, dtype=np.float64))
        tets = np.ascontiguousarray(np.asarray(tets, dtype=np.int64))
        if nodes.ndim != 2 or nodes.shape[1] != 3:
            raise MeshError(f"nodes must be (N, 3), got {nodes.shape}")
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshError(f"tets must be (M, 4), got {tets.shape}")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("non-finite node coordinates")

        n = len(nodes)
        if tets.size and (tets.min() < 0 or tets.max() >= n):
            bad = int(np.nonzero((tets < 0).any(axis=1) | (tets >= n).any(axis=1))[0][0])
            raise MeshError(f"element {bad} references a node index outside [0, {n})")
        for e, t in enumerate(tets):
            if len(set(t.tolist())) != 4:
                raise MeshError(f"element {e} has repeated node indices {t.tolist()}")

        # Normalize orientation: swap two vertices where the signed volume is
        # negative; reject degenerate elements.
        vol = _signed_volumes(nodes, tets)
        scale = np.abs(nodes).max() if len(nodes) else 1.0
        degenerate = np.abs(vol) <= 1e-14 * max(scale, 1.0) ** 3
        if degenerate.any():
            bad = int(np.nonzero(degenerate)[0][0])
            raise MeshError(f"element {bad} is degenerate (volume {vol[bad]:.3e})")
        neg = vol < 0
        if neg.any():
            tets = tets.copy()
            tets[neg, 2], tets[neg, 3] = tets[neg, 3].copy(), tets[neg, 2].copy()

        _check_conforming(tets)

        nodes.setflags(write=False)
        tets.setflags(write=False)
        self.nodes = nodes
        self.tets = tets

    @property
    def N(self):
        return len(self.nodes)

    @property
    def elem_count(self):
        return len(self.tets)

    def element_volumes(self):
        """Volumes |K| per element (positive by construction)."""
        return _signed_volumes(self.nodes, self.tets)

    def element_geometry(self):
        """Per-element volumes and constant hat-function gradients.

        Returns (vol, grad) with vol of shape (M,) and grad of shape
        (M, 4, 3): grad[e, a] is the gradient of the barycentric coordinate
        of local vertex a on element e.
        """
        v = self.nodes[self.tets]
        edges = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=-1)
        vol = np.linalg.det(edges) / 6.0
        inv = np.linalg.inv(edges)
        grad = np.empty((self.elem_count, 4, 3))
        grad[:, 1:, :] = inv
        grad[:, 0, :] = -inv.sum(axis=1)
        return vol, grad

    def __repr__(self):
        return f"Mesh(N={self.N}, elems={self.elem_count})"


def _signed_volumes(nodes, tets):
    v = nodes[tets]
    edges = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=-1)
    return np.linalg.det(edges) / 6.0


def _check_conforming(tets):
    # A face shared by two tets must appear as the same node set; any face
    # appearing more than twice breaks conformity.
    faces = {}
    local = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    for e, t in enumerate(tets):
        for a, b, c in local:
            key = tuple(sorted((t[a], t[b], t[c])))
            faces[key] = faces.get(key, 0) + 1
            if faces[key] > 2:
                raise MeshError(f"face {key} shared by more than two elements (element {e})")


@dataclass(frozen=True)
class QualityReport:
    """Mesh-size metrics: h = min |K|^(1/3), c_mesh = max diam(K)/h."""

    h: float
    max_diam: float
    c_mesh: float
    min_vol: float
    max_vol: float


def generate_structured_cube(bounds, n):
    """Structured tetrahedral mesh of an axis-aligned box.

    Each of the n1*n2*n3 sub-boxes is split into the six Kuhn tetrahedra
    sharing the main diagonal, which yields a conforming mesh with uniform
    element volume per sub-box.  Nodes are ordered lexicographically by
    (z, y, x) grid index.
    """
    bounds = np.asarray(bounds, dtype=np.float64)
    if bounds.shape != (3, 2):
        raise MeshError(f"bounds must be (3, 2) [per-axis (lo, hi)], got {bounds.shape}")
    n = np.asarray(n, dtype=np.int64)
    if n.shape != (3,) or (n < 1).any():
        raise MeshError(f"subdivision counts must be three integers >= 1, got {n}")
    if (bounds[:, 1] <= bounds[:, 0]).any():
        raise MeshError("box must have positive extent in every axis")

    nx, ny, nz = (int(v) for v in n)
    axes = [np.linspace(bounds[i, 0], bounds[i, 1], n[i] + 1) for i in range(3)]
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def nid(ix, iy, iz):
        return (iz * (ny + 1) + iy) * (nx + 1) + ix

    tets = np.empty((6 * nx * ny * nz, 4), dtype=np.int64)
    e = 0
    for iz in range(nz):
        for iy in range(ny):
            for ix in range(nx):
                for path in _KUHN_PATHS:
                    tets[e] = [nid(ix + p[0], iy + p[1], iz + p[2]) for p in path]
                    e += 1
    return Mesh(nodes, tets)


def mesh_quality(mesh):
    """Quality metrics computed exactly from coordinates."""
    vol = mesh.element_volumes()
    v = mesh.nodes[mesh.tets]
    pairs = list(itertools.combinations(range(4), 2))
    d2 = np.stack([((v[:, a] - v[:, b]) ** 2).sum(axis=1) for a, b in pairs])
    diam = np.sqrt(d2.max(axis=0))
    h = float(vol.min() ** (1.0 / 3.0))
    return QualityReport(
        h=h,
        max_diam=float(diam.max()),
        c_mesh=float((diam / h).max()),
        min_vol=float(vol.min()),
        max_vol=float(vol.max()),
    )


def save_mesh(mesh):
    """Canonical JSON serialization (UTF-8 bytes)."""
    doc = {
        "nodes": [[float(c) for c in p] for p in mesh.nodes],
        "tets": [[int(i) for i in t] for t in mesh.tets],
    }
    return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")


def load_mesh(source):
    """Load a mesh from JSON bytes/str/file-object; validates all invariants."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise MeshError(f"mesh JSON parse error: {exc}") from exc
    if not isinstance(doc, dict) or "nodes" not in doc or "tets" not in doc:
        raise MeshError('mesh JSON must be an object with "nodes" and "tets"')
    return Mesh(doc["nodes"], doc["tets"])
