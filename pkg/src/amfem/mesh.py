"""Conforming triangulations with newest-vertex bisection refinement.

A mesh keeps its full refinement genealogy: bisected triangles are retired,
never deleted, so a refined mesh can match any of its triangles back to the
coarse ancestor it came from (this drives prolongation between nested FE
spaces).  Refinement never mutates a mesh in place; every operation builds
and returns a new mesh value, so callers can hold on to the whole mesh
hierarchy of an adaptive run.

Text format for interchange::

    amfemmesh 1
    <nv> <nt>
    x y            (nv lines, one vertex per line)
    v0 v1 v2 r     (nt lines; r = refinement-edge local index, or '-')

'#' starts a comment.  The writer emits the live triangles only, so the
genealogy is not preserved across a save/load round trip.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh", "Vertex", "Triangle", "Edge",
    "MeshFormatError", "NotNestedError",
    "load_mesh", "save_mesh", "initial_labeling",
    "bisect_triangle", "refine_edges", "uniform_refine",
    "mesh_stats", "ancestor_map",
]


class MeshFormatError(ValueError):
    """Unparseable, non-conforming or otherwise invalid mesh input."""


class NotNestedError(ValueError):
    """Two meshes do not belong to the same refinement hierarchy."""


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Triangle:
    """One triangle of the genealogy; ``alive`` marks membership in the mesh."""
    id: int
    verts: tuple
    refinement_edge: int
    generation: int
    parent: int
    alive: bool


@dataclass(frozen=True)
class Edge:
    """Edge of the live mesh.  ``verts`` is (a, b) with a < b; the unit
    tangent points a -> b and ``incident`` lists the left triangle first
    when it exists."""
    id: int
    verts: tuple
    tangent: tuple
    boundary: bool
    incident: tuple
    length: float


class Mesh:
    """Immutable conforming triangulation plus its refinement genealogy.

    Array attributes (all read-only by convention):

    points      (nv, 2) vertex coordinates
    tri_verts   (nt_all, 3) vertex ids, counterclockwise
    tri_refedge (nt_all,) local index of the refinement edge
    tri_gen, tri_parent, tri_children   genealogy bookkeeping
    alive       (nt_all,) live flags;  live = ids of live triangles
    live_pos    (nt_all,) position of a live triangle in ``live``, else -1

    Edge tables are rebuilt for the live triangles on construction; edge ids
    are assigned in lexicographic (min vid, max vid) order:

    edge_verts  (ne, 2) with a < b
    edge_tri    (ne, 2) [left, right] triangle ids, -1 when absent
    edge_len    (ne,)
    edge_boundary  (ne,) bool
    tri_edge    (nl, 3) edge id opposite each local vertex, live order
    tri_sign    (nl, 3) +1 where the triangle is left of the edge tangent
    tri_area, tri_h   (nl,) areas and diameters, live order
    """

    def __init__(self, points, tri_verts, tri_refedge, tri_gen, tri_parent,
                 tri_children, alive, root=None, domain_area=None):
        self.points = np.asarray(points, dtype=float)
        self.tri_verts = np.asarray(tri_verts, dtype=np.int64).reshape(-1, 3)
        self.tri_refedge = np.asarray(tri_refedge, dtype=np.int64)
        self.tri_gen = np.asarray(tri_gen, dtype=np.int64)
        self.tri_parent = np.asarray(tri_parent, dtype=np.int64)
        self.tri_children = np.asarray(tri_children, dtype=np.int64).reshape(-1, 2)
        self.alive = np.asarray(alive, dtype=bool)
        self._root = root if root is not None else object()
        self._caches = {}
        self._build_tables()
        area = float(self.tri_area.sum())
        if domain_area is None:
            domain_area = area
        elif abs(area - domain_area) > 1e-12 * max(1.0, abs(domain_area)):
            raise MeshFormatError(
                "live triangles do not partition the domain: area %r vs %r"
                % (area, domain_area))
        self.domain_area = domain_area

    # -- derived tables -------------------------------------------------

    def _build_tables(self):
        live = np.flatnonzero(self.alive)
        if live.size == 0:
            raise MeshFormatError("mesh has no live triangles")
        self.live = live
        self.live_pos = np.full(len(self.tri_verts), -1, dtype=np.int64)
        self.live_pos[live] = np.arange(live.size)

        tv = self.tri_verts[live]
        p = self.points[tv]                      # (nl, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(area2 <= 0):
            bad = live[int(np.argmin(area2))]
            raise MeshFormatError("triangle %d has non-positive area" % bad)
        self.tri_area = 0.5 * area2

        # edge i sits opposite local vertex i and is traversed
        # (v[i+1], v[i+2]) by the counterclockwise boundary walk
        ea = tv[:, [1, 2, 0]].ravel()
        eb = tv[:, [2, 0, 1]].ravel()
        lo = np.minimum(ea, eb)
        hi = np.maximum(ea, eb)
        pairs = np.stack([lo, hi], axis=1)
        uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.edge_verts = uniq
        self.tri_edge = inverse.reshape(-1, 3)
        sign = np.where(ea < eb, 1, -1).astype(np.int8)
        self.tri_sign = sign.reshape(-1, 3)

        ne = len(uniq)
        edge_tri = np.full((ne, 2), -1, dtype=np.int64)
        owner = np.repeat(live, 3)
        for side, mask in ((0, sign > 0), (1, sign < 0)):
            eids = inverse[mask]
            if len(np.unique(eids)) != len(eids):
                raise MeshFormatError(
                    "non-conforming mesh: an edge is traversed twice in the "
                    "same direction (duplicate or misoriented triangle)")
            edge_tri[eids, side] = owner[mask]
        self.edge_tri = edge_tri
        self.edge_boundary = (edge_tri < 0).any(axis=1)

        vec = self.points[uniq[:, 1]] - self.points[uniq[:, 0]]
        self.edge_len = np.hypot(vec[:, 0], vec[:, 1])

        lens = self.edge_len[self.tri_edge]
        self.tri_h = lens.max(axis=1)

        used = np.unique(tv)
        if used.size != len(self.points) or used[0] != 0:
            raise MeshFormatError("mesh has vertices not used by any live triangle")
        if ne != len(self.points) + live.size - 1:
            raise MeshFormatError(
                "non-conforming or multiply connected mesh: "
                "ne=%d, nv=%d, nt=%d violate ne = nv + nt - 1"
                % (ne, len(self.points), live.size))

    # -- public counters and object views --------------------------------

    @property
    def nv(self):
        return len(self.points)

    @property
    def nt(self):
        return int(self.live.size)

    @property
    def ne(self):
        return len(self.edge_verts)

    @property
    def vertices(self):
        if "vertices" not in self._caches:
            self._caches["vertices"] = [
                Vertex(i, float(x), float(y))
                for i, (x, y) in enumerate(self.points)]
        return self._caches["vertices"]

    @property
    def triangles(self):
        if "triangles" not in self._caches:
            self._caches["triangles"] = [
                Triangle(i, tuple(int(v) for v in self.tri_verts[i]),
                         int(self.tri_refedge[i]), int(self.tri_gen[i]),
                         int(self.tri_parent[i]), bool(self.alive[i]))
                for i in range(len(self.tri_verts))]
        return self._caches["triangles"]

    def live_triangles(self):
        tris = self.triangles
        return [tris[i] for i in self.live]

    @property
    def edges(self):
        if "edges" not in self._caches:
            out = []
            for i in range(self.ne):
                a, b = (int(v) for v in self.edge_verts[i])
                vec = self.points[b] - self.points[a]
                length = float(self.edge_len[i])
                tangent = (float(vec[0] / length), float(vec[1] / length))
                inc = tuple(int(t) for t in self.edge_tri[i] if t >= 0)
                out.append(Edge(i, (a, b), tangent,
                                bool(self.edge_boundary[i]), inc, length))
            self._caches["edges"] = out
        return self._caches["edges"]

    def refedge_verts(self, t):
        """Vertex pair (a, b), a < b, of triangle t's refinement edge."""
        v = self.tri_verts[t]
        r = self.tri_refedge[t]
        a, b = int(v[(r + 1) % 3]), int(v[(r + 2) % 3])
        return (a, b) if a < b else (b, a)


# -- construction and I/O -------------------------------------------------

def _label_longest_edge(points, tv):
    """Refinement-edge local index per triangle: the longest edge, ties
    broken by the smallest opposite vertex id.  Squared lengths keep the
    tie comparison exact for symmetric coordinates."""
    p = points[tv]
    opp = p[:, [1, 2, 0]] - p[:, [2, 0, 1]]
    l2 = (opp ** 2).sum(axis=2)
    best = l2.max(axis=1, keepdims=True)
    cand = l2 == best
    key = np.where(cand, tv, np.iinfo(np.int64).max)
    return np.argmin(key, axis=1).astype(np.int64)


def _new_gen0(points, tv, refedge, root=None):
    nt = len(tv)
    return Mesh(points, tv, refedge,
                np.zeros(nt, dtype=np.int64),
                np.full(nt, -1, dtype=np.int64),
                np.full((nt, 2), -1, dtype=np.int64),
                np.ones(nt, dtype=bool), root=root)


def load_mesh(text):
    """Parse the mesh text format; raises MeshFormatError with line numbers."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line))
    if not rows:
        raise MeshFormatError("line 1: empty mesh file")

    def fail(lineno, msg):
        raise MeshFormatError("line %d: %s" % (lineno, msg))

    lineno, header = rows[0]
    if header.split() != ["amfemmesh", "1"]:
        fail(lineno, "expected header 'amfemmesh 1', got %r" % header)
    if len(rows) < 2:
        fail(lineno, "missing size line")
    lineno, size = rows[1]
    parts = size.split()
    if len(parts) != 2:
        fail(lineno, "expected 'nv nt', got %r" % size)
    try:
        nv, nt = int(parts[0]), int(parts[1])
    except ValueError:
        fail(lineno, "expected integer sizes, got %r" % size)
    if nv < 3 or nt < 1:
        fail(lineno, "need at least 3 vertices and 1 triangle")
    if len(rows) != 2 + nv + nt:
        fail(rows[-1][0], "expected %d vertex and %d triangle lines, found %d"
             % (nv, nt, len(rows) - 2))

    points = np.empty((nv, 2), dtype=float)
    for i in range(nv):
        lineno, line = rows[2 + i]
        parts = line.split()
        if len(parts) != 2:
            fail(lineno, "expected 'x y', got %r" % line)
        try:
            points[i] = (float(parts[0]), float(parts[1]))
        except ValueError:
            fail(lineno, "bad coordinate in %r" % line)

    tv = np.empty((nt, 3), dtype=np.int64)
    refedge = np.full(nt, -1, dtype=np.int64)
    for i in range(nt):
        lineno, line = rows[2 + nv + i]
        parts = line.split()
        if len(parts) != 4:
            fail(lineno, "expected 'v0 v1 v2 r', got %r" % line)
        try:
            vs = [int(p) for p in parts[:3]]
        except ValueError:
            fail(lineno, "bad vertex id in %r" % line)
        if any(v < 0 or v >= nv for v in vs):
            fail(lineno, "vertex id out of range in %r" % line)
        if len(set(vs)) != 3:
            fail(lineno, "repeated vertex in triangle %r" % line)
        if parts[3] != "-":
            try:
                r = int(parts[3])
            except ValueError:
                fail(lineno, "bad refinement edge %r" % parts[3])
            if r not in (0, 1, 2):
                fail(lineno, "refinement edge must be 0, 1 or 2, got %d" % r)
            refedge[i] = r
        tv[i] = vs

    seen = {}
    for i in range(nt):
        key = tuple(sorted(tv[i]))
        if key in seen:
            raise MeshFormatError(
                "non-conforming mesh: triangles %d and %d share all three "
                "vertices" % (seen[key], i))
        seen[key] = i

    # normalize to counterclockwise order, remapping the given label: a
    # swap of locals 1 and 2 swaps the edges opposite them
    p = points[tv]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    if np.any(cross == 0):
        raise MeshFormatError("zero-area triangle %d"
                              % int(np.flatnonzero(cross == 0)[0]))
    flip = cross < 0
    tv[flip] = tv[flip][:, [0, 2, 1]]
    swap = (refedge > 0) & flip
    refedge[swap] = 3 - refedge[swap]

    missing = refedge < 0
    if np.any(missing):
        labels = _label_longest_edge(points, tv)
        refedge[missing] = labels[missing]
    return _new_gen0(points, tv, refedge)


def save_mesh(mesh):
    """Serialize the live triangles in the mesh text format."""
    out = ["amfemmesh 1", "%d %d" % (mesh.nv, mesh.nt)]
    for x, y in mesh.points:
        out.append("%s %s" % (repr(float(x)), repr(float(y))))
    for t in mesh.live:
        v = mesh.tri_verts[t]
        out.append("%d %d %d %d" % (v[0], v[1], v[2], mesh.tri_refedge[t]))
    return "\n".join(out) + "\n"


def initial_labeling(mesh):
    """Relabel a generation-0 mesh with longest-edge refinement edges."""
    if np.any(mesh.tri_gen != 0):
        raise ValueError("initial labeling applies to generation-0 meshes only")
    refedge = _label_longest_edge(mesh.points, mesh.tri_verts)
    return _new_gen0(mesh.points.copy(), mesh.tri_verts.copy(), refedge,
                     root=mesh._root)


# -- refinement -----------------------------------------------------------

class _Builder:
    """Mutable scratch copy of a mesh used inside refinement operations."""

    __slots__ = ("points", "tv", "refedge", "gen", "parent", "children",
                 "alive", "e2t", "bisected", "nlive")

    def __init__(self, mesh):
        self.points = mesh.points.tolist()
        self.tv = mesh.tri_verts.tolist()
        self.refedge = mesh.tri_refedge.tolist()
        self.gen = mesh.tri_gen.tolist()
        self.parent = mesh.tri_parent.tolist()
        self.children = mesh.tri_children.tolist()
        self.alive = mesh.alive.tolist()
        self.bisected = []
        self.nlive = int(mesh.live.size)
        e2t = {}
        for t in mesh.live:
            t = int(t)
            for pair in self._tri_pairs(t):
                e2t.setdefault(pair, []).append(t)
        self.e2t = e2t

    def _tri_pairs(self, t):
        v = self.tv[t]
        for i, j in ((0, 1), (1, 2), (2, 0)):
            a, b = v[i], v[j]
            yield (a, b) if a < b else (b, a)

    def refedge_pair(self, t):
        v = self.tv[t]
        r = self.refedge[t]
        a, b = v[(r + 1) % 3], v[(r + 2) % 3]
        return (a, b) if a < b else (b, a)

    def _neighbor(self, t, pair):
        for other in self.e2t.get(pair, ()):
            if other != t:
                return other
        return None

    def _split(self, t, m):
        """Bisect t across its refinement edge at existing vertex m."""
        for pair in self._tri_pairs(t):
            lst = self.e2t[pair]
            lst.remove(t)
            if not lst:
                del self.e2t[pair]
        v = self.tv[t]
        r = self.refedge[t]
        va, vb, vc = v[r], v[(r + 1) % 3], v[(r + 2) % 3]
        self.alive[t] = False
        gen = self.gen[t] + 1
        kids = []
        # children keep counterclockwise order; the newest vertex m is the
        # local vertex opposite the child's refinement edge, which is the
        # child's single full edge of the parent
        for verts, redge in (((va, vb, m), 2), ((va, m, vc), 1)):
            c = len(self.tv)
            self.tv.append(list(verts))
            self.refedge.append(redge)
            self.gen.append(gen)
            self.parent.append(t)
            self.children.append([-1, -1])
            self.alive.append(True)
            for i, j in ((0, 1), (1, 2), (2, 0)):
                a, b = verts[i], verts[j]
                pair = (a, b) if a < b else (b, a)
                self.e2t.setdefault(pair, []).append(c)
            kids.append(c)
        self.children[t] = kids
        self.bisected.append(t)
        self.nlive += 1
        return kids

    def bisect(self, t0):
        """Conforming bisection: the neighbor across the refinement edge is
        made compatible first (bisecting it recursively if needed), then the
        pair splits simultaneously through the shared midpoint."""
        stack = [t0]
        while stack:
            t = stack[-1]
            if not self.alive[t]:
                stack.pop()
                continue
            pair = self.refedge_pair(t)
            nb = self._neighbor(t, pair)
            if nb is not None and self.refedge_pair(nb) != pair:
                if len(stack) > self.nlive + 1:
                    raise AssertionError(
                        "newest-vertex bisection recursion exceeded the live "
                        "triangle count; incompatible refinement-edge labels")
                stack.append(nb)
                continue
            a, b = pair
            m = len(self.points)
            pa, pb = self.points[a], self.points[b]
            self.points.append([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])])
            self._split(t, m)
            if nb is not None:
                self._split(nb, m)
            stack.pop()

    def finish(self, base):
        return Mesh(self.points, self.tv, self.refedge, self.gen, self.parent,
                    self.children, self.alive, root=base._root,
                    domain_area=base.domain_area)


def bisect_triangle(mesh, t):
    """Bisect live triangle t, restoring conformity; returns the new mesh."""
    t = int(t)
    if t < 0 or t >= len(mesh.tri_verts):
        raise ValueError("no triangle with id %d" % t)
    if not mesh.alive[t]:
        raise ValueError("triangle %d is retired" % t)
    b = _Builder(mesh)
    b.bisect(t)
    return b.finish(mesh)


def refine_edges(mesh, marked):
    """Bisect the mesh until every marked edge has been split.

    ``marked`` is an iterable of live edge ids (a MarkSet works).  Both
    triangles of a marked edge's patch get bisected along the way, plus any
    completion bisections needed for conformity.  Returns ``(mesh, bisected)``
    where ``bisected`` lists the ids of all triangles actually bisected.
    """
    edge_ids = [int(e) for e in getattr(marked, "edges", marked)]
    if not edge_ids:
        return mesh, np.empty(0, dtype=np.int64)
    for e in edge_ids:
        if e < 0 or e >= mesh.ne:
            raise ValueError("no edge with id %d" % e)
    b = _Builder(mesh)
    for e in edge_ids:
        a, v = (int(x) for x in mesh.edge_verts[e])
        pair = (a, v)
        while pair in b.e2t:
            tris = b.e2t[pair]
            t = min((x for x in tris if b.refedge_pair(x) == pair),
                    default=min(tris))
            b.bisect(t)
    return b.finish(mesh), np.array(sorted(b.bisected), dtype=np.int64)


def uniform_refine(mesh, rounds=1):
    """Quarter every live triangle ``rounds`` times (two bisection sweeps per
    round, so each round multiplies the triangle count by exactly 4 and
    splits every edge)."""
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    m = mesh
    for _ in range(rounds):
        b = _Builder(m)
        first = [int(t) for t in m.live]
        for t in first:
            if b.alive[t]:
                b.bisect(t)
        for t in first:
            for c in b.children[t]:
                if c >= 0 and b.alive[c]:
                    b.bisect(c)
        m2 = b.finish(m)
        if m2.nt != 4 * len(first):
            raise AssertionError("uniform refinement did not quarter the mesh")
        m = m2
    return m


def ancestor_map(fine, coarse):
    """For each live triangle of ``fine`` (in live order), the id of the
    live ``coarse`` triangle containing it.  Raises NotNestedError when the
    meshes are not from the same hierarchy with coarse preceding fine."""
    if fine._root is not coarse._root:
        raise NotNestedError("meshes come from different initial meshes")
    n_coarse = len(coarse.tri_verts)
    if len(fine.tri_verts) < n_coarse:
        raise NotNestedError("reference mesh is finer than the target")
    # Same root is not enough: two meshes refined independently share id
    # space but disagree about what the ids mean.  A true ancestor's table
    # is a prefix of the descendant's.
    if not np.array_equal(fine.tri_verts[:n_coarse], coarse.tri_verts):
        raise NotNestedError("meshes were refined along different paths")
    out = np.empty(fine.live.size, dtype=np.int64)
    memo = {}
    parent = fine.tri_parent
    alive = coarse.alive
    for pos, t in enumerate(fine.live):
        t = int(t)
        chain = []
        cur = t
        while cur not in memo:
            if cur < n_coarse and alive[cur]:
                memo[cur] = cur
                break
            chain.append(cur)
            cur = int(parent[cur])
            if cur < 0:
                raise NotNestedError(
                    "triangle %d has no ancestor in the coarse mesh" % t)
        anc = memo[cur]
        for c in chain:
            memo[c] = anc
        out[pos] = anc
    return out


def mesh_stats(mesh):
    """Summary dict: counts, minimum angle (degrees), max diameter,
    boundary edge count."""
    tv = mesh.tri_verts[mesh.live]
    p = mesh.points[tv]
    angles = []
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        cosang = (u * w).sum(1) / (np.hypot(u[:, 0], u[:, 1])
                                   * np.hypot(w[:, 0], w[:, 1]))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return {
        "nv": mesh.nv,
        "nt": mesh.nt,
        "ne": mesh.ne,
        "min_angle": float(np.min(angles)),
        "max_h": float(mesh.tri_h.max()),
        "n_boundary_edges": int(mesh.edge_boundary.sum()),
    }
