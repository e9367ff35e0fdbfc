"""Multicast trees, routing matrices and the pairwise product matrix."""

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np


class TopologyError(ValueError):
    """Raised for edge lists that do not describe a multicast tree."""


@dataclass(frozen=True)
class TreeTopology:
    """A rooted multicast tree.

    Parameters
    ----------
    root : hashable
        Id of the probe source.
    edges : sequence of (parent, child)
        Child order among siblings follows the order of appearance here.
    leaves : sequence
        Receiver ids. Their order fixes the row order of the routing matrix
        and the column order of measurement files.
    """

    root: object
    edges: tuple
    leaves: tuple
    _children: dict = field(init=False, repr=False, compare=False)
    _parent: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        edges = tuple((p, c) for p, c in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "leaves", tuple(self.leaves))

        children, parent = {}, {}
        for p, c in edges:
            if c == self.root:
                raise TopologyError(f"root {self.root!r} cannot be a child")
            if c in parent:
                raise TopologyError(f"node {c!r} has more than one parent")
            parent[c] = p
            children.setdefault(p, []).append(c)
        if not edges:
            raise TopologyError("tree has no edges")
        if self.root not in children:
            raise TopologyError(f"root {self.root!r} has no children")

        seen = {self.root}
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            for c in children.get(node, ()):
                if c in seen:
                    raise TopologyError("edge list contains a cycle")
                seen.add(c)
                queue.append(c)
        unreachable = set(parent) - seen
        if unreachable:
            raise TopologyError(f"nodes not reachable from root: {sorted(map(str, unreachable))}")

        for node, kids in children.items():
            if node != self.root and len(kids) < 2:
                raise TopologyError(f"internal node {node!r} has a single child")

        actual = {c for c in parent if c not in children}
        if set(self.leaves) != actual or len(self.leaves) != len(actual):
            raise TopologyError(
                f"leaf list {list(self.leaves)!r} does not match the childless nodes {sorted(map(str, actual))}"
            )
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})
        object.__setattr__(self, "_parent", parent)

    @property
    def nodes(self):
        return (self.root,) + tuple(self.edge_order)

    @property
    def edge_order(self):
        """Child node of each link, breadth-first and left to right."""
        order = []
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            for c in self._children.get(node, ()):
                order.append(c)
                queue.append(c)
        return tuple(order)

    def path(self, leaf):
        """Links (named by their child node) from the root down to ``leaf``."""
        out = []
        node = leaf
        while node != self.root:
            out.append(node)
            node = self._parent[node]
        return tuple(reversed(out))

    def depth(self, leaf):
        return len(self.path(leaf))

    # ------------------------------------------------------------ builders

    @classmethod
    def from_dict(cls, data):
        return cls(root=data["root"], edges=tuple(tuple(e) for e in data["edges"]), leaves=tuple(data["leaves"]))

    def to_dict(self):
        return {"root": self.root, "edges": [list(e) for e in self.edges], "leaves": list(self.leaves)}

    @classmethod
    def binary(cls, n_leaves):
        """Symmetric binary tree whose root has a single child link."""
        levels = int(round(np.log2(n_leaves)))
        if 2**levels != n_leaves:
            raise TopologyError("n_leaves must be a power of two")
        edges = [(0, 1)]
        frontier = [1]
        nxt = 2
        for _ in range(levels):
            new = []
            for node in frontier:
                for _ in range(2):
                    edges.append((node, nxt))
                    new.append(nxt)
                    nxt += 1
            frontier = new
        return cls(root=0, edges=tuple(edges), leaves=tuple(frontier))

    @classmethod
    def two_leaf(cls):
        return cls(root=0, edges=((0, 1), (1, 2), (1, 3)), leaves=(2, 3))

    @classmethod
    def four_leaf(cls):
        return cls.binary(4)

    @classmethod
    def random(cls, rng, max_links=31):
        """Random multicast tree with at most ``max_links`` links.

        The root gets one child; every internal node then splits into two or
        more children until the link budget runs out.
        """
        edges = [(0, 1)]
        open_nodes = [1]
        nxt = 2
        budget = max_links - 1
        while budget >= 2 and open_nodes:
            node = open_nodes.pop(int(rng.integers(len(open_nodes))))
            if rng.random() < 0.3 and len(edges) > 1:
                continue
            k = int(rng.integers(2, min(4, budget) + 1))
            for _ in range(k):
                edges.append((node, nxt))
                open_nodes.append(nxt)
                nxt += 1
            budget -= k
        children = {p for p, _ in edges}
        leaves = tuple(c for _, c in edges if c not in children)
        return cls(root=0, edges=tuple(edges), leaves=leaves)


@dataclass(frozen=True)
class RoutingMatrix:
    """Binary leaf-by-link incidence matrix: ``Y = entries @ X``."""

    entries: np.ndarray
    edge_order: tuple

    def __post_init__(self):
        a = np.array(self.entries, dtype=np.int64)
        if a.ndim != 2:
            raise TopologyError("routing matrix must be 2-d")
        if not np.isin(a, (0, 1)).all():
            raise TopologyError("routing matrix entries must be 0 or 1")
        if (a.sum(axis=0) == 0).any():
            raise TopologyError("every link must lie on at least one path")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def I(self):
        return self.entries.shape[0]

    @property
    def J(self):
        return self.entries.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def as_matrix(A):
    return A.entries if isinstance(A, RoutingMatrix) else np.asarray(A)


def routing_matrix(topology):
    order = topology.edge_order
    col = {c: j for j, c in enumerate(order)}
    a = np.zeros((len(topology.leaves), len(order)), dtype=np.int64)
    for i, leaf in enumerate(topology.leaves):
        for c in topology.path(leaf):
            a[i, col[c]] = 1
    return RoutingMatrix(a, order)


def product_matrix(A):
    """Rows of ``A`` followed by ``A_i * A_k`` for every ``i < k``."""
    a = as_matrix(A).astype(np.int64)
    rows = [a[i] * a[k] for i, k in combinations(range(a.shape[0]), 2)]
    if not rows:
        return a.copy()
    return np.vstack([a, np.array(rows)])


def pair_index(I):
    """(i, k) labels for the rows of ``product_matrix``; diagonal rows first."""
    return [(i, i) for i in range(I)] + list(combinations(range(I), 2))


def column_rank(B, rtol=1e-9):
    b = np.asarray(B, dtype=float)
    if b.size == 0:
        return 0
    s = np.linalg.svd(b, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))
