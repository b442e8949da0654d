"""Directed multicast overlays over the replica set.

Presets: full mesh (the leaderless engine's required topology), chain and
star (provided for completeness; no engine consumes them here).
"""

from dataclasses import dataclass


class OverlayError(ValueError):
    pass


@dataclass(frozen=True)
class Overlay:
    nodes: tuple
    edges: frozenset  # of (src, dst) pairs

    def __post_init__(self):
        for src, dst in self.edges:
            if src == dst:
                raise OverlayError(f"self-edge on node {src}")
            if src not in self.nodes or dst not in self.nodes:
                raise OverlayError(f"edge ({src},{dst}) references unknown node")

    def multicast_targets(self, origin):
        """Successors of origin in ascending id order (deterministic fan-out)."""
        if origin not in self.nodes:
            raise OverlayError(f"unknown origin {origin}")
        return sorted(dst for src, dst in self.edges if src == origin)

    def validate(self):
        """Require every node to reach every other node along directed edges."""
        succ = {n: self.multicast_targets(n) for n in self.nodes}
        for start in self.nodes:
            seen = {start}
            frontier = [start]
            while frontier:
                nxt = []
                for n in frontier:
                    for m in succ[n]:
                        if m not in seen:
                            seen.add(m)
                            nxt.append(m)
                frontier = nxt
            if len(seen) != len(self.nodes):
                missing = sorted(set(self.nodes) - seen)
                raise OverlayError(f"node {start} cannot reach {missing}")
        return self

    def is_full_mesh(self):
        n = len(self.nodes)
        return len(self.edges) == n * (n - 1)


def full_mesh(n):
    if n < 1:
        raise OverlayError("replica count must be >= 1")
    nodes = tuple(range(n))
    edges = frozenset((a, b) for a in nodes for b in nodes if a != b)
    return Overlay(nodes, edges)


def chain(n):
    if n < 1:
        raise OverlayError("replica count must be >= 1")
    nodes = tuple(range(n))
    edges = frozenset((i, i + 1) for i in range(n - 1))
    return Overlay(nodes, edges)


def star(center, n):
    if n < 1:
        raise OverlayError("replica count must be >= 1")
    nodes = tuple(range(n))
    if center not in nodes:
        raise OverlayError(f"star center {center} not in 0..{n - 1}")
    edges = frozenset(
        pair for x in nodes if x != center for pair in ((center, x), (x, center))
    )
    return Overlay(nodes, edges)


def build(kind, n, center=0):
    if kind == "mesh":
        return full_mesh(n)
    if kind == "chain":
        return chain(n)
    if kind == "star":
        return star(center, n)
    raise OverlayError(f"unknown overlay preset {kind!r}")
