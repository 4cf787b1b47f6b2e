"""R-tree over axis-aligned boxes (x1, y1, x2, y2).

Sort-Tile-Recursive bulk loading, quadratic-split insertion, and deletion
that drops emptied nodes and tightens bounding boxes along the path.
"""

from __future__ import annotations

import math

DEFAULT_FANOUT = 16


def _union(a, b):
    return (a[0] if a[0] < b[0] else b[0], a[1] if a[1] < b[1] else b[1],
            a[2] if a[2] > b[2] else b[2], a[3] if a[3] > b[3] else b[3])


def _area(b):
    return (b[2] - b[0]) * (b[3] - b[1])


def _enlargement(b, add):
    return _area(_union(b, add)) - _area(b)


def _intersects(a, b):
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


def _contains(outer, inner):
    return outer[0] <= inner[0] and outer[1] <= inner[1] and outer[2] >= inner[2] and outer[3] >= inner[3]


def _cover(entries):
    x1 = min(e[0][0] for e in entries)
    y1 = min(e[0][1] for e in entries)
    x2 = max(e[0][2] for e in entries)
    y2 = max(e[0][3] for e in entries)
    return (x1, y1, x2, y2)


class _Node:
    __slots__ = ("leaf", "entries", "mbr")

    def __init__(self, leaf, entries):
        self.leaf = leaf
        self.entries = entries  # list of [mbr, child-node or item]
        self.mbr = _cover(entries) if entries else None

    def refresh(self):
        self.mbr = _cover(self.entries) if self.entries else None


class RTree:
    def __init__(self, fanout=DEFAULT_FANOUT):
        if fanout < 4:
            raise ValueError("fan-out must be at least 4")
        self.fanout = fanout
        self.min_fill = max(2, int(fanout * 0.4))
        self.root = _Node(True, [])
        self._size = 0

    def __len__(self):
        return self._size

    # -- bulk load ------------------------------------------------------------------
    @classmethod
    def bulk_load(cls, items, fanout=DEFAULT_FANOUT):
        """Build a packed tree from (box, item) pairs with Sort-Tile-Recursive."""
        tree = cls(fanout)
        entries = [[tuple(b), it] for b, it in items]
        tree._size = len(entries)
        if not entries:
            return tree
        level = tree._pack(entries, leaf=True)
        while len(level) > 1:
            level = tree._pack([[n.mbr, n] for n in level], leaf=False)
        tree.root = level[0]
        return tree

    def _pack(self, entries, leaf):
        m = self.fanout
        n_nodes = math.ceil(len(entries) / m)
        slices = math.ceil(math.sqrt(n_nodes))
        entries.sort(key=lambda e: (e[0][0] + e[0][2]))
        per_slice = slices * m
        nodes = []
        for i in range(0, len(entries), per_slice):
            sl = entries[i:i + per_slice]
            sl.sort(key=lambda e: (e[0][1] + e[0][3]))
            for j in range(0, len(sl), m):
                nodes.append(_Node(leaf, sl[j:j + m]))
        return nodes

    # -- search ---------------------------------------------------------------------
    def search(self, box):
        """Items whose boxes intersect ``box``."""
        out = []
        root = self.root
        if not root.entries or not _intersects(root.mbr, box):
            return out
        x1, y1, x2, y2 = box
        stack = [root]
        while stack:
            node = stack.pop()
            if node.leaf:
                for b, it in node.entries:
                    if b[0] <= x2 and x1 <= b[2] and b[1] <= y2 and y1 <= b[3]:
                        out.append(it)
            else:
                for b, child in node.entries:
                    if b[0] <= x2 and x1 <= b[2] and b[1] <= y2 and y1 <= b[3]:
                        stack.append(child)
        return out

    def items(self):
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.leaf:
                out.extend((tuple(b), it) for b, it in node.entries)
            else:
                stack.extend(c for _, c in node.entries)
        return out

    # -- insert ---------------------------------------------------------------------
    def insert(self, box, item):
        box = tuple(box)
        path = []
        node = self.root
        while not node.leaf:
            best = None
            best_cost = None
            for e in node.entries:
                cost = (_enlargement(e[0], box), _area(e[0]))
                if best_cost is None or cost < best_cost:
                    best, best_cost = e, cost
            path.append((node, best))
            node = best[1]
        node.entries.append([box, item])
        node.mbr = box if node.mbr is None else _union(node.mbr, box)
        self._size += 1
        split = self._split(node) if len(node.entries) > self.fanout else None
        while path:
            parent, entry = path.pop()
            entry[0] = entry[1].mbr
            if split is not None:
                parent.entries.append([split.mbr, split])
            parent.refresh()
            split = self._split(parent) if len(parent.entries) > self.fanout else None
        if split is not None:
            old = self.root
            self.root = _Node(False, [[old.mbr, old], [split.mbr, split]])

    def _split(self, node):
        """Quadratic split; ``node`` keeps one group and the new sibling is returned."""
        entries = node.entries
        worst = -1.0
        seeds = (0, 1)
        for i in range(len(entries)):
            bi = entries[i][0]
            for j in range(i + 1, len(entries)):
                bj = entries[j][0]
                d = _area(_union(bi, bj)) - _area(bi) - _area(bj)
                if d > worst:
                    worst, seeds = d, (i, j)
        g1 = [entries[seeds[0]]]
        g2 = [entries[seeds[1]]]
        b1, b2 = g1[0][0], g2[0][0]
        rest = [e for k, e in enumerate(entries) if k not in seeds]
        while rest:
            if len(g1) + len(rest) <= self.min_fill:
                g1.extend(rest)
                break
            if len(g2) + len(rest) <= self.min_fill:
                g2.extend(rest)
                break
            # pick the entry with the strongest preference
            pick, pick_diff = 0, -1.0
            for k, e in enumerate(rest):
                diff = abs(_enlargement(b1, e[0]) - _enlargement(b2, e[0]))
                if diff > pick_diff:
                    pick, pick_diff = k, diff
            e = rest.pop(pick)
            d1, d2 = _enlargement(b1, e[0]), _enlargement(b2, e[0])
            if (d1, _area(b1), len(g1)) <= (d2, _area(b2), len(g2)):
                g1.append(e)
                b1 = _union(b1, e[0])
            else:
                g2.append(e)
                b2 = _union(b2, e[0])
        node.entries = g1
        node.refresh()
        return _Node(node.leaf, g2)

    # -- delete ---------------------------------------------------------------------
    def delete(self, box, item):
        box = tuple(box)
        path = self._find_leaf(self.root, box, item, [])
        if path is None:
            return False
        leaf = path[-1]
        for k, e in enumerate(leaf.entries):
            if e[1] == item and e[0] == box:
                del leaf.entries[k]
                break
        self._size -= 1
        # tighten upwards, unlinking emptied nodes
        for depth in range(len(path) - 1, 0, -1):
            node, parent = path[depth], path[depth - 1]
            node.refresh()
            for k, e in enumerate(parent.entries):
                if e[1] is node:
                    if node.entries:
                        e[0] = node.mbr
                    else:
                        del parent.entries[k]
                    break
        self.root.refresh()
        while not self.root.leaf and len(self.root.entries) == 1:
            self.root = self.root.entries[0][1]
        if not self.root.entries:
            self.root = _Node(True, [])
        return True

    def _find_leaf(self, node, box, item, path):
        path.append(node)
        if node.leaf:
            for b, it in node.entries:
                if it == item and b == box:
                    return path
        else:
            for b, child in node.entries:
                if _contains(b, box):
                    found = self._find_leaf(child, box, item, path)
                    if found is not None:
                        return found
        path.pop()
        return None

    # -- checks -----------------------------------------------------------------------
    def check(self):
        """Verify structural invariants; returns the tree height."""
        def walk(node, depth):
            if node is not self.root and not node.entries:
                raise AssertionError("empty non-root node")
            if len(node.entries) > self.fanout:
                raise AssertionError("overfull node")
            if node.entries and node.mbr != _cover(node.entries):
                raise AssertionError("stale bounding box")
            if node.leaf:
                return {depth}
            depths = set()
            for b, child in node.entries:
                if b != child.mbr:
                    raise AssertionError("parent entry box differs from child box")
                depths |= walk(child, depth + 1)
            return depths
        depths = walk(self.root, 1)
        if len(depths) != 1:
            raise AssertionError("leaves at different depths")
        return depths.pop()


def point_box(p):
    return (p.x, p.y, p.x, p.y)
