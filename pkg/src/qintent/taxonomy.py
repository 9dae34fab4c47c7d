"""Rooted product-category tree."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

ROOT_ID = 0


@dataclass
class Taxonomy:
    """Nodes keyed by id; the root has parent None. Leaves carry queries."""

    parent: dict = field(default_factory=dict)
    name: dict = field(default_factory=dict)

    def validate(self):
        roots = [n for n, p in self.parent.items() if p is None]
        if len(roots) != 1:
            raise ConfigError(f"taxonomy must have exactly one root, found {len(roots)}")
        root = roots[0]
        for node in self.parent:
            seen = set()
            cur = node
            while cur is not None:
                if cur in seen:
                    raise ConfigError(f"taxonomy cycle through node {node}")
                seen.add(cur)
                if cur != root and self.parent[cur] not in self.parent:
                    raise ConfigError(f"node {cur} has unknown parent {self.parent[cur]}")
                cur = self.parent[cur]
        return self

    def edges(self):
        """(parent, child) pairs."""
        return [(p, c) for c, p in self.parent.items() if p is not None]

    def children(self, node):
        return [c for c, p in self.parent.items() if p == node]

    def leaves(self):
        parents = set(p for p in self.parent.values() if p is not None)
        return sorted(n for n in self.parent if n not in parents)

    def __len__(self):
        return len(self.parent)


def build_taxonomy(num_leaves, branching=20):
    """Three-level tree: root -> ceil(num_leaves/branching) groups -> leaves."""
    if num_leaves < 1:
        raise ConfigError("num_leaves must be >= 1")
    tax = Taxonomy()
    tax.parent[ROOT_ID] = None
    tax.name[ROOT_ID] = "root"
    num_groups = -(-num_leaves // branching)
    group_ids = []
    next_id = 1
    for g in range(num_groups):
        tax.parent[next_id] = ROOT_ID
        tax.name[next_id] = f"group{g}"
        group_ids.append(next_id)
        next_id += 1
    for leaf in range(num_leaves):
        tax.parent[next_id] = group_ids[leaf % num_groups]
        tax.name[next_id] = f"cat{leaf}"
        next_id += 1
    return tax.validate()
