"""Map-equation codelength for one-level, two-level, and hierarchical partitions.

The codelength of a partition is the sum over codebooks (one per internal
tree node) of usage rate times codeword entropy. An internal module's
codebook holds its sub-modules' enter rates, its direct member nodes'
visit rates, and its own exit rate; the root has no exit. For the
one-module partition this reduces exactly to the entropy of the node
visit rates.
"""

from dataclasses import dataclass

import numpy as np

from .flow import FlowNetwork
from .graph import ValidationError


class Partition:
    """Assignment of each node to a path of nested module identifiers.

    A path is a nonempty tuple whose last element is the node's leaf slot
    and whose leading elements name the chain of enclosing modules. An
    identifier may not denote both a module and a leaf under the same
    parent, and no two nodes may share a full path.
    """

    __slots__ = ("paths", "depth")

    def __init__(self, paths):
        cleaned = {}
        module_prefixes = set()
        for node, path in paths.items():
            path = tuple(path)
            if not path:
                raise ValidationError(f"node {node} has an empty path")
            cleaned[node] = path
            for d in range(1, len(path)):
                module_prefixes.add(path[:d])
        leaf_paths = set()
        for node, path in cleaned.items():
            if path in leaf_paths:
                raise ValidationError(f"duplicate path {path} at node {node}")
            leaf_paths.add(path)
            if path in module_prefixes:
                raise ValidationError(
                    f"path {path} of node {node} collides with a module"
                )
        self.paths = cleaned
        self.depth = max(len(p) for p in cleaned.values())

    @classmethod
    def one_module(cls, nodes):
        """All nodes directly under the root: the trivial partition."""
        return cls({u: (u,) for u in nodes})

    @classmethod
    def two_level(cls, modules):
        """Build from a node -> module id mapping; leaf slots are node ids."""
        return cls({u: (m, u) for u, m in modules.items()})

    @property
    def nodes(self):
        return self.paths.keys()

    def module_of(self, node):
        """The module chain (path without the leaf slot); () means the root."""
        return self.paths[node][:-1]

    def top_module_count(self):
        return len({p[:1] for p in self.paths.values() if len(p) > 1}) or 1

    def __eq__(self, other):
        return isinstance(other, Partition) and self.paths == other.paths

    def __repr__(self):
        return f"Partition({len(self.paths)} nodes, depth {self.depth})"


@dataclass(frozen=True)
class ModuleRate:
    """Flow rates of one module: boundary flows, codebook usage, member rates."""

    enter: float
    exit: float
    usage: float
    members: dict
    children: tuple


@dataclass(frozen=True)
class ModuleRates:
    """Rates for every internal tree node, keyed by module prefix; () is the root."""

    modules: dict
    index_usage: float


def entropy(p) -> float:
    """Shannon entropy in bits of rates `p`, normalized internally by their sum."""
    arr = np.asarray(list(p), dtype=np.float64)
    if arr.size == 0:
        raise ValidationError("entropy of an empty rate list")
    if (arr < 0).any():
        raise ValidationError("entropy requires nonnegative rates")
    s = arr.sum()
    if s <= 0:
        raise ValidationError("entropy requires a positive total rate")
    q = arr / s
    nz = q[q > 0]
    return float(-(nz * np.log2(nz)).sum())


def module_rates(flow: FlowNetwork, part: Partition) -> ModuleRates:
    """Enter, exit, usage, and member visit rates for every module of `part`.

    Boundary flows are accumulated at every hierarchy level a link crosses.
    Usage is the total rate at which a module's codebook is used: sub-module
    enters plus direct member visits plus the module's own exit.
    """
    rates = flow.node_visit_rates
    missing = rates.keys() - part.paths.keys()
    if missing:
        raise ValidationError(f"nodes missing from partition: {sorted(missing)[:5]}")
    extra = part.paths.keys() - rates.keys()
    if extra:
        raise ValidationError(f"partition covers unknown nodes: {sorted(extra)[:5]}")

    enter = {(): 0.0}
    exit_ = {(): 0.0}
    members = {(): {}}
    children = {(): set()}
    for node, path in part.paths.items():
        prefix = path[:-1]
        for d in range(len(prefix)):
            sub = prefix[: d + 1]
            enter.setdefault(sub, 0.0)
            exit_.setdefault(sub, 0.0)
            members.setdefault(sub, {})
            children.setdefault(sub, set())
            children[sub[:d]].add(sub)
        members[prefix][node] = rates[node]

    for (u, v), f in flow.link_flows.items():
        pu = part.paths[u][:-1]
        pv = part.paths[v][:-1]
        c = 0
        limit = min(len(pu), len(pv))
        while c < limit and pu[c] == pv[c]:
            c += 1
        for d in range(c, len(pu)):
            exit_[pu[: d + 1]] += f
        for d in range(c, len(pv)):
            enter[pv[: d + 1]] += f

    modules = {}
    for prefix in enter:
        kids = tuple(sorted(children.get(prefix, ())))
        usage = (
            exit_[prefix]
            + sum(members.get(prefix, {}).values())
            + sum(enter[kid] for kid in kids)
        )
        modules[prefix] = ModuleRate(
            enter=enter[prefix],
            exit=exit_[prefix],
            usage=usage,
            members=dict(members.get(prefix, {})),
            children=kids,
        )
    index_usage = sum(enter[kid] for kid in modules[()].children)
    return ModuleRates(modules=modules, index_usage=index_usage)


def codelength(flow: FlowNetwork, part: Partition) -> float:
    """Map-equation codelength of `part` in bits.

    Sums usage-weighted codebook entropies over all internal tree nodes;
    hierarchical partitions are handled by the same form applied recursively
    through the prefix structure.
    """
    mr = module_rates(flow, part)
    total = 0.0
    for prefix, m in mr.modules.items():
        entries = [mr.modules[kid].enter for kid in m.children]
        entries.extend(m.members.values())
        if prefix:
            entries.append(m.exit)
        if m.usage <= 0:
            continue
        total += m.usage * entropy(entries)
    return total
