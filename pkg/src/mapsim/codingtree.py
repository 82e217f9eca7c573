"""Rate-annotated coding tree: node addresses, path rates, and MapSim similarity.

Every internal tree node owns a codebook with one codeword per child
(enter codewords for sub-modules, visit codewords for direct member
leaves) plus its own exit codeword. The similarity of v to u is the rate
of walking from u's leaf up to their deepest common module (a product of
exit-codeword probabilities) and back down to v's leaf (a product of
enter-codeword probabilities ending in v's visit-codeword probability).
"""

import io
import math
import re
from dataclasses import dataclass

from .flow import FlowNetwork
from .graph import ParseError, ValidationError
from .mapeq import Partition, module_rates

_SUM_TOL = 1e-9

# A leaf address: 1-based child indices from a tree node down to the leaf.
Address = tuple[int, ...]


@dataclass(frozen=True)
class TreeNode:
    """One coding-tree position: a module (with children) or a leaf.

    `codeword_prob` is this node's codeword probability within its parent's
    codebook: the enter probability for modules, the visit probability for
    leaves, and 0 at the root. `exit_prob` is a module's exit-codeword
    probability within its own codebook (0 at the root and at leaves).
    """

    children: tuple = ()
    codeword_prob: float = 0.0
    exit_prob: float = 0.0
    node_id: int | None = None
    visit_rate: float = 0.0
    usage: float = 0.0

    @property
    def is_leaf(self):
        return not self.children


class CodingTree:
    """Immutable coding tree with a node-id -> address index."""

    def __init__(self, root: TreeNode):
        self.root = root
        self._addr = {}
        self._validate(root, ())
        if root.exit_prob != 0.0:
            raise ValidationError("root must have exit probability 0")

    def _validate(self, node, prefix):
        total = node.exit_prob
        for i, child in enumerate(node.children, start=1):
            total += child.codeword_prob
            if child.is_leaf:
                if child.node_id in self._addr:
                    raise ValidationError(f"node {child.node_id} appears at two leaves")
                self._addr[child.node_id] = prefix + (i,)
            else:
                self._validate(child, prefix + (i,))
        if total > 0 and abs(total - 1.0) > _SUM_TOL:
            raise ValidationError(
                f"codebook at {prefix or 'root'} sums to {total!r}, expected 1"
            )

    @classmethod
    def from_codebooks(cls, spec):
        """Construct a tree directly from codebook probabilities.

        `spec` is a nested dict: modules are {"enter": p, "exit": p,
        "children": [...]} (the root omits "enter" and "exit"), leaves are
        {"node": id, "prob": p} with an optional global visit "rate".
        """

        def build(d):
            if "node" in d:
                prob = float(d["prob"])
                return TreeNode(
                    codeword_prob=prob,
                    node_id=int(d["node"]),
                    visit_rate=float(d.get("rate", prob)),
                )
            children = tuple(build(c) for c in d["children"])
            return TreeNode(
                children=children,
                codeword_prob=float(d.get("enter", 0.0)),
                exit_prob=float(d.get("exit", 0.0)),
                usage=float(d.get("usage", 0.0)),
            )

        return cls(build(spec))

    @property
    def node_ids(self):
        return self._addr.keys()

    def addr(self, node):
        """The node's address: 1-based child indices from the root to its leaf."""
        try:
            return self._addr[node]
        except KeyError:
            raise KeyError(f"node {node} is not in the coding tree") from None

    def subtree(self, prefix) -> TreeNode:
        """The tree node at `prefix`; the empty prefix is the root."""
        node = self.root
        for idx in prefix:
            if node.is_leaf or not 1 <= idx <= len(node.children):
                raise ValidationError(f"invalid tree prefix {tuple(prefix)}")
            node = node.children[idx - 1]
        return node

    def leaf_count(self):
        return len(self._addr)

    def __repr__(self):
        return f"CodingTree({len(self._addr)} leaves)"


def build_coding_tree(flow: FlowNetwork, part: Partition) -> CodingTree:
    """Build the coding tree of `part`, with codeword probabilities from `flow`.

    Children at each position are ordered by their identifiers in the
    partition, so addresses are stable. Child-enter and member-visit
    probabilities are normalized by the parent codebook's usage rate;
    exit probabilities by the module's own usage rate.
    """
    mr = module_rates(flow, part)

    def build(prefix, codeword_prob):
        rate = mr.modules[prefix]
        slots = [(kid[-1], kid) for kid in rate.children]
        slots.extend((node, None) for node in rate.members)
        slots.sort(key=lambda s: s[0])
        usage = rate.usage
        children = []
        for ident, kid in slots:
            if kid is not None:
                enter_prob = mr.modules[kid].enter / usage if usage > 0 else 0.0
                children.append(build(kid, enter_prob))
            else:
                p = rate.members[ident]
                children.append(
                    TreeNode(
                        codeword_prob=p / usage if usage > 0 else 0.0,
                        node_id=ident,
                        visit_rate=p,
                    )
                )
        exit_prob = rate.exit / usage if (prefix and usage > 0) else 0.0
        return TreeNode(
            children=tuple(children),
            codeword_prob=codeword_prob,
            exit_prob=exit_prob,
            usage=usage,
        )

    return CodingTree(build((), 0.0))


def addr(tree: CodingTree, node):
    return tree.addr(node)


def longest_common_prefix(a, b):
    """Maximal shared leading address sequence, leaving both remainders nonempty.

    When one address is a prefix of the other the result backs off to the
    deepest common module ancestor. Identical addresses are rejected.
    """
    a = tuple(a)
    b = tuple(b)
    if a == b:
        raise ValidationError("identical addresses share no proper prefix")
    n = 0
    limit = min(len(a), len(b))
    while n < limit and a[n] == b[n]:
        n += 1
    if n == len(a) or n == len(b):
        n -= 1
    return a[:n]


def _child_at(node: TreeNode, idx: int, address) -> TreeNode:
    if node.is_leaf or not 1 <= idx <= len(node.children):
        raise ValidationError(f"address {tuple(address)} is not valid in this subtree")
    return node.children[idx - 1]


def _rev_factors(subtree: TreeNode, a):
    """Exit-codeword probabilities along `a`, excluding the final leaf hop."""
    a = tuple(a)
    if not a:
        raise ValidationError("empty address")
    factors = []
    node = subtree
    for idx in a[:-1]:
        node = _child_at(node, idx, a)
        if node.is_leaf:
            raise ValidationError(f"address {a} descends through a leaf")
        factors.append(node.exit_prob)
    last = _child_at(node, a[-1], a)
    if not last.is_leaf:
        raise ValidationError(f"address {a} does not end at a leaf")
    return factors


def _forw_factors(subtree: TreeNode, a):
    """Enter-codeword probabilities along `a`, ending with the leaf's visit codeword."""
    a = tuple(a)
    if not a:
        raise ValidationError("empty address")
    factors = []
    node = subtree
    for idx in a:
        node = _child_at(node, idx, a)
        factors.append(node.codeword_prob)
    if not node.is_leaf:
        raise ValidationError(f"address {a} does not end at a leaf")
    return factors


def _product(factors):
    # Long products go through log space to dodge underflow on deep trees.
    if any(f == 0.0 for f in factors):
        return 0.0
    if len(factors) <= 8:
        result = 1.0
        for f in factors:
            result *= f
        return result
    return 2.0 ** sum(math.log2(f) for f in factors)


def _bits(factors):
    """Description length of a factor product, or +inf on a zero-rate path.

    Summing the factors' bit costs keeps deep-hierarchy lengths finite even
    when the linear rate itself underflows to zero.
    """
    if any(f == 0.0 for f in factors):
        return math.inf
    if len(factors) <= 8:
        result = 1.0
        for f in factors:
            result *= f
        return -math.log2(result)
    return -sum(math.log2(f) for f in factors)


def rev_rate(subtree: TreeNode, a) -> float:
    """Rate of walking address `a` in reverse, from the leaf up to `subtree`.

    The final hop contributes a factor of one: the coder forgets the most
    recently visited node, so leaving it is free.
    """
    return _product(_rev_factors(subtree, a))


def forw_rate(subtree: TreeNode, a) -> float:
    """Rate of walking address `a` forward, from `subtree` down to the leaf."""
    return _product(_forw_factors(subtree, a))


def mapsim(tree: CodingTree, u, v) -> float:
    """Similarity of v to u: reverse rate out of u times forward rate into v.

    Both rates are taken within the smallest module containing u and v.
    Defined for every ordered pair of distinct nodes, whether or not the
    link (u, v) exists; zero when any codeword on the path has rate zero.
    """
    return _product(_path_factors(tree, u, v))


def _path_factors(tree: CodingTree, u, v):
    if u == v:
        raise ValidationError(f"self-similarity of node {u} is undefined")
    au = tree.addr(u)
    av = tree.addr(v)
    p = longest_common_prefix(au, av)
    sub = tree.subtree(p)
    return _rev_factors(sub, au[len(p):]) + _forw_factors(sub, av[len(p):])


def description_length(tree: CodingTree, u, v) -> float:
    """Bits needed to describe the transition u -> v; +inf when the rate is zero.

    Computed from the codeword bit costs along the path, so deep hierarchies
    yield finite lengths even when the linear rate underflows.
    """
    return _bits(_path_factors(tree, u, v))


def write_tree(tree: CodingTree, sink):
    """Write the tree as "path flow name node_id" lines, one per leaf.

    Paths are colon-separated 1-based child indices in depth-first order;
    the flow column is the leaf's visit rate.
    """
    sink.write("# path flow name node_id\n")

    def walk(node, path):
        for i, child in enumerate(node.children, start=1):
            if child.is_leaf:
                joined = ":".join(str(x) for x in path + (i,))
                sink.write(f'{joined} {child.visit_rate!r} "{child.node_id}" {child.node_id}\n')
            else:
                walk(child, path + (i,))

    walk(tree.root, ())


def format_tree(tree: CodingTree) -> str:
    buf = io.StringIO()
    write_tree(tree, buf)
    return buf.getvalue()


_TREE_LINE = re.compile(r'^(\S+)\s+(\S+)\s+"([^"]*)"\s+(\S+)\s*$')


def parse_tree_paths(source) -> dict:
    """Parse "path flow name node_id" lines into a node -> address mapping.

    Validates structure as it reads: duplicate ids or paths, 0-based
    indices, and positions used both as leaf and module are rejected with
    the offending line number.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    paths = {}
    leaf_paths = set()
    module_prefixes = set()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _TREE_LINE.match(line)
        if m is None:
            raise ParseError(lineno, f"expected 'path flow \"name\" node_id', got {line!r}")
        path_text, flow_text, _name, id_text = m.groups()
        try:
            path = tuple(int(x) for x in path_text.split(":"))
        except ValueError:
            raise ParseError(lineno, f"non-numeric path component in {path_text!r}") from None
        if not path or any(x < 1 for x in path):
            raise ParseError(lineno, f"path indices must be 1-based, got {path_text!r}")
        try:
            float(flow_text)
        except ValueError:
            raise ParseError(lineno, f"non-numeric flow value {flow_text!r}") from None
        try:
            node = int(id_text)
        except ValueError:
            raise ParseError(lineno, f"non-numeric node id {id_text!r}") from None
        if node in paths:
            raise ParseError(lineno, f"duplicate node id {node}")
        if path in leaf_paths:
            raise ParseError(lineno, f"duplicate tree path {path_text}")
        if path in module_prefixes:
            raise ParseError(lineno, f"path {path_text} already used as a module")
        for d in range(1, len(path)):
            if path[:d] in leaf_paths:
                raise ParseError(lineno, f"path {path_text} descends through a leaf")
            module_prefixes.add(path[:d])
        leaf_paths.add(path)
        paths[node] = path
    return paths


def parse_tree(source, flow: FlowNetwork) -> CodingTree:
    """Parse a tree file and rebuild all rates from `flow`.

    Accepts arbitrary-depth hierarchies. The flow column is informational
    on read: enter, exit, and visit rates are always recomputed from the
    graph's flow so the codebooks stay consistent regardless of where the
    file came from.
    """
    paths = parse_tree_paths(source)
    part = Partition(paths)
    missing = flow.node_visit_rates.keys() - paths.keys()
    if missing:
        raise ValidationError(f"tree file misses nodes: {sorted(missing)[:5]}")
    extra = paths.keys() - flow.node_visit_rates.keys()
    if extra:
        raise ValidationError(f"tree file has unknown nodes: {sorted(extra)[:5]}")
    return build_coding_tree(flow, part)
