"""Graph container, edge-list I/O, connectivity, CV splitting, and synthetic graphs.

Graphs are immutable after construction: node ids are opaque integers,
edges are weight-aggregated (one edge per node pair, self-loops dropped),
and adjacency indices are prebuilt for O(1) lookups. All sampling routines
are deterministic for a fixed seed.
"""

from dataclasses import dataclass

from .seeding import sub_rng, sub_seed


class ParseError(ValueError):
    """Malformed edge-list or tree-file line; carries the 1-based line number."""

    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ValidationError(ValueError):
    """Input violates a structural constraint (weights, coverage, feasibility)."""


class Graph:
    """Weighted graph, directed or undirected, with aggregated edges.

    Invariants: all endpoints appear in `nodes`, all weights are positive,
    at most one edge per (ordered / unordered) node pair, no self-loops.
    Undirected edges are stored with endpoints in ascending order.
    """

    __slots__ = ("directed", "nodes", "edges", "_out", "_in")

    def __init__(self, nodes, edges, directed):
        self.directed = bool(directed)
        self.nodes = tuple(sorted(nodes))
        self.edges = tuple(sorted(edges))
        out = {u: {} for u in self.nodes}
        inc = {u: {} for u in self.nodes} if directed else out
        for u, v, w in self.edges:
            if u == v:
                raise ValidationError(f"self-loop at node {u}")
            if w <= 0:
                raise ValidationError(f"non-positive weight on edge ({u}, {v})")
            if u not in out or v not in out:
                raise ValidationError(f"edge ({u}, {v}) references unknown node")
            if v in out[u]:
                raise ValidationError(f"duplicate edge ({u}, {v})")
            out[u][v] = w
            if directed:
                inc[v][u] = w
            else:
                out[v][u] = w
        self._out = out
        self._in = inc

    @classmethod
    def from_edges(cls, edges, directed=False, extra_nodes=()):
        """Build a graph, summing weights of duplicate pairs and dropping self-loops."""
        agg = {}
        nodes = set(extra_nodes)
        for u, v, w in edges:
            nodes.add(u)
            nodes.add(v)
            if w <= 0:
                raise ValidationError(f"non-positive weight on edge ({u}, {v})")
            if u == v:
                continue
            key = (u, v) if directed or u < v else (v, u)
            agg[key] = agg.get(key, 0.0) + float(w)
        return cls(nodes, [(u, v, w) for (u, v), w in agg.items()], directed)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_edges(self):
        return len(self.edges)

    def has_edge(self, u, v):
        out = self._out.get(u)
        return out is not None and v in out

    def weight(self, u, v):
        return self._out[u][v]

    def out_weights(self, u):
        """Mapping of successor -> weight (all neighbors when undirected)."""
        return self._out[u]

    def in_weights(self, u):
        return self._in[u]

    def strength(self, u):
        """Sum of incident edge weights (out-strength for directed graphs)."""
        return sum(self._out[u].values())

    def in_strength(self, u):
        return sum(self._in[u].values())

    def degree(self, u):
        """Number of distinct neighbors in the undirected projection."""
        if not self.directed:
            return len(self._out[u])
        return len(self._out[u].keys() | self._in[u].keys())

    def total_weight(self):
        return sum(w for _, _, w in self.edges)

    def undirected_neighbors(self, u):
        if not self.directed:
            return self._out[u].keys()
        return self._out[u].keys() | self._in[u].keys()

    def induced_subgraph(self, keep):
        keep = set(keep)
        edges = [(u, v, w) for u, v, w in self.edges if u in keep and v in keep]
        return Graph(keep & set(self.nodes), edges, self.directed)

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph({self.num_nodes} nodes, {self.num_edges} {kind} edges)"


@dataclass(frozen=True)
class FoldSplit:
    """One cross-validation fold: training graph plus held-out test pairs."""

    fold_index: int
    train: Graph
    test_positive: tuple
    test_negative: tuple


def parse_edge_list(source, directed=False) -> Graph:
    """Parse whitespace-separated "src dst [weight]" lines into a Graph.

    `source` is a string or an iterable of lines. Lines starting with '#'
    or '%' are comments; a missing weight means 1.0; duplicate pairs are
    weight-summed (temporal event streams aggregate to weighted static
    edges); self-loops are dropped. Extra trailing fields (e.g. timestamps)
    are ignored.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    nodes = set()
    agg = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError(lineno, f"expected 'src dst [weight]', got {line!r}")
        try:
            u = int(parts[0])
            v = int(parts[1])
        except ValueError:
            raise ParseError(lineno, f"non-numeric node id in {line!r}") from None
        if len(parts) >= 3:
            try:
                w = float(parts[2])
            except ValueError:
                raise ParseError(lineno, f"non-numeric weight in {line!r}") from None
        else:
            w = 1.0
        if w <= 0:
            raise ValidationError(f"line {lineno}: non-positive weight {w}")
        nodes.add(u)
        nodes.add(v)
        if u == v:
            continue
        key = (u, v) if directed or u < v else (v, u)
        agg[key] = agg.get(key, 0.0) + w
    return Graph(nodes, [(u, v, w) for (u, v), w in agg.items()], directed)


def write_edge_list(g: Graph, sink):
    """Write `g` as "src dst weight" lines; inverse of parse_edge_list."""
    for u, v, w in g.edges:
        sink.write(f"{u} {v} {w!r}\n")


def format_edge_list(g: Graph) -> str:
    return "".join(f"{u} {v} {w!r}\n" for u, v, w in g.edges)


def _components(g: Graph):
    """Connected components of the undirected projection, as sets of nodes."""
    seen = set()
    comps = []
    for start in g.nodes:
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v in g.undirected_neighbors(u):
                if v not in comp:
                    comp.add(v)
                    stack.append(v)
        seen |= comp
        comps.append(comp)
    return comps


def is_connected(g: Graph) -> bool:
    return g.num_nodes > 0 and len(_components(g)) == 1


def largest_weakly_connected_component(g: Graph) -> Graph:
    """Induced subgraph on the largest component of the undirected projection.

    Ties are broken by the smallest minimum node id; node ids are preserved.
    """
    if g.num_nodes == 0:
        raise ValidationError("empty graph has no connected component")
    best = max(_components(g), key=lambda c: (len(c), -min(c)))
    return g.induced_subgraph(best)


def partition_edges(edges, k, seed):
    """Shuffle edges with a seeded RNG and split into k near-equal chunks."""
    edges = list(edges)
    if k < 2:
        raise ValidationError(f"need k >= 2 folds, got {k}")
    if k > len(edges):
        raise ValidationError(f"k={k} exceeds edge count {len(edges)}")
    rng = sub_rng(seed, "kfold-shuffle")
    rng.shuffle(edges)
    base, extra = divmod(len(edges), k)
    chunks = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        chunks.append(edges[pos : pos + size])
        pos += size
    return chunks


def kfold_split(g: Graph, k: int, seed: int):
    """k-fold cross-validation over aggregated edges (weighted links are indivisible).

    Each fold's training graph is restricted to its largest weakly connected
    component; held-out edges keep only pairs whose endpoints both survive.
    Negatives are sampled per fold against the full graph's edge set, one per
    positive for directed graphs and two per positive for undirected ones.
    """
    folds = []
    chunks = partition_edges(g.edges, k, seed)
    for i, held in enumerate(chunks):
        train_edges = [e for j, c in enumerate(chunks) if j != i for e in c]
        if not train_edges:
            raise ValidationError(f"fold {i}: no training edges left")
        train = largest_weakly_connected_component(
            Graph.from_edges(train_edges, directed=g.directed)
        )
        surviving = set(train.nodes)
        test_pos = tuple((u, v) for u, v, _ in held if u in surviving and v in surviving)
        n_neg = len(test_pos) if g.directed else 2 * len(test_pos)
        test_neg = tuple(
            sample_negative_links(g, train.nodes, n_neg, sub_seed(seed, "negatives", i))
        )
        folds.append(FoldSplit(i, train, test_pos, test_neg))
    return folds


def sample_negative_links(g: Graph, universe, count: int, seed: int):
    """Sample `count` distinct absent pairs over `universe`, uniformly at random.

    Pairs are ordered for directed graphs and unordered for undirected ones
    (returned in the orientation drawn). Rejection-sampled against the full
    graph's edge set; self-loops excluded. Deterministic for a fixed seed.
    """
    universe = sorted(set(universe))
    n = len(universe)
    if count == 0:
        return []
    uset = set(universe)
    present = sum(1 for u, v, _ in g.edges if u in uset and v in uset)
    total = n * (n - 1) if g.directed else n * (n - 1) // 2
    absent = total - present
    if count > absent:
        raise ValidationError(
            f"cannot sample {count} negative links: only {absent} absent pairs"
        )
    rng = sub_rng(seed, "sample")
    chosen = []
    seen = set()
    attempts = 0
    budget = 1000 + 50 * count
    while len(chosen) < count and attempts < budget:
        attempts += 1
        u = universe[rng.randrange(n)]
        v = universe[rng.randrange(n)]
        if u == v:
            continue
        key = (u, v) if g.directed or u < v else (v, u)
        if key in seen or g.has_edge(u, v):
            continue
        seen.add(key)
        chosen.append((u, v))
    if len(chosen) < count:
        # Dense regime: rejection stalls, fall back to exhaustive enumeration.
        remaining = []
        for i, u in enumerate(universe):
            others = universe if g.directed else universe[i + 1 :]
            for v in others:
                if u == v:
                    continue
                key = (u, v) if g.directed or u < v else (v, u)
                if key in seen or g.has_edge(u, v):
                    continue
                remaining.append((u, v))
        chosen.extend(rng.sample(remaining, count - len(chosen)))
    return chosen


def _regular_pairing(node_ids, k, rng):
    """One k-regular simple graph on `node_ids` via stub matching with repair.

    Returns a set of (u, v) pairs with u < v, or None when the attempt dead-ends.
    """
    edges = set()
    stubs = list(node_ids) * k

    def suitable(potential):
        if not potential:
            return True
        items = sorted(potential)
        for a in items:
            for b in items:
                if b >= a:
                    break
                if (b, a) not in edges:
                    return True
        return False

    while stubs:
        rng.shuffle(stubs)
        problem = {}
        it = iter(stubs)
        for s1, s2 in zip(it, it):
            if s1 > s2:
                s1, s2 = s2, s1
            if s1 != s2 and (s1, s2) not in edges:
                edges.add((s1, s2))
            else:
                problem[s1] = problem.get(s1, 0) + 1
                problem[s2] = problem.get(s2, 0) + 1
        if not suitable(problem):
            return None
        stubs = [node for node, c in sorted(problem.items()) for _ in range(c)]
    return edges


def generate_crossed_k_regular(n: int, k: int, seed: int) -> Graph:
    """Two k-regular random graphs on n/2 nodes each, joined by crossing one edge from each.

    Edge (a, b) from the first half and (c, d) from the second are replaced
    with (a, c) and (b, d), producing a connected k-regular graph with a
    planted two-module structure. Retries with fresh randomness until the
    result is simple and connected.
    """
    half = n // 2
    if n % 2 != 0 or n < 4:
        raise ValidationError(f"n must be even and >= 4, got {n}")
    if k < 1 or k >= half:
        raise ValidationError(f"need 1 <= k < n/2, got k={k}, n={n}")
    if (k * half) % 2 != 0:
        raise ValidationError(f"k*(n/2) must be even, got k={k}, n={n}")
    rng = sub_rng(seed, "crossed-regular")
    while True:
        e1 = _regular_pairing(range(half), k, rng)
        e2 = _regular_pairing(range(half, n), k, rng)
        if e1 is None or e2 is None:
            continue
        a, b = rng.choice(sorted(e1))
        c, d = rng.choice(sorted(e2))
        edges = (e1 - {(a, b)}) | (e2 - {(c, d)}) | {(a, c), (b, d)}
        if len(edges) != k * half:
            continue
        g = Graph(range(n), [(u, v, 1.0) for u, v in sorted(edges)], directed=False)
        if is_connected(g) and all(g.degree(u) == k for u in g.nodes):
            return g
