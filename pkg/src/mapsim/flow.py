"""Random-walk flow models: stationary node visit rates and per-link flow rates.

Undirected graphs have a closed form (rates proportional to node strength).
Directed graphs use power iteration with uniform teleportation; teleport
steps shape the stationary distribution but are left unrecorded, so the
coded flows reflect only real link transitions.
"""

from dataclasses import dataclass

import numpy as np

from .graph import Graph, ValidationError, is_connected


class ConvergenceError(RuntimeError):
    """Power iteration failed to converge; carries the final L1 residual."""

    def __init__(self, residual, iterations):
        super().__init__(
            f"power iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of the directed flow model."""

    teleport_probability: float = 0.15
    tolerance: float = 1e-12
    max_iterations: int = 1000

    def __post_init__(self):
        if not 0.0 < self.teleport_probability < 1.0:
            raise ValidationError(
                f"teleport probability must be in (0, 1), got {self.teleport_probability}"
            )
        if self.tolerance <= 0:
            raise ValidationError(f"tolerance must be positive, got {self.tolerance}")


class FlowNetwork:
    """Stationary visit rate per node and flow rate per directed link.

    Both distributions sum to one. For undirected graphs every edge appears
    in both orientations with equal flow.
    """

    __slots__ = ("node_visit_rates", "link_flows", "directed")

    def __init__(self, node_visit_rates, link_flows, directed):
        self.node_visit_rates = dict(node_visit_rates)
        self.link_flows = dict(link_flows)
        self.directed = bool(directed)
        for p in self.node_visit_rates.values():
            if p < 0:
                raise ValidationError("negative visit rate")
        for f in self.link_flows.values():
            if f < 0:
                raise ValidationError("negative link flow")
        if abs(sum(self.node_visit_rates.values()) - 1.0) > 1e-9:
            raise ValidationError("node visit rates do not sum to 1")
        if abs(sum(self.link_flows.values()) - 1.0) > 1e-9:
            raise ValidationError("link flows do not sum to 1")

    @property
    def nodes(self):
        return sorted(self.node_visit_rates)

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"FlowNetwork({len(self.node_visit_rates)} nodes, {kind})"


def visit_rates_undirected(g: Graph) -> FlowNetwork:
    """Closed-form flow for undirected graphs: p_u = strength(u) / (2 W).

    Each edge carries flow w_uv / (2 W) in both orientations, where W is the
    total edge weight. The graph must be connected with at least one edge.
    """
    if g.directed:
        raise ValidationError("expected an undirected graph")
    if g.num_edges == 0:
        raise ValidationError("flow model needs at least one edge")
    if not is_connected(g):
        raise ValidationError("graph is disconnected; pass the largest component")
    two_w = 2.0 * g.total_weight()
    if two_w <= 0:
        raise ValidationError("zero total edge weight")
    rates = {u: g.strength(u) / two_w for u in g.nodes}
    flows = {}
    for u, v, w in g.edges:
        flows[(u, v)] = w / two_w
        flows[(v, u)] = w / two_w
    return FlowNetwork(rates, flows, directed=False)


def visit_rates_directed(g: Graph, cfg: FlowConfig = FlowConfig()) -> FlowNetwork:
    """Directed flow via power iteration with uniform, unrecorded teleportation.

    Iterates pi' = tau * t + (1 - tau) * (pi D) where D is the row-normalized
    out-weight matrix and dangling nodes redistribute their mass uniformly.
    Coded link flows drop the teleport component and are renormalized; coded
    visit rates are the in-flow sums of the link flows.
    """
    if not g.directed:
        raise ValidationError("expected a directed graph")
    if g.num_edges == 0:
        raise ValidationError("flow model needs at least one edge")
    if not is_connected(g):
        raise ValidationError("graph is not weakly connected; pass the largest component")

    nodes = list(g.nodes)
    index = {u: i for i, u in enumerate(nodes)}
    n = len(nodes)
    src = np.fromiter((index[u] for u, _, _ in g.edges), dtype=np.int64, count=g.num_edges)
    dst = np.fromiter((index[v] for _, v, _ in g.edges), dtype=np.int64, count=g.num_edges)
    wgt = np.fromiter((w for _, _, w in g.edges), dtype=np.float64, count=g.num_edges)
    out_strength = np.zeros(n)
    np.add.at(out_strength, src, wgt)
    norm_w = wgt / out_strength[src]
    dangling = out_strength == 0.0

    tau = cfg.teleport_probability
    pi = np.full(n, 1.0 / n)
    residual = np.inf
    for _ in range(cfg.max_iterations):
        walked = np.bincount(dst, weights=pi[src] * norm_w, minlength=n)
        teleported = tau + (1.0 - tau) * pi[dangling].sum()
        nxt = teleported / n + (1.0 - tau) * walked
        residual = np.abs(nxt - pi).sum()
        pi = nxt
        if residual < cfg.tolerance:
            break
    else:
        raise ConvergenceError(residual, cfg.max_iterations)

    link = pi[src] * (1.0 - tau) * norm_w
    total = link.sum()
    if total <= 0:
        raise ValidationError("no recorded link flow")
    link /= total
    visit = np.bincount(dst, weights=link, minlength=n)
    visit /= visit.sum()
    rates = {u: visit[index[u]] for u in nodes}
    flows = {(u, v): link[i] for i, (u, v, _) in enumerate(g.edges)}
    return FlowNetwork(rates, flows, directed=True)


def flow_for(g: Graph, cfg: FlowConfig = FlowConfig()) -> FlowNetwork:
    """Dispatch to the undirected or directed flow model."""
    if g.directed:
        return visit_rates_directed(g, cfg)
    return visit_rates_undirected(g)
