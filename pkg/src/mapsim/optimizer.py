"""Two-level partition search by greedy codelength minimization.

Each trial sweeps nodes in seeded random order, moving every node to the
neighboring module with the largest codelength decrease, then aggregates
modules into super-nodes and repeats on the reduced network. Moves are
evaluated incrementally: only the index codebook and the two touched
modules' codebooks change, so one sweep costs O(edges). Trials are
independent and may run on worker threads; results are reduced by
(codelength, trial index), so scheduling never changes the outcome.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

from .flow import FlowNetwork
from .graph import ValidationError
from .mapeq import Partition
from .seeding import sub_seed

# Moves must improve the codelength by at least this much; smaller deltas
# are treated as ties and the node keeps its current module.
_MIN_GAIN = 1e-10

# scalars layout: q, sum plogp(enter), sum plogp(exit), sum plogp(usage),
# sum plogp(p_u), cached codelength
_Q, _SE, _SX, _SU, _SN, _SL = 0, 1, 2, 3, 4, 5


@njit(cache=True, nogil=True)
def _plogp(x):
    if x <= 0.0:
        return 0.0
    return x * np.log2(x)


@njit(cache=True, nogil=True)
def _delta_terms(p_n, out_tot, in_tot, out_na, in_na, out_nb, in_nb,
                 enter_a, exit_a, sump_a, enter_b, exit_b, sump_b, q):
    """Codelength change for moving a node from module a to module b.

    Returns (delta, enter_a', exit_a', enter_b', exit_b', q'). Tiny negative
    aggregates from float cancellation are clamped to zero.
    """
    exit_a2 = exit_a - (out_tot - out_na) + in_na
    enter_a2 = enter_a - (in_tot - in_na) + out_na
    exit_b2 = exit_b + (out_tot - out_nb) - in_nb
    enter_b2 = enter_b + (in_tot - in_nb) - out_nb
    if exit_a2 < 0.0:
        exit_a2 = 0.0
    if enter_a2 < 0.0:
        enter_a2 = 0.0
    if exit_b2 < 0.0:
        exit_b2 = 0.0
    if enter_b2 < 0.0:
        enter_b2 = 0.0
    sump_a2 = sump_a - p_n
    if sump_a2 < 0.0:
        sump_a2 = 0.0
    sump_b2 = sump_b + p_n
    q2 = q - enter_a - enter_b + enter_a2 + enter_b2
    if q2 < 0.0:
        q2 = 0.0
    delta = (
        (_plogp(q2) - _plogp(q))
        - (_plogp(enter_a2) + _plogp(enter_b2) - _plogp(enter_a) - _plogp(enter_b))
        - (_plogp(exit_a2) + _plogp(exit_b2) - _plogp(exit_a) - _plogp(exit_b))
        + (_plogp(exit_a2 + sump_a2) + _plogp(exit_b2 + sump_b2)
           - _plogp(exit_a + sump_a) - _plogp(exit_b + sump_b))
    )
    return delta, enter_a2, exit_a2, enter_b2, exit_b2, q2


@njit(cache=True, nogil=True)
def _apply(u, a, b, p_n, d, enter_a2, exit_a2, enter_b2, exit_b2, q2,
           module_of, enter, exit_, sump, count, scalars):
    scalars[_SE] += (_plogp(enter_a2) + _plogp(enter_b2)
                     - _plogp(enter[a]) - _plogp(enter[b]))
    scalars[_SX] += (_plogp(exit_a2) + _plogp(exit_b2)
                     - _plogp(exit_[a]) - _plogp(exit_[b]))
    scalars[_SU] += (_plogp(exit_a2 + sump[a] - p_n) + _plogp(exit_b2 + sump[b] + p_n)
                     - _plogp(exit_[a] + sump[a]) - _plogp(exit_[b] + sump[b]))
    scalars[_Q] = q2
    enter[a] = enter_a2
    exit_[a] = exit_a2
    sump[a] -= p_n
    if sump[a] < 0.0:
        sump[a] = 0.0
    count[a] -= 1
    enter[b] = enter_b2
    exit_[b] = exit_b2
    sump[b] += p_n
    count[b] += 1
    module_of[u] = b
    scalars[_SL] = (_plogp(scalars[_Q]) - scalars[_SE] - scalars[_SX]
                    + scalars[_SU] - scalars[_SN])


@njit(cache=True, nogil=True)
def _sweep(order, module_of,
           out_indptr, out_nbr, out_flow,
           in_indptr, in_nbr, in_flow,
           p, out_total, in_total,
           enter, exit_, sump, count,
           scalars, conn_out, conn_in, touched):
    """One pass over all nodes in `order`; returns the number of moves made."""
    moves = 0
    for oi in range(order.shape[0]):
        u = order[oi]
        a = module_of[u]
        ntouched = 0
        for e in range(out_indptr[u], out_indptr[u + 1]):
            v = out_nbr[e]
            if v == u:
                continue
            m = module_of[v]
            if conn_out[m] == 0.0 and conn_in[m] == 0.0:
                touched[ntouched] = m
                ntouched += 1
            conn_out[m] += out_flow[e]
        for e in range(in_indptr[u], in_indptr[u + 1]):
            v = in_nbr[e]
            if v == u:
                continue
            m = module_of[v]
            if conn_out[m] == 0.0 and conn_in[m] == 0.0:
                touched[ntouched] = m
                ntouched += 1
            conn_in[m] += in_flow[e]

        best_b = -1
        best_d = 1e300
        for t in range(ntouched):
            b = touched[t]
            if b == a:
                continue
            d, _, _, _, _, _ = _delta_terms(
                p[u], out_total[u], in_total[u],
                conn_out[a], conn_in[a], conn_out[b], conn_in[b],
                enter[a], exit_[a], sump[a], enter[b], exit_[b], sump[b],
                scalars[_Q],
            )
            if d < best_d or (d == best_d and b < best_b):
                best_b = b
                best_d = d
        if best_b >= 0 and best_d < -_MIN_GAIN:
            d, ea2, xa2, eb2, xb2, q2 = _delta_terms(
                p[u], out_total[u], in_total[u],
                conn_out[a], conn_in[a], conn_out[best_b], conn_in[best_b],
                enter[a], exit_[a], sump[a],
                enter[best_b], exit_[best_b], sump[best_b],
                scalars[_Q],
            )
            _apply(u, a, best_b, p[u], d, ea2, xa2, eb2, xb2, q2,
                   module_of, enter, exit_, sump, count, scalars)
            moves += 1
        for t in range(ntouched):
            conn_out[touched[t]] = 0.0
            conn_in[touched[t]] = 0.0
    return moves


def _plogp_vec(x):
    out = np.zeros_like(x)
    mask = x > 0
    out[mask] = x[mask] * np.log2(x[mask])
    return out


class _FlowArrays:
    """Flat CSR view of a flow network, shared read-only across trials."""

    __slots__ = ("n", "p", "src", "dst", "fl",
                 "out_indptr", "out_nbr", "out_flow",
                 "in_indptr", "in_nbr", "in_flow",
                 "out_total", "in_total")

    def __init__(self, n, p, src, dst, fl):
        self.n = n
        self.p = p
        self.src = src
        self.dst = dst
        self.fl = fl
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=n)
        self.out_indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.out_nbr = dst[order].copy()
        self.out_flow = fl[order].copy()
        order = np.lexsort((src, dst))
        counts = np.bincount(dst, minlength=n)
        self.in_indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.in_nbr = src[order].copy()
        self.in_flow = fl[order].copy()
        self.out_total = np.bincount(src, weights=fl, minlength=n)
        self.in_total = np.bincount(dst, weights=fl, minlength=n)

    @classmethod
    def from_flow(cls, flow: FlowNetwork):
        labels = sorted(flow.node_visit_rates)
        index = {u: i for i, u in enumerate(labels)}
        n = len(labels)
        p = np.array([flow.node_visit_rates[u] for u in labels], dtype=np.float64)
        links = sorted(flow.link_flows.items())
        m = len(links)
        src = np.fromiter((index[u] for (u, _), _ in links), dtype=np.int64, count=m)
        dst = np.fromiter((index[v] for (_, v), _ in links), dtype=np.int64, count=m)
        fl = np.fromiter((f for _, f in links), dtype=np.float64, count=m)
        return cls(n, p, src, dst, fl), labels


def _state_arrays(arrays: _FlowArrays, module_of, capacity=None):
    """Module aggregates and cached scalars for an arbitrary assignment."""
    cap = capacity or arrays.n
    sump = np.bincount(module_of, weights=arrays.p, minlength=cap)
    count = np.bincount(module_of, minlength=cap).astype(np.int64)
    ms = module_of[arrays.src]
    md = module_of[arrays.dst]
    mask = ms != md
    exit_ = np.bincount(ms[mask], weights=arrays.fl[mask], minlength=cap)
    enter = np.bincount(md[mask], weights=arrays.fl[mask], minlength=cap)
    scalars = np.zeros(6)
    scalars[_Q] = enter.sum()
    scalars[_SE] = _plogp_vec(enter).sum()
    scalars[_SX] = _plogp_vec(exit_).sum()
    scalars[_SU] = _plogp_vec(exit_ + sump).sum()
    scalars[_SN] = _plogp_vec(arrays.p).sum()
    scalars[_SL] = (_plogp(scalars[_Q]) - scalars[_SE] - scalars[_SX]
                    + scalars[_SU] - scalars[_SN])
    return enter, exit_, sump, count, scalars


def _aggregate(arrays: _FlowArrays, module_of):
    """Merge each module into a super-node; flows summed, internal flow dropped."""
    labels, dense = np.unique(module_of, return_inverse=True)
    m = len(labels)
    p2 = np.bincount(dense, weights=arrays.p, minlength=m)
    ms = dense[arrays.src]
    md = dense[arrays.dst]
    mask = ms != md
    key = ms[mask] * m + md[mask]
    uniq, inv = np.unique(key, return_inverse=True)
    fl2 = np.bincount(inv, weights=arrays.fl[mask])
    src2 = (uniq // m).astype(np.int64)
    dst2 = (uniq % m).astype(np.int64)
    return _FlowArrays(m, p2, src2, dst2, fl2), dense


def _run_trial(arrays0: _FlowArrays, trial_seed: int):
    """One restart: greedy sweeps plus aggregation until nothing improves.

    Returns (node-level module assignment over original node indices,
    node-level two-level codelength).
    """
    rng = np.random.default_rng(trial_seed)
    arrays = arrays0
    node_map = np.arange(arrays0.n, dtype=np.int64)
    while True:
        module_of = np.arange(arrays.n, dtype=np.int64)
        enter, exit_, sump, count, scalars = _state_arrays(arrays, module_of)
        conn_out = np.zeros(arrays.n)
        conn_in = np.zeros(arrays.n)
        touched = np.zeros(arrays.n + 1, dtype=np.int64)
        level_moves = 0
        while True:
            order = rng.permutation(arrays.n).astype(np.int64)
            moved = _sweep(order, module_of,
                           arrays.out_indptr, arrays.out_nbr, arrays.out_flow,
                           arrays.in_indptr, arrays.in_nbr, arrays.in_flow,
                           arrays.p, arrays.out_total, arrays.in_total,
                           enter, exit_, sump, count,
                           scalars, conn_out, conn_in, touched)
            if moved == 0:
                break
            level_moves += moved
        if level_moves == 0:
            break
        arrays, dense = _aggregate(arrays, module_of)
        node_map = dense[node_map]
        if arrays.n <= 1:
            break
    _, _, _, _, scalars = _state_arrays(arrays0, node_map)
    return node_map, float(scalars[_SL])


def worker_count() -> int:
    """Worker-thread cap: MAPSIM_THREADS if set, else available parallelism."""
    env = os.environ.get("MAPSIM_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"MAPSIM_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ValidationError(f"MAPSIM_THREADS must be positive, got {value}")
        return value
    return os.cpu_count() or 1


def optimize_two_level(flow: FlowNetwork, seed: int, trials: int = 100):
    """Best two-level partition over `trials` seeded restarts.

    Every trial starts from all singletons. The best trial result is also
    compared against the one-module partition, and whichever codelength is
    strictly smaller wins (ties prefer fewer modules). Returns
    (Partition, codelength in bits). Deterministic for fixed inputs.
    """
    if trials < 1:
        raise ValidationError(f"need at least one trial, got {trials}")
    arrays, labels = _FlowArrays.from_flow(flow)
    seeds = [sub_seed(seed, "trial", t) for t in range(trials)]

    workers = min(worker_count(), trials)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _run_trial(arrays, s), seeds))
    else:
        results = [_run_trial(arrays, s) for s in seeds]

    best_idx = min(range(trials), key=lambda t: (results[t][1], t))
    best_assignment, best_len = results[best_idx]

    one_module_len = float(-_plogp_vec(arrays.p).sum())
    if not best_len < one_module_len - 1e-12:
        return Partition.one_module(labels), one_module_len

    first_seen = {}
    for i in range(arrays.n):
        m = int(best_assignment[i])
        if m not in first_seen:
            first_seen[m] = len(first_seen) + 1
    modules = {labels[i]: first_seen[int(best_assignment[i])] for i in range(arrays.n)}
    return Partition.two_level(modules), best_len


class SearchState:
    """Mutable assignment with incrementally maintained codelength.

    Backs the same move arithmetic the sweeps use. The cached codelength
    always equals a from-scratch recomputation up to float drift; the
    `recompute_codelength` method exposes the oracle.
    """

    def __init__(self, flow: FlowNetwork, assignment=None):
        self._arrays, self._labels = _FlowArrays.from_flow(flow)
        self._index = {u: i for i, u in enumerate(self._labels)}
        n = self._arrays.n
        if assignment is None:
            module_ids = sorted(self._labels)
            assignment = {u: u for u in self._labels}
        else:
            missing = set(self._labels) - assignment.keys()
            if missing:
                raise ValidationError(f"assignment misses nodes: {sorted(missing)[:5]}")
            extra = assignment.keys() - set(self._labels)
            if extra:
                raise ValidationError(f"assignment covers unknown nodes: {sorted(extra)[:5]}")
            module_ids = sorted(set(assignment.values()))
        self._mod_label = list(module_ids)
        self._mod_index = {m: i for i, m in enumerate(self._mod_label)}
        self._capacity = max(n, len(self._mod_label)) + 1
        self.module_of = np.array(
            [self._mod_index[assignment[u]] for u in self._labels], dtype=np.int64
        )
        self._rebuild()

    def _rebuild(self):
        self.enter, self.exit_, self.sump, self.count, self.scalars = _state_arrays(
            self._arrays, self.module_of, capacity=self._capacity
        )

    @property
    def codelength(self) -> float:
        return float(self.scalars[_SL])

    @property
    def assignment(self):
        return {u: self._mod_label[self.module_of[i]] for i, u in enumerate(self._labels)}

    def module_count(self) -> int:
        return int((self.count > 0).sum())

    def partition(self) -> Partition:
        return Partition.two_level(self.assignment)

    def _node_index(self, node):
        try:
            return self._index[node]
        except KeyError:
            raise KeyError(f"unknown node {node}") from None

    def _target_slot(self, target_module):
        if target_module is None:
            # Fresh empty module: reuse an emptied slot if one exists.
            empties = np.nonzero(self.count[: len(self._mod_label)] == 0)[0]
            if len(empties):
                return int(empties[0])
            return len(self._mod_label)
        try:
            return self._mod_index[target_module]
        except KeyError:
            raise KeyError(f"unknown module {target_module}") from None

    def _connections(self, i):
        a = self._arrays
        out_n = np.zeros(self._capacity)
        in_n = np.zeros(self._capacity)
        for e in range(a.out_indptr[i], a.out_indptr[i + 1]):
            out_n[self.module_of[a.out_nbr[e]]] += a.out_flow[e]
        for e in range(a.in_indptr[i], a.in_indptr[i + 1]):
            in_n[self.module_of[a.in_nbr[e]]] += a.in_flow[e]
        return out_n, in_n

    def _move_terms(self, node, target_module):
        i = self._node_index(node)
        a = int(self.module_of[i])
        b = self._target_slot(target_module)
        if b >= self._capacity:
            self._grow(b + 1)
        out_n, in_n = self._connections(i)
        arr = self._arrays
        return i, a, b, _delta_terms(
            arr.p[i], arr.out_total[i], arr.in_total[i],
            out_n[a], in_n[a], out_n[b], in_n[b],
            self.enter[a], self.exit_[a], self.sump[a],
            self.enter[b], self.exit_[b], self.sump[b],
            self.scalars[_Q],
        )

    def _grow(self, need):
        extra = max(need - self._capacity, self._capacity)
        for name in ("enter", "exit_", "sump"):
            setattr(self, name, np.concatenate([getattr(self, name), np.zeros(extra)]))
        self.count = np.concatenate([self.count, np.zeros(extra, dtype=np.int64)])
        self._capacity += extra

    def delta_move(self, node, target_module) -> float:
        """Codelength change of moving `node` to `target_module`, without mutating.

        `None` denotes a new empty module; moving a node to its own module
        returns exactly 0.
        """
        i, a, b, terms = self._move_terms(node, target_module)
        if a == b:
            return 0.0
        return float(terms[0])

    def apply_move(self, node, target_module):
        """Perform the move and update all aggregates incrementally."""
        i, a, b, terms = self._move_terms(node, target_module)
        if a == b:
            return 0.0
        d, ea2, xa2, eb2, xb2, q2 = terms
        if b == len(self._mod_label):
            fresh = max(self._mod_label) + 1 if self._mod_label else 1
            self._mod_label.append(fresh)
            self._mod_index[fresh] = b
        _apply(i, a, b, self._arrays.p[i], d, ea2, xa2, eb2, xb2, q2,
               self.module_of, self.enter, self.exit_, self.sump, self.count,
               self.scalars)
        return float(d)

    def recompute_codelength(self) -> float:
        """From-scratch codelength of the current assignment (the oracle)."""
        *_, scalars = _state_arrays(self._arrays, self.module_of, capacity=self._capacity)
        return float(scalars[_SL])


def delta_codelength_move(state: SearchState, node, target_module) -> float:
    """Incremental codelength change of one node move; `None` = new empty module."""
    return state.delta_move(node, target_module)
