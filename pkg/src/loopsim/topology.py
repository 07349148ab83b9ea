"""Network synthesis and structural metrics.

Builders produce flat loop-neuron networks (synapses on the somatic loop,
inhibitory synapses routed through a sign-flipped ``inh`` dendrite) from
the two canonical generators: ring-lattice rewiring for small worlds and
preferential attachment for scale-free degree distributions.  Positions
and light-speed delays are assigned separately so the same graph can be
laid out at different physical scales.

Structural metrics (clustering, path length, degree histogram) are
computed on the undirected projection of the directed network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .core import (
    DEFAULT_N_LEVELS,
    DEFAULT_T_REFRACTORY,
    DEFAULT_TAU,
    DEFAULT_VELOCITY,
    MODE_PASS,
    SOMA,
    DendriteSpec,
    Edge,
    LoopConfig,
    NetworkSpec,
    NeuronSpec,
    ParameterError,
    SimTime,
    SynapseState,
    edge_delay_ps,
)

__all__ = [
    "TopologyReport",
    "generate_small_world",
    "generate_scale_free",
    "assign_layout_and_delays",
    "mix_inhibitory",
    "measure",
    "measure_graph",
    "undirected_pairs",
    "degree_preserving_rewire",
    "scale_weights",
    "randomize_synapse_levels",
]

INHIBITORY_LEAF = "inh"


@dataclass
class TopologyReport:
    """Structural summary of a network's undirected projection."""

    clustering: float
    avg_path_length: float
    degree_hist: dict[int, int]
    powerlaw_fit: Optional[object] = None  # analysis.PowerLawFit
    connected: bool = True
    component_fraction: float = 1.0

    def to_dict(self) -> dict:
        d = {
            "clustering": self.clustering,
            "avg_path_length": self.avg_path_length,
            "degree_hist": {str(k): v for k, v in sorted(self.degree_hist.items())},
            "connected": self.connected,
            "component_fraction": self.component_fraction,
        }
        if self.powerlaw_fit is not None:
            f = self.powerlaw_fit
            d["degree_powerlaw"] = {
                "alpha": f.alpha,
                "xmin": f.xmin,
                "n_tail": f.n_tail,
                "ks": f.ks,
            }
        return d


def _default_neuron(tau: float, threshold: float, t_refractory: SimTime) -> NeuronSpec:
    return NeuronSpec(
        position=(0.0, 0.0),
        soma=LoopConfig(tau=tau, mode=MODE_PASS, sign=1),
        threshold=threshold,
        t_refractory=t_refractory,
    )


def _spec_from_pairs(
    pairs: list[tuple[int, int]],
    n: int,
    *,
    tau: float,
    threshold: float,
    t_refractory: SimTime,
    n_levels: int,
    level: Optional[int],
    w_max: float,
    meta: dict,
) -> NetworkSpec:
    """Directed network from undirected pairs: one edge and one synapse per
    direction, soma-targeted, zero-layout (all positions coincident)."""
    neurons = [_default_neuron(tau, threshold, t_refractory) for _ in range(n)]
    edges: list[Edge] = []
    synapses: list[SynapseState] = []
    lvl = n_levels - 1 if level is None else level
    for u, v in sorted(pairs):
        for pre, post in ((u, v), (v, u)):
            edges.append(Edge(pre=pre, post=post, synapse_id=len(synapses), delay=0))
            synapses.append(SynapseState(level=lvl, n_levels=n_levels, w_max=w_max))
    return NetworkSpec(neurons=neurons, edges=edges, synapses=synapses, meta=meta)


def generate_small_world(
    n: int,
    k: int,
    p_rewire: float,
    seed: int,
    *,
    tau: float = DEFAULT_TAU,
    threshold: float = 1.0,
    t_refractory: SimTime = DEFAULT_T_REFRACTORY,
    n_levels: int = DEFAULT_N_LEVELS,
    level: Optional[int] = None,
    w_max: float = 1.0,
) -> NetworkSpec:
    """Ring lattice with ``k`` neighbors, each lattice edge rewired with
    probability ``p_rewire`` (no duplicates, no self loops).

    Deterministic per seed.  Every undirected pair becomes a pair of
    directed edges with independent synapses.
    """
    if k % 2 != 0 or k < 2 or n <= k:
        raise ParameterError(f"need n > k >= 2 with k even, got n={n}, k={k}")
    if not 0.0 <= p_rewire <= 1.0:
        raise ParameterError(f"p_rewire={p_rewire} not in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs: set[tuple[int, int]] = set()

    def norm(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    half = k // 2
    for j in range(1, half + 1):
        for i in range(n):
            pairs.add(norm(i, (i + j) % n))
    for j in range(1, half + 1):
        for i in range(n):
            old = norm(i, (i + j) % n)
            if old not in pairs:
                continue
            if rng.random() >= p_rewire:
                continue
            # bounded retry; keep the lattice edge if no free target exists
            for _ in range(n):
                w = int(rng.integers(0, n))
                cand = norm(i, w)
                if w != i and cand not in pairs:
                    pairs.discard(old)
                    pairs.add(cand)
                    break
    meta = {"generator": "small-world", "n": n, "k": k, "p_rewire": p_rewire, "seed": seed}
    return _spec_from_pairs(
        list(pairs), n, tau=tau, threshold=threshold, t_refractory=t_refractory,
        n_levels=n_levels, level=level, w_max=w_max, meta=meta,
    )


def generate_scale_free(
    n: int,
    m: int,
    seed: int,
    *,
    tau: float = DEFAULT_TAU,
    threshold: float = 1.0,
    t_refractory: SimTime = DEFAULT_T_REFRACTORY,
    n_levels: int = DEFAULT_N_LEVELS,
    level: Optional[int] = None,
    w_max: float = 1.0,
) -> NetworkSpec:
    """Preferential attachment: a complete seed graph on ``m`` nodes, then
    each new node attaches ``m`` edges to existing nodes with probability
    proportional to degree.  Edge count is m*(n-m) + C(m,2)."""
    if not n > m >= 1:
        raise ParameterError(f"need n > m >= 1, got n={n}, m={m}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs: list[tuple[int, int]] = []
    endpoints: list[int] = []  # each node appears once per incident edge
    for a in range(m):
        for b in range(a + 1, m):
            pairs.append((a, b))
            endpoints.extend((a, b))
    for v in range(m, n):
        targets: set[int] = set()
        while len(targets) < m:
            if endpoints:
                t = endpoints[int(rng.integers(0, len(endpoints)))]
            else:
                t = int(rng.integers(0, v))  # degenerate seed (m = 1): uniform
            if t != v:
                targets.add(t)
        for t in sorted(targets):
            pairs.append((t, v))
            endpoints.extend((t, v))
    meta = {"generator": "scale-free", "n": n, "m": m, "seed": seed}
    return _spec_from_pairs(
        pairs, n, tau=tau, threshold=threshold, t_refractory=t_refractory,
        n_levels=n_levels, level=level, w_max=w_max, meta=meta,
    )


def assign_layout_and_delays(
    spec: NetworkSpec, area_um2: float, velocity: float, seed: int
) -> NetworkSpec:
    """Place neurons uniformly at random in a square of the given area and
    recompute every edge delay as light travel time (plus the edge's fixed
    extra latency) at ``velocity``."""
    if not velocity > 0:
        raise ParameterError(f"velocity must be positive, got {velocity}")
    if not area_um2 >= 0:
        raise ParameterError(f"area must be nonnegative, got {area_um2}")
    rng = np.random.Generator(np.random.PCG64(seed))
    side = math.sqrt(area_um2)
    xy = rng.random((len(spec.neurons), 2)) * side
    neurons = [
        replace(nr, position=(float(x), float(y)))
        for nr, (x, y) in zip(spec.neurons, xy)
    ]
    edges = [
        replace(
            e,
            delay=edge_delay_ps(
                neurons[e.pre].position, neurons[e.post].position, velocity, e.extra_latency
            ),
        )
        for e in spec.edges
    ]
    return replace(spec, neurons=neurons, edges=edges, signal_velocity=velocity)


def mix_inhibitory(spec: NetworkSpec, fraction: float, seed: int) -> NetworkSpec:
    """Make a random ``floor(fraction * n)``-neuron subset inhibitory.

    Dale-consistent: every efferent synapse of a chosen neuron flips to
    sign -1 and is rerouted through a sign-flipped pass dendrite (``inh``)
    on its target neuron, so the stored loop charge stays unsigned while
    the coupling carries the inhibition.  Expects a flat (soma-targeted)
    network, as produced by the generators.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"fraction={fraction} not in [0, 1]")
    for e in spec.edges:
        if e.target != SOMA:
            raise ParameterError("mix_inhibitory expects a flat soma-targeted network")
    n = len(spec.neurons)
    rng = np.random.Generator(np.random.PCG64(seed))
    n_inh = int(fraction * n)
    chosen = set(rng.permutation(n)[:n_inh].tolist())

    neurons = [replace(nr, dendrites=list(nr.dendrites)) for nr in spec.neurons]
    synapses = [replace(s) for s in spec.synapses]
    edges = []
    needs_leaf: set[int] = set()
    for e in spec.edges:
        if e.pre in chosen:
            synapses[e.synapse_id].sign = -1
            edges.append(replace(e, target=INHIBITORY_LEAF))
            needs_leaf.add(e.post)
        else:
            edges.append(replace(e))
    for nid in needs_leaf:
        nr = neurons[nid]
        if not any(d.id == INHIBITORY_LEAF for d in nr.dendrites):
            nr.dendrites.append(
                DendriteSpec(
                    id=INHIBITORY_LEAF,
                    parent=SOMA,
                    loop=LoopConfig(tau=nr.soma.tau, mode=MODE_PASS, sign=-1),
                )
            )
    meta = dict(spec.meta)
    meta["inhibitory_fraction"] = fraction
    meta["inhibitory_neurons"] = sorted(chosen)
    return replace(spec, neurons=neurons, edges=edges, synapses=synapses, meta=meta)


def scale_weights(spec: NetworkSpec, factor: float) -> NetworkSpec:
    """Multiply every synapse's w_max by ``factor`` (tuning knob for
    criticality experiments)."""
    if not factor >= 0:
        raise ParameterError(f"factor must be nonnegative, got {factor}")
    synapses = [replace(s, w_max=s.w_max * factor) for s in spec.synapses]
    return replace(spec, synapses=synapses)


def randomize_synapse_levels(spec: NetworkSpec, seed: int) -> NetworkSpec:
    """Draw each synapse's level uniformly over its full range."""
    rng = np.random.Generator(np.random.PCG64(seed))
    synapses = [
        replace(s, level=int(rng.integers(0, s.n_levels))) for s in spec.synapses
    ]
    return replace(spec, synapses=synapses)


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------


def undirected_pairs(spec: NetworkSpec) -> list[tuple[int, int]]:
    """Undirected projection of the directed edge list (autapses dropped)."""
    pairs = {
        (e.pre, e.post) if e.pre < e.post else (e.post, e.pre)
        for e in spec.edges
        if e.pre != e.post
    }
    return sorted(pairs)


def _adjacency(pairs: list[tuple[int, int]], n: int) -> csr_matrix:
    if not pairs:
        return csr_matrix((n, n), dtype=np.int64)
    arr = np.asarray(pairs, dtype=np.int64)
    rows = np.concatenate([arr[:, 0], arr[:, 1]])
    cols = np.concatenate([arr[:, 1], arr[:, 0]])
    data = np.ones(len(rows), dtype=np.int64)
    a = csr_matrix((data, (rows, cols)), shape=(n, n))
    a.data[:] = 1  # collapse accidental parallel edges
    return a


def _transitivity(a: csr_matrix) -> float:
    deg = np.asarray(a.sum(axis=1)).ravel()
    triples2 = int((deg * (deg - 1)).sum())  # 2x connected triples
    if triples2 == 0:
        return 0.0
    closed = int((a @ a).multiply(a).sum())  # 6x triangles == trace(A^3)
    return closed / triples2


def _mean_path_length(
    a: csr_matrix, nodes: np.ndarray, sources: Optional[np.ndarray], batch: int = 256
) -> float:
    """Mean shortest-path hops over ordered pairs of ``nodes`` (from
    ``sources`` if given), ignoring unreachable pairs."""
    total = 0.0
    pairs = 0
    src = nodes if sources is None else sources
    in_nodes = np.zeros(a.shape[0], dtype=bool)
    in_nodes[nodes] = True
    for i in range(0, len(src), batch):
        chunk = src[i : i + batch]
        d = dijkstra(a, directed=False, unweighted=True, indices=chunk)
        d = d[:, in_nodes]
        finite = np.isfinite(d) & (d > 0)
        total += float(d[finite].sum())
        pairs += int(finite.sum())
    return total / pairs if pairs else 0.0


def measure_graph(
    pairs: list[tuple[int, int]],
    n: int,
    *,
    exact_paths_limit: int = 10_000,
    path_samples: int = 512,
    seed: int = 0,
) -> TopologyReport:
    """Clustering (transitivity), mean shortest-path length and degree
    histogram of an undirected graph given as a pair list.

    Path lengths are exact (all-pairs BFS) up to ``exact_paths_limit``
    nodes and estimated from ``path_samples`` random sources above that.
    Disconnected graphs are measured on the largest component and flagged.
    """
    a = _adjacency(pairs, n)
    deg = np.asarray(a.sum(axis=1)).ravel().astype(int)
    hist: dict[int, int] = {}
    for d in deg:
        hist[int(d)] = hist.get(int(d), 0) + 1

    n_comp, labels = connected_components(a, directed=False)
    if n_comp == 1:
        nodes = np.arange(n)
        connected = True
        frac = 1.0
    else:
        sizes = np.bincount(labels)
        biggest = int(sizes.argmax())
        nodes = np.flatnonzero(labels == biggest)
        connected = False
        frac = len(nodes) / n if n else 0.0

    if len(nodes) <= exact_paths_limit:
        sources = None
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        sources = nodes[rng.permutation(len(nodes))[:path_samples]]
    apl = _mean_path_length(a, nodes, sources) if len(nodes) > 1 else 0.0

    return TopologyReport(
        clustering=_transitivity(a),
        avg_path_length=apl,
        degree_hist=hist,
        connected=connected,
        component_fraction=frac,
    )


def measure(spec: NetworkSpec, *, fit_degrees: bool = False, seed: int = 0) -> TopologyReport:
    """Structural report for a network spec (undirected projection)."""
    n = len(spec.neurons)
    report = measure_graph(undirected_pairs(spec), n, seed=seed)
    if fit_degrees:
        from .analysis import fit_power_law

        degrees = [d for d, c in report.degree_hist.items() for _ in range(c) if d > 0]
        report.powerlaw_fit = fit_power_law(degrees)
    return report


def degree_preserving_rewire(
    pairs: list[tuple[int, int]], n: int, seed: int, swaps_per_edge: int = 10
) -> list[tuple[int, int]]:
    """Degree-matched random control: repeated double-edge swaps
    ((a,b),(c,d) -> (a,d),(c,b)) that never create self loops or parallel
    edges.  Preserves every node's degree exactly."""
    rng = np.random.Generator(np.random.PCG64(seed))
    edge_list = [tuple(p) for p in pairs]
    edge_set = set(edge_list)
    m = len(edge_list)
    if m < 2:
        return edge_list

    def norm(x, y):
        return (x, y) if x < y else (y, x)

    attempts = swaps_per_edge * m
    for _ in range(attempts):
        i = int(rng.integers(0, m))
        j = int(rng.integers(0, m))
        if i == j:
            continue
        a, b = edge_list[i]
        c, d = edge_list[j]
        if rng.random() < 0.5:
            c, d = d, c
        if a == d or c == b:
            continue
        e1, e2 = norm(a, d), norm(c, b)
        if e1 in edge_set or e2 in edge_set:
            continue
        edge_set.discard(edge_list[i])
        edge_set.discard(edge_list[j])
        edge_set.add(e1)
        edge_set.add(e2)
        edge_list[i] = e1
        edge_list[j] = e2
    return sorted(edge_list)
