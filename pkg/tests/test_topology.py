import collections
import math

import numpy as np
import pytest

from loopsim.core import SOMA, ParameterError, validate_network
from loopsim.topology import (
    INHIBITORY_LEAF,
    assign_layout_and_delays,
    degree_preserving_rewire,
    generate_scale_free,
    generate_small_world,
    measure,
    measure_graph,
    mix_inhibitory,
    randomize_synapse_levels,
    scale_weights,
    undirected_pairs,
)


# --------------------------------------------------------------------------
# brute-force oracle (independent of the scipy-backed implementation)
# --------------------------------------------------------------------------


def brute_metrics(pairs, n):
    adj = [set() for _ in range(n)]
    for u, v in pairs:
        adj[u].add(v)
        adj[v].add(u)
    triangles = 0
    for i in range(n):
        for j in adj[i]:
            if j <= i:
                continue
            for k in adj[j]:
                if k > j and k in adj[i]:
                    triangles += 1
    triples = sum(len(a) * (len(a) - 1) // 2 for a in adj)
    clustering = 3 * triangles / triples if triples else 0.0

    # components by BFS
    comp = [-1] * n
    c = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        queue = collections.deque([s])
        comp[s] = c
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if comp[v] < 0:
                    comp[v] = c
                    queue.append(v)
        c += 1
    sizes = collections.Counter(comp)
    biggest = max(sizes, key=lambda x: sizes[x])
    nodes = [i for i in range(n) if comp[i] == biggest]

    total, count = 0, 0
    for s in nodes:
        dist = {s: 0}
        queue = collections.deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        for v, d in dist.items():
            if d > 0:
                total += d
                count += 1
    apl = total / count if count else 0.0
    return clustering, apl


def random_pairs(n, p, rng):
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                pairs.append((i, j))
    return pairs


class TestSmallWorld:
    def test_ring_lattice_degrees(self):
        spec = generate_small_world(20, 4, 0.0, seed=1)
        deg = collections.Counter()
        for u, v in undirected_pairs(spec):
            deg[u] += 1
            deg[v] += 1
        assert set(deg.values()) == {4}
        assert len(spec.edges) == 80  # two directed edges per pair

    def test_full_rewire_preserves_degree_sum(self):
        spec = generate_small_world(20, 4, 1.0, seed=3)
        pairs = undirected_pairs(spec)
        assert 2 * len(pairs) == 80
        assert all(u != v for u, v in pairs)

    def test_reproducible(self):
        a = generate_small_world(100, 6, 0.2, seed=42)
        b = generate_small_world(100, 6, 0.2, seed=42)
        assert [(e.pre, e.post) for e in a.edges] == [(e.pre, e.post) for e in b.edges]
        c = generate_small_world(100, 6, 0.2, seed=43)
        assert [(e.pre, e.post) for e in a.edges] != [(e.pre, e.post) for e in c.edges]

    def test_parameter_errors(self):
        for args in ((4, 4, 0.1), (10, 3, 0.1), (10, 4, 1.5)):
            with pytest.raises(ParameterError):
                generate_small_world(*args, seed=1)

    def test_generated_spec_validates(self):
        spec = generate_small_world(30, 4, 0.3, seed=5)
        assert validate_network(spec) == []

    def test_small_world_regime(self):
        # clustering far above a degree-matched random control, path length
        # comparable: the small-world signature, averaged over 10 seeds
        c_ratios, l_ratios = [], []
        for seed in range(10):
            spec = generate_small_world(1000, 10, 0.1, seed=seed)
            pairs = undirected_pairs(spec)
            ws = measure_graph(pairs, 1000)
            ctrl = measure_graph(
                degree_preserving_rewire(pairs, 1000, seed=seed + 100), 1000
            )
            c_ratios.append(ws.clustering / ctrl.clustering)
            l_ratios.append(ws.avg_path_length / ctrl.avg_path_length)
        assert np.mean(c_ratios) > 3.0
        assert np.mean(l_ratios) < 1.5


class TestScaleFree:
    def test_seed_graph_complete(self):
        spec = generate_scale_free(4, 3, seed=1)
        assert undirected_pairs(spec) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]

    def test_edge_count_bookkeeping(self):
        for n, m in ((50, 3), (200, 1), (100, 5)):
            spec = generate_scale_free(n, m, seed=2)
            expected = m * (n - m) + m * (m - 1) // 2
            assert len(undirected_pairs(spec)) == expected

    def test_reproducible(self):
        a = generate_scale_free(300, 3, seed=9)
        b = generate_scale_free(300, 3, seed=9)
        assert [(e.pre, e.post) for e in a.edges] == [(e.pre, e.post) for e in b.edges]

    def test_hubs_emerge(self):
        spec = generate_scale_free(2000, 2, seed=4)
        deg = collections.Counter()
        for u, v in undirected_pairs(spec):
            deg[u] += 1
            deg[v] += 1
        assert max(deg.values()) > 20  # heavy tail, far above the mean of ~4

    def test_parameter_errors(self):
        with pytest.raises(ParameterError):
            generate_scale_free(3, 3, seed=1)


class TestLayout:
    def test_known_delay(self):
        spec = generate_small_world(10, 2, 0.0, seed=1)
        # place manually: two nodes 200 um apart at 2e7 m/s -> 10 ps
        spec.neurons[0].position = (0.0, 0.0)
        spec.neurons[1].position = (200.0, 0.0)
        from loopsim.core import edge_delay_ps

        assert edge_delay_ps(spec.neurons[0].position, spec.neurons[1].position, 2e7) == 10

    def test_layout_validates_and_coincident_zero(self):
        spec = generate_small_world(30, 4, 0.2, seed=7)
        laid = assign_layout_and_delays(spec, area_um2=1e6, velocity=2e7, seed=8)
        assert validate_network(laid) == []
        zero = assign_layout_and_delays(spec, area_um2=0.0, velocity=2e7, seed=8)
        assert all(e.delay == 0 for e in zero.edges)

    def test_velocity_halved_doubles_exact_delays(self):
        # constructed so distance/velocity is an exact integer in ps
        spec = generate_small_world(10, 2, 0.0, seed=1)
        laid = assign_layout_and_delays(spec, area_um2=1.0, velocity=2e7, seed=3)
        for i, nr in enumerate(laid.neurons):
            nr.position = (i * 100.0, 0.0)  # multiples of 100 um: exact ps
        from loopsim.core import edge_delay_ps

        for e in laid.edges:
            e.delay = edge_delay_ps(
                laid.neurons[e.pre].position, laid.neurons[e.post].position, 2e7
            )
        halved = assign_layout_and_delays(laid, area_um2=0, velocity=1e7, seed=0)
        # positions are re-rolled by assign; instead compare edge formulas
        for e in laid.edges:
            d_fast = e.delay
            d_slow = edge_delay_ps(
                laid.neurons[e.pre].position, laid.neurons[e.post].position, 1e7
            )
            assert d_slow == 2 * d_fast

    def test_reproducible(self):
        spec = generate_small_world(30, 4, 0.2, seed=7)
        a = assign_layout_and_delays(spec, 1e6, 2e7, seed=9)
        b = assign_layout_and_delays(spec, 1e6, 2e7, seed=9)
        assert [n.position for n in a.neurons] == [n.position for n in b.neurons]

    def test_bad_velocity(self):
        spec = generate_small_world(10, 2, 0.0, seed=1)
        with pytest.raises(ParameterError):
            assign_layout_and_delays(spec, 1e6, 0.0, seed=1)


class TestMixInhibitory:
    def test_zero_fraction_unchanged(self):
        spec = generate_small_world(50, 4, 0.1, seed=2)
        mixed = mix_inhibitory(spec, 0.0, seed=3)
        assert all(s.sign == 1 for s in mixed.synapses)

    def test_full_fraction_all_inhibitory(self):
        spec = generate_small_world(50, 4, 0.1, seed=2)
        mixed = mix_inhibitory(spec, 1.0, seed=3)
        assert all(s.sign == -1 for s in mixed.synapses)
        assert all(e.target == INHIBITORY_LEAF for e in mixed.edges)
        assert validate_network(mixed) == []

    def test_dale_consistency_exact_count(self):
        spec = generate_small_world(100, 6, 0.1, seed=4)
        mixed = mix_inhibitory(spec, 0.2, seed=5)
        inhibitory_neurons = set(mixed.meta["inhibitory_neurons"])
        assert len(inhibitory_neurons) == 20
        for e in mixed.edges:
            s = mixed.synapses[e.synapse_id]
            if e.pre in inhibitory_neurons:
                assert s.sign == -1 and e.target == INHIBITORY_LEAF
            else:
                assert s.sign == 1 and e.target == SOMA
        assert validate_network(mixed) == []

    def test_input_spec_not_mutated(self):
        spec = generate_small_world(20, 4, 0.1, seed=2)
        mix_inhibitory(spec, 0.5, seed=3)
        assert all(s.sign == 1 for s in spec.synapses)
        assert all(e.target == SOMA for e in spec.edges)


class TestMeasure:
    def test_complete_graph(self):
        pairs = [(i, j) for i in range(5) for j in range(i + 1, 5)]
        r = measure_graph(pairs, 5)
        assert r.clustering == 1.0 and r.avg_path_length == 1.0

    def test_ring_lattice_analytic(self):
        # analytic transitivity of a k=4 ring lattice: 3(k-2)/(4(k-1)) = 0.5
        spec = generate_small_world(20, 4, 0.0, seed=1)
        r = measure(spec)
        assert r.clustering == 0.5
        brute_c, brute_l = brute_metrics(undirected_pairs(spec), 20)
        assert r.clustering == brute_c
        assert r.avg_path_length == pytest.approx(brute_l, rel=1e-12)

    def test_star_no_triangles(self):
        pairs = [(0, i) for i in range(1, 10)]
        assert measure_graph(pairs, 10).clustering == 0.0

    def test_disconnected_flagged(self):
        pairs = [(0, 1), (1, 2), (3, 4)]
        r = measure_graph(pairs, 5)
        assert not r.connected
        assert r.component_fraction == pytest.approx(3 / 5)
        assert r.avg_path_length == pytest.approx((1 + 1 + 2 + 2 + 1 + 1) / 6)

    def test_matches_brute_force_on_random_graphs(self):
        rng = np.random.default_rng(12)
        for trial in range(100):
            n = int(rng.integers(4, 51))
            p = float(rng.uniform(0.05, 0.5))
            pairs = random_pairs(n, p, rng)
            r = measure_graph(pairs, n)
            brute_c, brute_l = brute_metrics(pairs, n)
            assert r.clustering == brute_c, f"trial {trial}"
            assert r.avg_path_length == pytest.approx(brute_l, rel=1e-12), f"trial {trial}"

    def test_degree_hist(self):
        spec = generate_small_world(20, 4, 0.0, seed=1)
        assert measure(spec).degree_hist == {4: 20}


class TestRewireControl:
    def test_degrees_preserved(self):
        spec = generate_small_world(200, 6, 0.05, seed=6)
        pairs = undirected_pairs(spec)
        rewired = degree_preserving_rewire(pairs, 200, seed=7)

        def degs(ps):
            d = collections.Counter()
            for u, v in ps:
                d[u] += 1
                d[v] += 1
            return d

        assert degs(pairs) == degs(rewired)
        assert len(set(rewired)) == len(rewired)
        assert all(u != v for u, v in rewired)
        assert set(rewired) != set(pairs)  # actually randomized


def test_weight_and_level_helpers():
    spec = generate_small_world(20, 4, 0.0, seed=1)
    scaled = scale_weights(spec, 1.7)
    assert all(s.w_max == 1.7 for s in scaled.synapses)
    assert all(s.w_max == 1.0 for s in spec.synapses)
    levelled = randomize_synapse_levels(spec, seed=2)
    levels = {s.level for s in levelled.synapses}
    assert len(levels) > 10
    assert all(0 <= s.level < s.n_levels for s in levelled.synapses)
