"""Deterministic discrete-event core.

Photon pulses travel along directed edges with integer-picosecond delays,
are thinned by the detection efficiency, charge integration loops that
decay exponentially between events, propagate through the dendritic tree,
and trigger threshold firing with photon fanout and refractory gating.

Events are processed in strict ``(time, seq)`` order, where ``seq`` is the
insertion ordinal; two runs with the same spec, stimulus and seed produce
bit-identical spike logs.
"""

from __future__ import annotations

import copy
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Optional

from .core import (
    MODE_FIRE,
    SOMA,
    CausalityError,
    Edge,
    LoopConfig,
    LoopState,
    NetworkSpec,
    NeuronSpec,
    ParameterError,
    QueueOverflowError,
    RngStream,
    SimTime,
    SpikeLog,
    StructuralError,
    SynapseState,
    ValidationFailed,
    effective_weight,
    validate_network,
)
from .plasticity import (
    HomeostasisState,
    StdpRule,
    StpRule,
    homeostatic_update,
    pairing_direction,
    stp_update,
)

__all__ = [
    "Event",
    "ExternalInput",
    "SpikeRecord",
    "FiringOutcome",
    "NeuronState",
    "RunResult",
    "decay_loop",
    "detect_photons",
    "apply_synaptic_event",
    "propagate_dendrites",
    "check_and_fire",
    "allocate_photons",
    "build_neuron_state",
    "run",
    "load_stimulus",
    "save_stimulus",
]

# event kinds
PHOTON_ARRIVAL = 0
FIRE_CHECK = 1
REFRACTORY_END = 2
EXTERNAL_INPUT = 3

KIND_NAMES = {
    PHOTON_ARRIVAL: "PhotonArrival",
    FIRE_CHECK: "FireCheck",
    REFRACTORY_END: "RefractoryEnd",
    EXTERNAL_INPUT: "ExternalInput",
}


@dataclass(frozen=True)
class Event:
    """One queued event; processed in lexicographic (time, seq) order."""

    time: SimTime
    seq: int
    kind: int
    target: int  # edge id for arrivals, neuron id otherwise
    payload: float = 0.0  # photon count or external amplitude

    @property
    def kind_name(self) -> str:
        return KIND_NAMES[self.kind]


@dataclass(frozen=True)
class ExternalInput:
    """Direct somatic charge injection at a given time."""

    t_ps: SimTime
    neuron_id: int
    amplitude: float


@dataclass(frozen=True)
class SpikeRecord:
    time: SimTime
    neuron_id: int


@dataclass
class FiringOutcome:
    """Result of a firing: the spike plus photon counts per out-edge."""

    spike: SpikeRecord
    allocations: list[tuple[int, int]]  # (edge_id, photon_count), count >= 1


@dataclass
class NeuronState:
    """Mutable runtime state of one neuron.

    ``loops`` maps loop id (``soma`` or dendrite id) to its state;
    ``children``/``configs`` mirror the dendritic tree for traversal.
    ``afferents`` holds this neuron's input synapse states so that firing
    can stamp ``last_post`` on them.
    """

    neuron_id: int
    spec: NeuronSpec
    loops: dict[str, LoopState]
    configs: dict[str, LoopConfig]
    children: dict[str, list[str]]
    threshold: float
    refractory_until: SimTime = 0
    out_edges: list[int] = field(default_factory=list)
    gain: int = 0
    afferents: list[SynapseState] = field(default_factory=list)
    homeo: Optional[HomeostasisState] = None


def decay_loop(state: LoopState, cfg: LoopConfig, now: SimTime) -> LoopState:
    """Exponential decay of a loop value from its last update to ``now``.

    Pure; raises :class:`CausalityError` if ``now`` precedes the state.
    """
    dt = now - state.last_update
    if dt < 0:
        raise CausalityError(f"decay to t={now} before last_update={state.last_update}")
    if dt == 0 or not math.isfinite(cfg.tau):
        return LoopState(value=state.value, last_update=now)
    return LoopState(value=state.value * math.exp(-dt / cfg.tau), last_update=now)


def detect_photons(count: int, efficiency: float, rng: RngStream) -> int:
    """Binomially thin ``count`` photons at the given detection efficiency."""
    if count < 0:
        raise ParameterError(f"negative photon count {count}")
    if not 0.0 < efficiency <= 1.0:
        raise ParameterError(f"efficiency {efficiency} not in (0, 1]")
    if count == 0 or efficiency >= 1.0:
        return count
    if count == 1:  # single-photon pulses dominate; skip the binomial machinery
        return 1 if rng.random() < efficiency else 0
    return rng.binomial(count, efficiency)


def apply_synaptic_event(
    synapse: SynapseState, leaf_loop: LoopState, leaf_cfg: LoopConfig, t: SimTime
) -> tuple[LoopState, SynapseState]:
    """One synaptic firing: decay the leaf loop to ``t`` and add the
    synapse's efficacy magnitude (the detector clicks once per arrival, so
    extra photons in the same pulse add nothing).

    The stored loop value is unsigned; the coupling sign of the loop chain
    carries inhibition into the dendritic sum.  Returns the updated loop and
    the synapse with ``last_pre`` stamped.
    """
    loop = decay_loop(leaf_loop, leaf_cfg, t)
    loop.value += abs(effective_weight(synapse))
    from dataclasses import replace

    return loop, replace(synapse, last_pre=t)


def propagate_dendrites(neuron: NeuronState, t: SimTime) -> float:
    """Somatic drive at time ``t`` after dendritic processing.

    Post-order traversal: every loop is decayed to ``t``; pass loops
    contribute ``sign * value`` to their parent's drive functionally, while
    threshold-fire loops inject a persistent ``sign``-ed unit pulse into the
    parent loop when their drive crosses threshold (and then reset).  The
    somatic drive is the root loop's value plus its children's
    contributions.
    """
    loops = neuron.loops
    configs = neuron.configs
    children = neuron.children

    if len(loops) == 1:  # flat neuron: the soma is the whole tree
        state = loops[SOMA]
        dt = t - state.last_update
        if dt < 0:
            raise CausalityError(f"somatic loop ahead of t={t}")
        if dt > 0:
            tau = configs[SOMA].tau
            if math.isfinite(tau):
                state.value *= math.exp(-dt / tau)
            state.last_update = t
        return state.value

    def eval_node(name: str, depth: int) -> float:
        if depth > len(loops) + 1:
            raise StructuralError(f"dendritic tree of neuron {neuron.neuron_id} is cyclic")
        cfg = configs[name]
        state = loops[name]
        dt = t - state.last_update
        if dt < 0:
            raise CausalityError(f"loop {name!r} ahead of t={t}")
        if dt > 0:
            if math.isfinite(cfg.tau):
                state.value *= math.exp(-dt / cfg.tau)
            state.last_update = t
        pass_sum = 0.0
        for child in children.get(name, ()):
            d = eval_node(child, depth + 1)
            ccfg = configs[child]
            if ccfg.mode == MODE_FIRE:
                if d >= ccfg.threshold:
                    state.value += ccfg.sign * 1.0
                    loops[child].value = 0.0
            else:
                pass_sum += ccfg.sign * d
        return state.value + pass_sum

    return eval_node(SOMA, 0)


def allocate_photons(gain: int, n_edges: int) -> list[int]:
    """Split ``gain`` photons over ``n_edges`` out-edges: floor division
    with the remainder going to the lowest edge indices."""
    if n_edges <= 0 or gain <= 0:
        return [0] * max(n_edges, 0)
    base, rem = divmod(gain, n_edges)
    return [base + 1 if i < rem else base for i in range(n_edges)]


def check_and_fire(
    neuron: NeuronState, t: SimTime, rng: RngStream
) -> Optional[FiringOutcome]:
    """Evaluate the somatic threshold and fire if reached.

    On firing: the spike is recorded, the somatic loop resets to 0, the
    neuron becomes refractory until ``t + t_refractory``, ``gain`` photons
    are allocated over the out-edges, and ``last_post`` is stamped on all
    afferent synapses.  Returns ``None`` when refractory or below threshold.
    Photon emission is deterministic; ``rng`` is reserved for stochastic
    emission variants.
    """
    drive = propagate_dendrites(neuron, t)
    if t < neuron.refractory_until or drive < neuron.threshold:
        return None
    neuron.loops[SOMA].value = 0.0
    neuron.refractory_until = t + neuron.spec.t_refractory
    counts = allocate_photons(neuron.gain, len(neuron.out_edges))
    allocations = [
        (eid, c) for eid, c in zip(neuron.out_edges, counts) if c > 0
    ]
    for s in neuron.afferents:
        s.last_post = t
    return FiringOutcome(SpikeRecord(t, neuron.neuron_id), allocations)


def build_neuron_state(
    neuron_id: int, spec: NeuronSpec, out_edges: list[int], gain: Optional[int] = None
) -> NeuronState:
    """Runtime state for one neuron; raises StructuralError on a bad tree."""
    configs: dict[str, LoopConfig] = {SOMA: spec.soma}
    children: dict[str, list[str]] = {SOMA: []}
    for d in spec.dendrites:
        configs[d.id] = d.loop
        children.setdefault(d.id, [])
    for d in spec.dendrites:
        if d.parent not in configs:
            raise StructuralError(f"dendrite {d.id!r} has unknown parent {d.parent!r}")
        children[d.parent].append(d.id)
    # every node must be reachable from the soma (no cycles)
    reach = set()
    stack = [SOMA]
    while stack:
        cur = stack.pop()
        reach.add(cur)
        stack.extend(children[cur])
    if len(reach) != len(configs):
        raise StructuralError(
            f"neuron {neuron_id}: {len(configs) - len(reach)} dendrite(s) unreachable from soma"
        )
    loops = {name: LoopState() for name in configs}
    resolved_gain = gain if gain is not None else (
        spec.gain if spec.gain is not None else len(out_edges)
    )
    return NeuronState(
        neuron_id=neuron_id,
        spec=spec,
        loops=loops,
        configs=configs,
        children=children,
        threshold=spec.threshold,
        out_edges=list(out_edges),
        gain=resolved_gain,
        homeo=HomeostasisState() if spec.homeostasis is not None else None,
    )


@dataclass
class RunResult:
    """Outcome of one simulation run."""

    spikes: SpikeLog
    state: dict  # final-state snapshot (JSON-ready)
    events_processed: int
    final_time: SimTime
    stopped_on: str  # queue-empty | t-end | max-events


def load_stimulus(path) -> list[ExternalInput]:
    with open(path) as f:
        doc = json.load(f)
    try:
        return [
            ExternalInput(t_ps=int(d["t_ps"]), neuron_id=int(d["neuron_id"]),
                          amplitude=float(d["amplitude"]))
            for d in doc
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed stimulus file {path}: {exc}") from None


def save_stimulus(stimulus: list[ExternalInput], path) -> None:
    doc = [
        {"t_ps": s.t_ps, "neuron_id": s.neuron_id, "amplitude": s.amplitude}
        for s in stimulus
    ]
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


class _Sim:
    """Mutable run state; one instance per run() call.

    Edge and synapse attributes that the event loop touches per event are
    mirrored into parallel lists (including a cached per-edge efficacy
    magnitude, refreshed whenever plasticity changes a synapse), which keeps
    the hot path free of dataclass attribute chains.
    """

    def __init__(
        self,
        spec: NetworkSpec,
        seed: int,
        freeze_plasticity: bool,
        axon_latency: SimTime,
        queue_cap: int,
    ):
        self.spec = spec
        self.rng = RngStream(seed)
        self.axon_latency = axon_latency
        self.queue_cap = queue_cap
        self.efficiency = spec.detection_efficiency

        out_edges: list[list[int]] = [[] for _ in spec.neurons]
        for eid, e in enumerate(spec.edges):
            out_edges[e.pre].append(eid)
        self.neurons = [
            build_neuron_state(i, nspec, out_edges[i])
            for i, nspec in enumerate(spec.neurons)
        ]
        # runtime synapse copies; the spec itself is never mutated
        self.synapses = [copy.copy(s) for s in spec.synapses]
        for e in spec.edges:
            self.neurons[e.post].afferents.append(self.synapses[e.synapse_id])

        plast = spec.plasticity if not freeze_plasticity else None
        self.stdp: Optional[StdpRule] = getattr(plast, "stdp", None)
        self.stp: Optional[StpRule] = getattr(plast, "stp", None)
        self.plastic = self.stdp is not None or self.stp is not None
        # per-post-neuron afferent synapse ids, for pairings at fire time
        self.afferent_ids: list[list[int]] = [[] for _ in spec.neurons]
        for e in spec.edges:
            self.afferent_ids[e.post].append(e.synapse_id)

        # hot-path mirrors
        self.edge_post = [e.post for e in spec.edges]
        self.edge_sid = [e.synapse_id for e in spec.edges]
        self.edge_delay = [e.delay for e in spec.edges]
        self.edge_target = [e.target for e in spec.edges]
        self.weight_abs = [0.0] * len(spec.edges)
        self.sid_to_eid: dict[int, int] = {}
        for eid, e in enumerate(spec.edges):
            self.sid_to_eid[e.synapse_id] = eid
            s = self.synapses[e.synapse_id]
            self.weight_abs[eid] = abs(
                s.sign * s.w_max * s.stp_factor * s.level / (s.n_levels - 1)
            )
        self.flat = [len(ns.loops) == 1 for ns in self.neurons]
        self.soma_state = [ns.loops[SOMA] for ns in self.neurons]
        # decay constant: tau when finite else None (lossless loop)
        self.soma_tau = [
            ns.configs[SOMA].tau if math.isfinite(ns.configs[SOMA].tau) else None
            for ns in self.neurons
        ]

        self.queue: list[tuple[SimTime, int, int, int, float]] = []
        self.seq = 0
        self.log: list[tuple[SimTime, int]] = []
        self.events_processed = 0
        self.now: SimTime = 0

    def push(self, t: SimTime, kind: int, target: int, payload: float = 0.0) -> None:
        heapq.heappush(self.queue, (t, self.seq, kind, target, payload))
        self.seq += 1

    # -- plasticity hooks ---------------------------------------------------

    def _pair(self, s: SynapseState, delta_t: SimTime) -> None:
        """Cascade-gated level step for one nearest pre/post pairing
        (in-place mirror of plasticity.apply_pairing)."""
        rule = self.stdp
        direction = pairing_direction(rule, delta_t)
        if direction == 0:
            return
        p = s.p0 * s.chi**s.meta_depth
        if p < 1.0 and self.rng.random() >= p:
            return
        if s.prevail != 0 and direction != s.prevail:
            if s.meta_depth > 0:
                s.meta_depth -= 1
                return
            s.level = min(max(s.level + direction * rule.step, 0), s.n_levels - 1)
            s.prevail = direction
            return
        s.level = min(max(s.level + direction * rule.step, 0), s.n_levels - 1)
        s.prevail = direction
        s.meta_depth = min(s.meta_depth + 1, s.m_max)

    def _on_pre(self, s: SynapseState, eid: int, t: SimTime) -> None:
        """Short-term dynamics plus the depression-side pairing; refreshes
        the cached edge weight.  Called before the arrival charges the loop."""
        if self.stp is not None and s.last_pre is not None:
            s.stp_factor = stp_update(s, t - s.last_pre, self.stp).stp_factor
        if (
            self.stdp is not None
            and s.last_post is not None
            and (s.last_pre is None or s.last_post > s.last_pre)
        ):
            self._pair(s, s.last_post - t)
        self.weight_abs[eid] = abs(
            s.sign * s.w_max * s.stp_factor * s.level / (s.n_levels - 1)
        )

    # -- event handlers -----------------------------------------------------

    def _arrival(self, eid: int, count: int, t: SimTime) -> None:
        if self.efficiency < 1.0 and detect_photons(count, self.efficiency, self.rng) < 1:
            return
        sid = self.edge_sid[eid]
        s = self.synapses[sid]
        if self.plastic:
            self._on_pre(s, eid, t)
        s.last_pre = t
        nid = self.edge_post[eid]
        if self.flat[nid]:
            loop = self.soma_state[nid]
            tau = self.soma_tau[nid]
        else:
            ns = self.neurons[nid]
            target = self.edge_target[eid]
            loop = ns.loops[target]
            cfg_tau = ns.configs[target].tau
            tau = cfg_tau if math.isfinite(cfg_tau) else None
        dt = t - loop.last_update
        if dt > 0:
            if tau is not None:
                loop.value *= math.exp(-dt / tau)
            loop.last_update = t
        elif dt < 0:
            raise CausalityError(f"arrival at t={t} behind loop time {loop.last_update}")
        loop.value += self.weight_abs[eid]
        self._check(nid, t)

    def _check(self, nid: int, t: SimTime) -> None:
        ns = self.neurons[nid]
        if self.flat[nid]:
            loop = self.soma_state[nid]
            dt = t - loop.last_update
            if dt > 0:
                tau = self.soma_tau[nid]
                if tau is not None:
                    loop.value *= math.exp(-dt / tau)
                loop.last_update = t
            elif dt < 0:
                raise CausalityError(f"somatic loop of neuron {nid} ahead of t={t}")
            drive = loop.value
        else:
            drive = propagate_dendrites(ns, t)
        if t < ns.refractory_until or drive < ns.threshold:
            return
        # fire
        self.log.append((t, nid))
        self.soma_state[nid].value = 0.0
        ns.refractory_until = t + ns.spec.t_refractory
        self.push(ns.refractory_until, REFRACTORY_END, nid)
        if ns.gain > 0 and ns.out_edges:
            base, rem = divmod(ns.gain, len(ns.out_edges))
            t_emit = t + self.axon_latency
            edge_delay = self.edge_delay
            for i, eid in enumerate(ns.out_edges):
                c = base + 1 if i < rem else base
                if c > 0:
                    self.push(t_emit + edge_delay[eid], PHOTON_ARRIVAL, eid, c)
        if self.stdp is not None:
            for sid in self.afferent_ids[nid]:
                s = self.synapses[sid]
                if s.last_pre is not None and (s.last_post is None or s.last_pre > s.last_post):
                    self._pair(s, t - s.last_pre)
                    eid = self.sid_to_eid[sid]
                    self.weight_abs[eid] = abs(
                        s.sign * s.w_max * s.stp_factor * s.level / (s.n_levels - 1)
                    )
                s.last_post = t
        else:
            for sid in self.afferent_ids[nid]:
                self.synapses[sid].last_post = t
        if ns.homeo is not None:
            ns.homeo, ns.threshold = homeostatic_update(
                ns.spec, ns.homeo, t, ns.threshold, spiked=True
            )

    def _external(self, nid: int, amplitude: float, t: SimTime) -> None:
        loop = self.soma_state[nid]
        dt = t - loop.last_update
        if dt > 0:
            tau = self.soma_tau[nid]
            if tau is not None:
                loop.value *= math.exp(-dt / tau)
            loop.last_update = t
        loop.value += amplitude
        self._check(nid, t)

    # -- main loop ------------------------------------------------------------

    def run_until(self, t_end: SimTime, max_events: Optional[int]) -> str:
        queue = self.queue
        pop = heapq.heappop
        arrival = self._arrival
        check = self._check
        budget = max_events if max_events is not None else float("inf")
        cap = self.queue_cap
        while queue:
            if self.events_processed >= budget:
                return "max-events"
            t, _seq, kind, target, payload = pop(queue)
            if t > t_end:
                return "t-end"
            if t < self.now:
                raise CausalityError(f"event queue time went backward: {t} < {self.now}")
            self.now = t
            self.events_processed += 1
            if kind == PHOTON_ARRIVAL:
                arrival(target, int(payload), t)
            elif kind == REFRACTORY_END or kind == FIRE_CHECK:
                check(target, t)
            elif kind == EXTERNAL_INPUT:
                self._external(target, payload, t)
            else:  # pragma: no cover
                raise LookupError(f"unknown event kind {kind}")
            if len(queue) > cap:
                raise QueueOverflowError(
                    f"pending event queue exceeded cap {cap}",
                    result=self.result("queue-overflow"),
                )
        return "queue-empty"

    def snapshot(self) -> dict:
        neurons = []
        for ns in self.neurons:
            nd = {
                "threshold": ns.threshold,
                "refractory_until": ns.refractory_until,
                "loops": {
                    name: {"value": st.value, "last_update": st.last_update}
                    for name, st in ns.loops.items()
                },
            }
            if ns.homeo is not None:
                nd["r_bar"] = ns.homeo.r_bar
            neurons.append(nd)
        synapses = [
            {
                "level": s.level,
                "meta_depth": s.meta_depth,
                "stp_factor": s.stp_factor,
                "last_pre": s.last_pre,
                "last_post": s.last_post,
                "prevail": s.prevail,
            }
            for s in self.synapses
        ]
        return {
            "time": self.now,
            "neurons": neurons,
            "synapses": synapses,
            "rng": {"seed": self.rng.seed, "draws": self.rng.draws},
            "events_processed": self.events_processed,
            "spikes": len(self.log),
        }

    def result(self, stopped_on: str) -> RunResult:
        return RunResult(
            spikes=SpikeLog.from_records(self.log),
            state=self.snapshot(),
            events_processed=self.events_processed,
            final_time=self.now,
            stopped_on=stopped_on,
        )


def run(
    spec: NetworkSpec,
    stimulus: list[ExternalInput],
    t_end: SimTime,
    seed: int,
    *,
    freeze_plasticity: bool = False,
    axon_latency: SimTime = 0,
    max_events: Optional[int] = None,
    queue_cap: int = 10_000_000,
    skip_validation: bool = False,
) -> RunResult:
    """Simulate the network until the queue drains, ``t_end`` passes, or the
    event budget is exhausted.

    Deterministic: identical (spec, stimulus, seed) inputs give bit-identical
    spike logs.  Raises :class:`ValidationFailed` on an invalid spec and
    :class:`QueueOverflowError` (carrying the partial result) if the pending
    queue outgrows ``queue_cap``.
    """
    if t_end <= 0:
        raise ParameterError(f"t_end must be positive, got {t_end}")
    if not skip_validation:
        violations = validate_network(spec)
        if violations:
            raise ValidationFailed(violations)
    for st in stimulus:
        if st.t_ps >= t_end:
            raise ParameterError(
                f"stimulus at t={st.t_ps} is not before t_end={t_end}"
            )
        if not 0 <= st.neuron_id < len(spec.neurons):
            raise ParameterError(f"stimulus targets unknown neuron {st.neuron_id}")
        if st.t_ps < 0:
            raise ParameterError(f"stimulus at negative time {st.t_ps}")

    sim = _Sim(spec, seed, freeze_plasticity, axon_latency, queue_cap)
    for st in stimulus:
        sim.push(st.t_ps, EXTERNAL_INPUT, st.neuron_id, st.amplitude)
    stopped_on = sim.run_until(t_end, max_events)
    return sim.result(stopped_on)
