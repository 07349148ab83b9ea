"""Shared domain types and unit conventions for loop-neuron networks.

Conventions used across the package:

* Time is an integer number of picoseconds (``SimTime``).  Event ordering
  is exact and platform independent; Python integers never wrap.
* Loop currents, thresholds and synaptic efficacies are dimensionless
  "signal units".  No physical-unit circuit quantities (henries, ohms,
  amperes) appear anywhere in the model.
* 2-D positions are in micrometers, signal velocities in m/s.
* Every stochastic operation draws from an explicit :class:`RngStream`;
  the same seed and the same event sequence always reproduce the same
  draws.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

__all__ = [
    "SimTime",
    "PS",
    "NS",
    "US",
    "MS",
    "LoopsimError",
    "ParameterError",
    "CausalityError",
    "StructuralError",
    "ValidationFailed",
    "QueueOverflowError",
    "InsufficientDataError",
    "UndefinedIndexError",
    "SpikeLog",
    "MODE_PASS",
    "MODE_FIRE",
    "SOMA",
    "LoopConfig",
    "LoopState",
    "SynapseState",
    "DendriteSpec",
    "HomeostasisConfig",
    "NeuronSpec",
    "Edge",
    "NetworkSpec",
    "RngStream",
    "Violation",
    "effective_weight",
    "transition_probability",
    "validate_network",
    "edge_delay_ps",
    "round_half_up",
    "network_to_json",
    "network_from_json",
    "save_network",
    "load_network",
]

SimTime = int  # integer picoseconds

PS = 1
NS = 1_000
US = 1_000_000
MS = 1_000_000_000


class LoopsimError(Exception):
    """Base class for all package errors."""


class ParameterError(LoopsimError, ValueError):
    """A caller-supplied parameter is invalid or infeasible."""


class CausalityError(LoopsimError):
    """An operation tried to move a state backward in time."""


class StructuralError(LoopsimError):
    """A dendritic tree or network structure is malformed (e.g. cyclic)."""


class ValidationFailed(LoopsimError):
    """A network spec failed validation; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"{len(self.violations)} violation(s): {lines}{more}")


class QueueOverflowError(LoopsimError):
    """The pending event queue exceeded its cap; carries the partial result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InsufficientDataError(LoopsimError, ValueError):
    """Not enough (or degenerate) data for a statistical estimate."""


class UndefinedIndexError(LoopsimError, ValueError):
    """A summary index is undefined for this input (e.g. silent trains)."""

MODE_PASS = "accumulate-passthrough"
MODE_FIRE = "threshold-fire"

SOMA = "soma"  # reserved id of the root integration loop

DEFAULT_N_LEVELS = 200
DEFAULT_VELOCITY = 2.0e7  # m/s
DEFAULT_TAU = 200.0 * NS
DEFAULT_T_REFRACTORY = 50 * NS

SCHEMA_VERSION = 1


@dataclass
class LoopConfig:
    """Static parameters of one integration loop.

    ``tau`` is the decay time constant in picoseconds (``math.inf`` gives a
    lossless loop).  ``threshold`` is required for ``threshold-fire`` loops
    and ignored for pass loops.  ``sign`` is the coupling sign of this
    loop's contribution into its parent.
    """

    tau: float = DEFAULT_TAU
    threshold: Optional[float] = None
    mode: str = MODE_PASS
    sign: int = 1


@dataclass(slots=True)
class LoopState:
    """Instantaneous state of a loop: stored signal and when it was valid."""

    value: float = 0.0
    last_update: SimTime = 0


@dataclass
class SynapseState:
    """State of one multi-level plastic synapse.

    ``level`` indexes ``n_levels`` discrete efficacy steps; the efficacy map
    is linear (``effective_weight``).  ``meta_depth`` is the cascade depth:
    each step multiplies the transition probability by ``chi``, which is how
    the synapse stabilises its memory.  ``prevail`` records the direction of
    the last applied update (+1, -1, or 0 before any update) and decides
    whether a new candidate agrees with or opposes the cascade.
    """

    level: int
    n_levels: int = DEFAULT_N_LEVELS
    sign: int = 1
    w_max: float = 1.0
    meta_depth: int = 0
    m_max: int = 5
    p0: float = 1.0
    chi: float = 0.5
    stp_factor: float = 1.0
    last_pre: Optional[SimTime] = None
    last_post: Optional[SimTime] = None
    prevail: int = 0


@dataclass
class DendriteSpec:
    """One non-root node of a neuron's dendritic tree."""

    id: str
    parent: str  # SOMA or the id of another dendrite
    loop: LoopConfig = field(default_factory=LoopConfig)


@dataclass
class HomeostasisConfig:
    """Slow threshold adaptation toward a target firing rate."""

    r_target: float  # Hz
    tau_avg: float  # ps
    kappa: float
    theta_min: float = 1e-9
    theta_max: float = 1e9


@dataclass
class NeuronSpec:
    """Static description of one loop neuron.

    The dendritic tree is rooted at the somatic loop (``soma``); dendrites
    reference their parent by id.  Synapses attach to leaves of this tree.
    ``gain`` is the number of photons emitted per firing; ``None`` defaults
    to the neuron's out-degree (one photon per downstream connection).
    """

    position: tuple[float, float] = (0.0, 0.0)  # micrometers
    soma: LoopConfig = field(default_factory=LoopConfig)
    dendrites: list[DendriteSpec] = field(default_factory=list)
    threshold: float = 1.0
    gain: Optional[int] = None
    t_refractory: SimTime = DEFAULT_T_REFRACTORY
    homeostasis: Optional[HomeostasisConfig] = None


@dataclass
class Edge:
    """Directed connection pre -> post carrying photon pulses.

    ``delay`` must equal the light-travel time between the endpoint
    positions rounded to integer picoseconds plus ``extra_latency``.
    ``target`` names the leaf loop of the post neuron the synapse feeds.
    """

    pre: int
    post: int
    synapse_id: int
    delay: SimTime
    target: str = SOMA
    extra_latency: SimTime = 0
    autapse: bool = False


@dataclass
class NetworkSpec:
    """A complete network: neurons, directed edges, synapses, globals."""

    neurons: list[NeuronSpec]
    edges: list[Edge]
    synapses: list[SynapseState]
    signal_velocity: float = DEFAULT_VELOCITY  # m/s
    detection_efficiency: float = 1.0
    plasticity: Optional[object] = None  # plasticity.PlasticityConfig
    meta: dict = field(default_factory=dict)

    @property
    def n_neurons(self) -> int:
        return len(self.neurons)


class RngStream:
    """Deterministic pseudo-random stream with a draw counter.

    Identical seed and identical draw sequence reproduce identical values.
    The counter is informational (it lets state snapshots record how much
    entropy a run consumed).
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self.draws = 0
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def binomial(self, n: int, p: float) -> int:
        self.draws += 1
        return int(self._gen.binomial(n, p))

    def integers(self, low: int, high: int) -> int:
        """Uniform integer in [low, high)."""
        self.draws += 1
        return int(self._gen.integers(low, high))

    def derive(self, index: int) -> "RngStream":
        """Independent stream for trial ``index`` (seed + index convention)."""
        return RngStream(self.seed + int(index))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, draws={self.draws})"


def effective_weight(s: SynapseState) -> float:
    """Signed synaptic efficacy: sign * w_max * stp_factor * level/(n_levels-1)."""
    return s.sign * s.w_max * s.stp_factor * s.level / (s.n_levels - 1)


def transition_probability(s: SynapseState) -> float:
    """Probability that a plasticity candidate is applied: p0 * chi^meta_depth."""
    return s.p0 * s.chi**s.meta_depth


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero toward +inf."""
    return math.floor(x + 0.5)


def edge_delay_ps(
    pos_a: tuple[float, float],
    pos_b: tuple[float, float],
    velocity: float,
    extra_latency: SimTime = 0,
) -> SimTime:
    """Light-travel delay between two positions (um) at ``velocity`` (m/s)."""
    dist_um = math.hypot(pos_a[0] - pos_b[0], pos_a[1] - pos_b[1])
    # um / (m/s) -> s is 1e-6; to ps is 1e12; net factor 1e6
    return round_half_up(dist_um * 1e6 / velocity) + extra_latency


@dataclass
class Violation:
    """One broken invariant: which entity, which rule, and what happened."""

    entity: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.entity}: [{self.rule}] {self.detail}"


def _tree_nodes(neuron: NeuronSpec) -> dict[str, DendriteSpec]:
    return {d.id: d for d in neuron.dendrites}


def _coupling_sign(neuron: NeuronSpec, target: str) -> Optional[int]:
    """Net sign a signal entering ``target`` carries by the time it reaches
    the soma: the product of loop signs along the parent chain.  None if the
    chain is broken or cyclic."""
    nodes = _tree_nodes(neuron)
    sign = 1
    seen = set()
    cur = target
    while cur != SOMA:
        if cur in seen or cur not in nodes:
            return None
        seen.add(cur)
        sign *= nodes[cur].loop.sign
        cur = nodes[cur].parent
    return sign


def validate_network(spec: NetworkSpec) -> list[Violation]:
    """Check every structural invariant of a network.

    Returns an empty list iff the spec is well formed.  Violations are data,
    not exceptions: an invalid spec is representable so that it can be
    reported entity by entity.
    """
    out: list[Violation] = []
    n = len(spec.neurons)

    def bad(entity, rule, detail):
        out.append(Violation(entity, rule, detail))

    if not spec.signal_velocity > 0:
        bad("network", "velocity-positive", f"signal_velocity={spec.signal_velocity}")
    if not 0.0 < spec.detection_efficiency <= 1.0:
        bad(
            "network",
            "efficiency-range",
            f"detection_efficiency={spec.detection_efficiency} not in (0, 1]",
        )

    for i, nr in enumerate(spec.neurons):
        ent = f"neuron[{i}]"
        if not nr.threshold > 0:
            bad(ent, "threshold-positive", f"threshold={nr.threshold}")
        if nr.gain is not None and nr.gain < 0:
            bad(ent, "gain-nonnegative", f"gain={nr.gain}")
        if nr.t_refractory < 0:
            bad(ent, "refractory-nonnegative", f"t_refractory={nr.t_refractory}")
        if len(nr.position) != 2:
            bad(ent, "position-2d", f"position={nr.position!r}")

        loops = [("soma", nr.soma)] + [(d.id, d.loop) for d in nr.dendrites]
        for name, cfg in loops:
            lent = f"{ent}.{name}"
            if not cfg.tau > 0:
                bad(lent, "tau-positive", f"tau={cfg.tau}")
            if cfg.mode not in (MODE_PASS, MODE_FIRE):
                bad(lent, "mode-valid", f"mode={cfg.mode!r}")
            if cfg.mode == MODE_FIRE and not (cfg.threshold or 0) > 0:
                bad(lent, "threshold-positive", f"threshold={cfg.threshold}")
            if cfg.sign not in (1, -1):
                bad(lent, "sign-valid", f"sign={cfg.sign}")

        # tree structure: ids unique, parents resolve, no cycles
        ids = [d.id for d in nr.dendrites]
        if len(ids) != len(set(ids)) or SOMA in ids:
            bad(ent, "tree-ids-unique", f"dendrite ids {ids}")
        nodes = _tree_nodes(nr)
        for d in nr.dendrites:
            if d.parent != SOMA and d.parent not in nodes:
                bad(f"{ent}.{d.id}", "tree-parent-exists", f"parent={d.parent!r}")
            if _coupling_sign(nr, d.id) is None:
                bad(f"{ent}.{d.id}", "tree-acyclic", "parent chain does not reach soma")

        if nr.homeostasis is not None:
            h = nr.homeostasis
            if not h.r_target > 0 or not h.tau_avg > 0:
                bad(ent, "homeostasis-params", f"r_target={h.r_target}, tau_avg={h.tau_avg}")

    for j, s in enumerate(spec.synapses):
        ent = f"synapse[{j}]"
        if s.n_levels < 2:
            bad(ent, "n-levels-min", f"n_levels={s.n_levels}")
        if not 0 <= s.level <= s.n_levels - 1:
            bad(ent, "level-range", f"level={s.level} not in [0, {s.n_levels - 1}]")
        if s.sign not in (1, -1):
            bad(ent, "sign-valid", f"sign={s.sign}")
        if not 0.0 < s.p0 <= 1.0:
            bad(ent, "p0-range", f"p0={s.p0}")
        if not 0.0 < s.chi < 1.0:
            bad(ent, "chi-range", f"chi={s.chi}")
        if not 0 <= s.meta_depth <= s.m_max:
            bad(ent, "meta-depth-range", f"meta_depth={s.meta_depth}, m_max={s.m_max}")
        if s.stp_factor < 0:
            bad(ent, "stp-nonnegative", f"stp_factor={s.stp_factor}")

    seen_syn = set()
    for k, e in enumerate(spec.edges):
        ent = f"edge[{k}]"
        if not (0 <= e.pre < n and 0 <= e.post < n):
            bad(ent, "endpoints-exist", f"pre={e.pre}, post={e.post}, n={n}")
            continue
        if e.pre == e.post and not e.autapse:
            bad(ent, "no-self-edge", "self edge without autapse flag")
        if not 0 <= e.synapse_id < len(spec.synapses):
            bad(ent, "synapse-exists", f"synapse_id={e.synapse_id}")
            continue
        if e.synapse_id in seen_syn:
            bad(ent, "synapse-unique", f"synapse_id={e.synapse_id} reused")
        seen_syn.add(e.synapse_id)

        post = spec.neurons[e.post]
        expected = edge_delay_ps(
            spec.neurons[e.pre].position, post.position, spec.signal_velocity, e.extra_latency
        )
        if e.delay != expected:
            bad(ent, "delay-consistent", f"delay={e.delay}, distance/velocity gives {expected}")

        nodes = _tree_nodes(post)
        if e.target != SOMA and e.target not in nodes:
            bad(ent, "target-exists", f"target={e.target!r} not in neuron[{e.post}] tree")
            continue
        csign = _coupling_sign(post, e.target)
        if csign is not None and spec.synapses[e.synapse_id].sign != csign:
            bad(
                ent,
                "sign-coupling",
                f"synapse sign {spec.synapses[e.synapse_id].sign} but coupling path gives {csign}",
            )

    return out


# --------------------------------------------------------------------------
# JSON serialization.  Field names follow the type definitions; all times
# are integer picoseconds.  Schema documented in the README.
# --------------------------------------------------------------------------


def _loop_to_json(cfg: LoopConfig) -> dict:
    d = {"tau": cfg.tau if math.isfinite(cfg.tau) else "inf", "mode": cfg.mode, "sign": cfg.sign}
    if cfg.threshold is not None:
        d["threshold"] = cfg.threshold
    return d


def _loop_from_json(d: dict) -> LoopConfig:
    tau = d.get("tau", DEFAULT_TAU)
    return LoopConfig(
        tau=math.inf if tau == "inf" else float(tau),
        threshold=d.get("threshold"),
        mode=d.get("mode", MODE_PASS),
        sign=int(d.get("sign", 1)),
    )


def network_to_json(spec: NetworkSpec) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "signal_velocity": spec.signal_velocity,
        "detection_efficiency": spec.detection_efficiency,
        "neurons": [],
        "edges": [],
        "synapses": [],
        "meta": spec.meta,
    }
    for nr in spec.neurons:
        nd = {
            "position": list(nr.position),
            "dendrite_tree": {
                "soma": _loop_to_json(nr.soma),
                "dendrites": [
                    {"id": d.id, "parent": d.parent, **_loop_to_json(d.loop)}
                    for d in nr.dendrites
                ],
            },
            "threshold": nr.threshold,
            "gain": nr.gain,
            "t_refractory": nr.t_refractory,
        }
        if nr.homeostasis is not None:
            h = nr.homeostasis
            nd["homeostasis"] = {
                "r_target": h.r_target,
                "tau_avg": h.tau_avg,
                "kappa": h.kappa,
                "theta_min": h.theta_min,
                "theta_max": h.theta_max,
            }
        doc["neurons"].append(nd)
    for e in spec.edges:
        ed = {"pre": e.pre, "post": e.post, "synapse_id": e.synapse_id, "delay": e.delay}
        if e.target != SOMA:
            ed["target"] = e.target
        if e.extra_latency:
            ed["extra_latency"] = e.extra_latency
        if e.autapse:
            ed["autapse"] = True
        doc["edges"].append(ed)
    for s in spec.synapses:
        doc["synapses"].append(
            {
                "level": s.level,
                "n_levels": s.n_levels,
                "sign": s.sign,
                "w_max": s.w_max,
                "meta_depth": s.meta_depth,
                "m_max": s.m_max,
                "p0": s.p0,
                "chi": s.chi,
                "stp_factor": s.stp_factor,
                "last_pre": s.last_pre,
                "last_post": s.last_post,
                "prevail": s.prevail,
            }
        )
    if spec.plasticity is not None:
        doc["plasticity"] = spec.plasticity.to_dict()
    return doc


def network_from_json(doc: dict) -> NetworkSpec:
    neurons = []
    for nd in doc["neurons"]:
        tree = nd.get("dendrite_tree", {})
        dendrites = [
            DendriteSpec(id=dd["id"], parent=dd["parent"], loop=_loop_from_json(dd))
            for dd in tree.get("dendrites", [])
        ]
        h = None
        if nd.get("homeostasis") is not None:
            hd = nd["homeostasis"]
            h = HomeostasisConfig(
                r_target=float(hd["r_target"]),
                tau_avg=float(hd["tau_avg"]),
                kappa=float(hd["kappa"]),
                theta_min=float(hd.get("theta_min", 1e-9)),
                theta_max=float(hd.get("theta_max", 1e9)),
            )
        neurons.append(
            NeuronSpec(
                position=tuple(nd.get("position", (0.0, 0.0))),
                soma=_loop_from_json(tree.get("soma", {})),
                dendrites=dendrites,
                threshold=float(nd.get("threshold", 1.0)),
                gain=nd.get("gain"),
                t_refractory=int(nd.get("t_refractory", DEFAULT_T_REFRACTORY)),
                homeostasis=h,
            )
        )
    edges = [
        Edge(
            pre=int(ed["pre"]),
            post=int(ed["post"]),
            synapse_id=int(ed["synapse_id"]),
            delay=int(ed["delay"]),
            target=ed.get("target", SOMA),
            extra_latency=int(ed.get("extra_latency", 0)),
            autapse=bool(ed.get("autapse", False)),
        )
        for ed in doc["edges"]
    ]
    synapses = [
        SynapseState(
            level=int(sd["level"]),
            n_levels=int(sd.get("n_levels", DEFAULT_N_LEVELS)),
            sign=int(sd.get("sign", 1)),
            w_max=float(sd.get("w_max", 1.0)),
            meta_depth=int(sd.get("meta_depth", 0)),
            m_max=int(sd.get("m_max", 5)),
            p0=float(sd.get("p0", 1.0)),
            chi=float(sd.get("chi", 0.5)),
            stp_factor=float(sd.get("stp_factor", 1.0)),
            last_pre=sd.get("last_pre"),
            last_post=sd.get("last_post"),
            prevail=int(sd.get("prevail", 0)),
        )
        for sd in doc["synapses"]
    ]
    plast = None
    if doc.get("plasticity") is not None:
        from .plasticity import PlasticityConfig

        plast = PlasticityConfig.from_dict(doc["plasticity"])
    return NetworkSpec(
        neurons=neurons,
        edges=edges,
        synapses=synapses,
        signal_velocity=float(doc.get("signal_velocity", DEFAULT_VELOCITY)),
        detection_efficiency=float(doc.get("detection_efficiency", 1.0)),
        plasticity=plast,
        meta=doc.get("meta", {}),
    )


def save_network(spec: NetworkSpec, path) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(network_to_json(spec), f, indent=2)
        f.write("\n")


def load_network(path) -> NetworkSpec:
    with open(path) as f:
        return network_from_json(json.load(f))


def copy_synapse(s: SynapseState) -> SynapseState:
    return replace(s)


# --------------------------------------------------------------------------
# Spike logs: the substrate for all analysis.
# --------------------------------------------------------------------------

SPIKE_CSV_HEADER = "t_ps,neuron_id"


@dataclass
class SpikeLog:
    """Ordered firing records: parallel arrays of times (ps) and neuron ids."""

    times: np.ndarray
    neurons: np.ndarray

    @classmethod
    def from_records(cls, records) -> "SpikeLog":
        if len(records) == 0:
            return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        arr = np.asarray(records, dtype=np.int64)
        return cls(arr[:, 0].copy(), arr[:, 1].copy())

    def __len__(self) -> int:
        return len(self.times)

    def neuron_times(self, neuron_id: int) -> np.ndarray:
        return self.times[self.neurons == neuron_id]

    def to_csv(self, path) -> None:
        """Write `t_ps,neuron_id` lines, ascending time, LF endings."""
        with open(path, "w", newline="\n") as f:
            f.write(SPIKE_CSV_HEADER + "\n")
            for t, nid in zip(self.times.tolist(), self.neurons.tolist()):
                f.write(f"{t},{nid}\n")

    @classmethod
    def from_csv(cls, path) -> "SpikeLog":
        times: list[int] = []
        neurons: list[int] = []
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                if lineno == 1 and line == SPIKE_CSV_HEADER:
                    continue
                parts = line.split(",")
                try:
                    if len(parts) != 2:
                        raise ValueError
                    t, nid = int(parts[0]), int(parts[1])
                except ValueError:
                    raise ParameterError(
                        f"malformed spike CSV line {lineno}: {line!r}"
                    ) from None
                times.append(t)
                neurons.append(nid)
        return cls(np.asarray(times, dtype=np.int64), np.asarray(neurons, dtype=np.int64))
