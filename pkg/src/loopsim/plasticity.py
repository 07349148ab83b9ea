"""Synaptic state evolution: timing-dependent level steps, cascade
metaplasticity, short-term presynaptic modulation, and slow homeostatic
threshold adaptation.

All operations are pure state transitions on per-synapse (or per-neuron)
values; the event engine invokes them at pre/post pairing times.  Level
updates are discrete: one candidate step per nearest pre/post pairing,
applied with probability ``p0 * chi**meta_depth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .core import HomeostasisConfig, NeuronSpec, RngStream, SimTime, SynapseState

__all__ = [
    "StdpRule",
    "StpRule",
    "HomeostasisState",
    "PlasticityConfig",
    "stdp_update",
    "metaplastic_update",
    "stp_update",
    "homeostatic_update",
    "apply_pairing",
    "pairing_direction",
]

# 10 ns windows sit comfortably inside the >= 50 ns inter-spike intervals
# that a 20 MHz peak rate allows.
DEFAULT_WINDOW = 10_000  # ps


@dataclass
class StdpRule:
    """Rectangular timing windows for level steps.

    A pairing with ``0 < dt <= t_plus`` is a potentiation candidate and one
    with ``-t_minus <= dt < 0`` a depression candidate (``dt = t_post -
    t_pre``, nearest-spike pairing).  ``dt = 0`` or out-of-window pairings
    do nothing.
    """

    t_plus: SimTime = DEFAULT_WINDOW
    t_minus: SimTime = DEFAULT_WINDOW
    step: int = 1


@dataclass
class StpRule:
    """Short-term modulation of the presynaptic factor.

    Each presynaptic spike multiplies the factor by ``d`` and the factor
    then relaxes toward 1 with time constant ``tau``.  ``d < 1`` is
    depression, ``d > 1`` facilitation (clamped at ``cap``).
    """

    d: float = 0.5
    tau: float = 100_000.0  # ps
    cap: float = 2.0


@dataclass
class PlasticityConfig:
    """Plasticity block of a network spec.

    ``stp`` is the network default; individual synapses can opt out (or use
    a different rule) through per-edge overrides at network build time.
    """

    stdp: Optional[StdpRule] = None
    stp: Optional[StpRule] = None

    def to_dict(self) -> dict:
        d: dict = {}
        if self.stdp is not None:
            d["stdp"] = {
                "t_plus": self.stdp.t_plus,
                "t_minus": self.stdp.t_minus,
                "step": self.stdp.step,
            }
        if self.stp is not None:
            d["stp"] = {"d": self.stp.d, "tau": self.stp.tau, "cap": self.stp.cap}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlasticityConfig":
        stdp = None
        if "stdp" in d:
            s = d["stdp"]
            stdp = StdpRule(
                t_plus=int(s.get("t_plus", DEFAULT_WINDOW)),
                t_minus=int(s.get("t_minus", DEFAULT_WINDOW)),
                step=int(s.get("step", 1)),
            )
        stp = None
        if "stp" in d:
            s = d["stp"]
            stp = StpRule(
                d=float(s.get("d", 0.5)),
                tau=float(s.get("tau", 100_000.0)),
                cap=float(s.get("cap", 2.0)),
            )
        return cls(stdp=stdp, stp=stp)


@dataclass
class HomeostasisState:
    """Exponentially averaged post-synaptic rate, updated at spike times."""

    r_bar: float = 0.0  # Hz
    last_update: SimTime = 0


def pairing_direction(rule: StdpRule, delta_t: SimTime) -> int:
    """Candidate step direction for a pairing: +1, -1, or 0 (no candidate)."""
    if 0 < delta_t <= rule.t_plus:
        return 1
    if -rule.t_minus <= delta_t < 0:
        return -1
    return 0


def _clamp_level(level: int, n_levels: int) -> int:
    return min(max(level, 0), n_levels - 1)


def stdp_update(
    s: SynapseState, rule: StdpRule, delta_t: SimTime, rng: RngStream
) -> SynapseState:
    """One nearest-pair timing update.

    ``delta_t = t_post - t_pre``.  In-window pairings are candidates for a
    ``step``-level change applied with probability ``p0 * chi**meta_depth``;
    the level clamps to [0, n_levels - 1].  Out-of-window or zero ``delta_t``
    leaves the synapse untouched (and draws nothing).
    """
    direction = pairing_direction(rule, delta_t)
    if direction == 0:
        return s
    p = s.p0 * s.chi**s.meta_depth
    if p < 1.0 and rng.random() >= p:
        return s
    return replace(
        s, level=_clamp_level(s.level + direction * rule.step, s.n_levels), prevail=direction
    )


def metaplastic_update(
    s: SynapseState, applied: bool, direction_agrees: bool
) -> SynapseState:
    """Cascade depth transition following a level-update decision.

    An update applied in the prevailing direction pushes the synapse one
    step deeper (its transition probability shrinks by ``chi``); a candidate
    opposing the prevailing direction pulls it one step shallower.
    """
    if not applied:
        return s
    if direction_agrees:
        return replace(s, meta_depth=min(s.meta_depth + 1, s.m_max))
    return replace(s, meta_depth=max(s.meta_depth - 1, 0))


def apply_pairing(
    s: SynapseState, rule: StdpRule, delta_t: SimTime, rng: RngStream
) -> SynapseState:
    """Full cascade-gated pairing: the transition the engine applies.

    A candidate that passes the probability gate and agrees with the
    prevailing direction steps the level and deepens the cascade.  An
    opposing candidate must first climb back out: while ``meta_depth > 0``
    it only decrements the depth, and the level can change only once the
    depth has reached 0 (the synapse then switches sides).
    """
    direction = pairing_direction(rule, delta_t)
    if direction == 0:
        return s
    p = s.p0 * s.chi**s.meta_depth
    if p < 1.0 and rng.random() >= p:
        return s
    if s.prevail != 0 and direction != s.prevail:
        if s.meta_depth > 0:
            return metaplastic_update(s, applied=True, direction_agrees=False)
        return replace(
            s, level=_clamp_level(s.level + direction * rule.step, s.n_levels), prevail=direction
        )
    stepped = replace(
        s, level=_clamp_level(s.level + direction * rule.step, s.n_levels), prevail=direction
    )
    return metaplastic_update(stepped, applied=True, direction_agrees=True)


def stp_update(s: SynapseState, inter_spike_interval: float, rule: StpRule) -> SynapseState:
    """Advance the short-term factor across one presynaptic interval.

    The stored factor is the value in effect at the previous spike; the new
    value applies the per-spike multiplicative jump ``d`` and the recovery
    toward 1 over ``inter_spike_interval``:

        f <- 1 - (1 - f * d) * exp(-ISI / tau)

    ``d < 1`` recovers upward (depression), ``d > 1`` decays downward from
    above (facilitation, clamped at ``rule.cap``).
    """
    if inter_spike_interval < 0:
        raise ValueError(f"negative inter-spike interval {inter_spike_interval}")
    f = 1.0 - (1.0 - s.stp_factor * rule.d) * math.exp(-inter_spike_interval / rule.tau)
    return replace(s, stp_factor=min(f, rule.cap))


def homeostatic_update(
    neuron: NeuronSpec,
    h: HomeostasisState,
    t: SimTime,
    threshold: float,
    spiked: bool = True,
) -> tuple[HomeostasisState, float]:
    """Update the averaged rate at a post-synaptic spike and adapt the
    threshold toward the target rate.

    The rate average decays with ``tau_avg`` and gains ``1/tau_avg`` per
    spike (so a steady train at rate r settles at ``r_bar ~ r``).  Returns
    the new averaging state and the adjusted threshold, clamped to
    [theta_min, theta_max].
    """
    cfg = neuron.homeostasis
    if cfg is None:
        return h, threshold
    dt = t - h.last_update
    if dt < 0:
        raise ValueError(f"homeostasis update moving backward in time ({dt} ps)")
    r_bar = h.r_bar * math.exp(-dt / cfg.tau_avg)
    if spiked:
        r_bar += 1e12 / cfg.tau_avg  # one spike, tau_avg in ps -> Hz
    new_threshold = threshold * (1.0 + cfg.kappa * (r_bar - cfg.r_target) / cfg.r_target)
    new_threshold = min(max(new_threshold, cfg.theta_min), cfg.theta_max)
    return HomeostasisState(r_bar=r_bar, last_update=t), new_threshold
