"""Closed-form calculators for light-speed scaling arguments.

The key quantity is the neuronal-pool metric (v/w)^2: with predominantly
two-dimensional long-range connectivity, the number of neurons able to
take part in one synchronized dynamical state grows as the square of the
signal velocity over the device size.  Ratios of this metric compare
hardware platforms; the remaining calculators cover photon energy and
network power budgets.

Inputs are interpreted through their shortest decimal representation and
evaluated in exact rational arithmetic, so round decimal parameters give
round answers (the bio vs. optical comparison is exactly 1e12, not
0.9999...e12).
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Optional

from .core import ParameterError

__all__ = [
    "PLANCK_H",
    "LIGHT_SPEED",
    "SystemParams",
    "BIOLOGICAL",
    "OPTOELECTRONIC",
    "pool_metric",
    "pool_ratio",
    "photon_energy",
    "power_budget",
]

PLANCK_H = 6.62607015e-34  # J s (exact, 2019 SI)
LIGHT_SPEED = 299792458.0  # m/s (exact)

WAVELENGTH_MIN = 1.0e-6  # telecom-adjacent emission window
WAVELENGTH_MAX = 2.0e-6


@dataclass(frozen=True)
class SystemParams:
    """Physical scaling parameters of one hardware platform."""

    velocity: float  # m/s
    device_size: float  # m
    wavelength: Optional[float] = None  # m, for photon-energy accounting

    def check(self) -> None:
        if not self.velocity > 0:
            raise ParameterError(f"velocity must be positive, got {self.velocity}")
        if not self.device_size > 0:
            raise ParameterError(f"device_size must be positive, got {self.device_size}")
        if self.wavelength is not None and not (
            WAVELENGTH_MIN <= self.wavelength <= WAVELENGTH_MAX
        ):
            raise ParameterError(
                f"wavelength {self.wavelength} m outside "
                f"[{WAVELENGTH_MIN}, {WAVELENGTH_MAX}] m"
            )


# cortical signalling: ~2 m/s conduction over ~10 um devices
BIOLOGICAL = SystemParams(velocity=2.0, device_size=10e-6)
# waveguide signalling seven orders of magnitude faster over ~100 um devices
OPTOELECTRONIC = SystemParams(velocity=2.0e7, device_size=100e-6, wavelength=1.55e-6)


def _exact(x: float) -> Fraction:
    """The rational a decimal-entered float denotes (shortest repr)."""
    return Fraction(Decimal(repr(float(x))))


def _metric_fraction(p: SystemParams) -> Fraction:
    p.check()
    return (_exact(p.velocity) / _exact(p.device_size)) ** 2


def pool_metric(p: SystemParams) -> float:
    """(velocity / device_size)^2: a relative pool-size metric, not an
    absolute neuron count."""
    return float(_metric_fraction(p))


def pool_ratio(a: SystemParams, b: SystemParams) -> float:
    """pool_metric(a) / pool_metric(b), evaluated exactly before rounding.

    With the default platform presets this is exactly 1e12: optical
    signals a factor 1e7 faster than cortex with devices a factor 10
    larger gives (1e7 / 10)^2.
    """
    return float(_metric_fraction(a) / _metric_fraction(b))


def photon_energy(wavelength: float) -> float:
    """Photon energy h*c / wavelength in joules."""
    if not wavelength > 0:
        raise ParameterError(f"wavelength must be positive, got {wavelength}")
    return PLANCK_H * LIGHT_SPEED / wavelength


def power_budget(n_neurons: float, mean_rate: float, energy_per_firing: float) -> float:
    """Total dissipated power n * rate * E in watts.

    A million neurons at a 20 MHz mean rate and 5e-14 J per firing event
    dissipate exactly 1 W.
    """
    if n_neurons < 0 or mean_rate < 0 or energy_per_firing < 0:
        raise ParameterError("power budget inputs must be nonnegative")
    return n_neurons * mean_rate * energy_per_firing
