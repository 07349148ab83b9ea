import math

import pytest

from loopsim.core import ParameterError
from loopsim.scaling import (
    BIOLOGICAL,
    LIGHT_SPEED,
    OPTOELECTRONIC,
    PLANCK_H,
    SystemParams,
    photon_energy,
    pool_metric,
    pool_ratio,
    power_budget,
)


class TestPoolMetric:
    def test_identity(self):
        assert pool_metric(SystemParams(velocity=1.0, device_size=1.0)) == 1.0

    def test_square_law_in_velocity(self):
        base = pool_metric(SystemParams(velocity=3.0, device_size=0.25))
        doubled = pool_metric(SystemParams(velocity=6.0, device_size=0.25))
        assert doubled == 4 * base

    def test_biological_magnitude(self):
        # 2 m/s over 10 um devices: (2 / 1e-5)^2 = 4e10
        assert pool_metric(BIOLOGICAL) == 4e10

    def test_joint_scaling_invariance(self):
        a = pool_metric(SystemParams(velocity=3.7, device_size=1.3e-5))
        b = pool_metric(SystemParams(velocity=3.7 * 8, device_size=1.3e-5 * 8))
        assert a == b

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            pool_metric(SystemParams(velocity=0.0, device_size=1.0))
        with pytest.raises(ParameterError):
            pool_metric(SystemParams(velocity=1.0, device_size=0.0))


class TestPoolRatio:
    def test_equal_systems(self):
        p = SystemParams(velocity=5.0, device_size=2e-6)
        assert pool_ratio(p, p) == 1.0

    def test_trillion_fold_pool(self):
        # velocities 1e7 apart, devices 10x apart: exactly (1e7/10)^2 = 1e12
        assert pool_ratio(OPTOELECTRONIC, BIOLOGICAL) == 1.0e12

    def test_reciprocal(self):
        assert pool_ratio(BIOLOGICAL, OPTOELECTRONIC) == 1.0e-12

    def test_reciprocal_product_exact(self):
        pairs = [
            (OPTOELECTRONIC, BIOLOGICAL),
            (SystemParams(4.0, 0.5), SystemParams(2.0, 1.0)),
            (SystemParams(256.0, 2.0), SystemParams(8.0, 64.0)),
        ]
        for a, b in pairs:
            assert pool_ratio(a, b) * pool_ratio(b, a) == 1.0

    def test_huge_device_ratio_limit(self):
        a = SystemParams(velocity=1e7, device_size=1e30)
        b = SystemParams(velocity=1.0, device_size=1e-6)
        assert pool_ratio(a, b) < 1e-30


class TestPhotonEnergy:
    def test_telecom_wavelength(self):
        # hc / 1.55 um ~ 1.282e-19 J (~0.80 eV)
        e = photon_energy(1.55e-6)
        assert e == pytest.approx(1.282e-19, rel=1e-3)
        assert e / 1.602176634e-19 == pytest.approx(0.80, rel=1e-2)

    def test_inverse_proportionality(self):
        assert photon_energy(0.775e-6) == pytest.approx(2 * photon_energy(1.55e-6), rel=1e-12)

    def test_window_endpoints_factor_two(self):
        assert photon_energy(1.0e-6) == pytest.approx(2 * photon_energy(2.0e-6), rel=1e-12)

    def test_energy_wavelength_product_constant(self):
        hc = PLANCK_H * LIGHT_SPEED
        for lam in (1.0e-6, 1.31e-6, 1.55e-6, 2.0e-6):
            assert photon_energy(lam) * lam == pytest.approx(hc, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            photon_energy(0.0)


class TestPowerBudget:
    def test_zero_rate(self):
        assert power_budget(1e9, 0.0, 1e-12) == 0.0

    def test_megahertz_network_one_watt(self):
        # E inverted from the stated figures: 1 W / (1e6 * 2e7 Hz) = 5e-14 J
        assert power_budget(1e6, 2e7, 5e-14) == 1.0

    def test_linear_in_neuron_count(self):
        assert power_budget(2e6, 2e7, 5e-14) == 2 * power_budget(1e6, 2e7, 5e-14)

    def test_rejects_negative(self):
        with pytest.raises(ParameterError):
            power_budget(-1, 1.0, 1.0)


def test_wavelength_window_enforced_on_params():
    with pytest.raises(ParameterError):
        SystemParams(velocity=1.0, device_size=1.0, wavelength=0.5e-6).check()
    SystemParams(velocity=1.0, device_size=1.0, wavelength=1.55e-6).check()
