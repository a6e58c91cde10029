"""Shared fixtures: the expensive full-cycle runs are computed once per session."""

import pytest

import loadcycle


@pytest.fixture(scope="session")
def reference_raw():
    return loadcycle.reference_config()


@pytest.fixture(scope="session")
def reference_cfg(reference_raw):
    return loadcycle.build_sim_config(reference_raw)


@pytest.fixture(scope="session")
def reference_run(reference_cfg):
    """(log, metrics) of the calibrated reference cycle."""
    return loadcycle.run_cycle(reference_cfg)


@pytest.fixture(scope="session")
def weak_converter_run():
    """Same machine with the torque converter capacity scaled to 0.8."""
    raw = loadcycle.reference_config()
    raw["converter"]["capacity_scale"] = 0.8
    return loadcycle.run_cycle(loadcycle.build_sim_config(raw))


@pytest.fixture(scope="session")
def traction_disabled_run():
    """Reference machine with both traction rules pushed out of reach."""
    raw = loadcycle.reference_config()
    raw["operator"]["slip_cap_low"] = 1.0e6
    raw["operator"]["slip_cap_high"] = 2.0e6
    raw["operator"]["slip_integral_low"] = 1.0e6
    raw["operator"]["slip_integral_high"] = 2.0e6
    return loadcycle.run_cycle(loadcycle.build_sim_config(raw))


@pytest.fixture(scope="session")
def half_dt_run():
    """Reference cycle integrated at half the time step."""
    raw = loadcycle.reference_config()
    raw["sim"]["dt"] = raw["sim"]["dt"] / 2.0
    return loadcycle.run_cycle(loadcycle.build_sim_config(raw))
