import json

import numpy as np
import pytest

from wgstab.scenarios import (
    SCENARIOS,
    ConfigError,
    dark_population_rate,
    default_config,
    run,
    scenario_config,
    validate_config,
)

SMALL_GRID = {"rabi_hz": [20e6, 60e6], "detuning_hz": [5e6, 20e6]}


def doc(name, **kw):
    return {"schema_version": 1, "scenario": name, **kw}


def test_every_scenario_has_a_default():
    for name in SCENARIOS:
        sc = default_config(name)
        assert sc.scenario == name


@pytest.mark.parametrize(
    "bad, fragment",
    [
        (doc("nope"), "scenario"),
        (doc("sweep", schema_version=2), "schema_version"),
        (doc("sweep", system={"gamma_1d_hz": [-1, 1]}), "gamma_1d_hz"),
        (doc("sweep", sweep={"rabi_hz": []}), "rabi_hz"),
        (doc("sweep", tomography={"n_shots": 10}), "n_shots"),
        (doc("sweep", extra=1), "extra"),
        (doc("sweep", seed=-1), "seed"),
    ],
)
def test_schema_rejections(bad, fragment):
    with pytest.raises(ConfigError, match=fragment):
        validate_config(bad)


def test_physical_rejection_is_actionable():
    with pytest.raises(ConfigError, match="gamma_phi_corr"):
        scenario_config(doc("stabilize", system={"gamma_phi_corr_hz": 1e9}))


def test_overrides_and_band():
    sc = scenario_config(doc("stabilize", system={"purcell": 50}))
    assert sc.band() == [50]
    sc = scenario_config(doc("stabilize", purcell_band=[12, 20], seed=7), seed=9)
    assert sc.band() == [12, 20] and sc.seed == 9
    assert list(default_config("sweep").axis("rabi_hz")) == [20e6, 25e6, 30e6, 35e6, 40e6, 45e6, 50e6]


def test_spectra_ideal_and_detuned():
    b = run(scenario_config(doc("spectra", preset="ideal", sweep={"detuning_hz": [0.0], "rabi_hz": [10e6]})))
    s = b.summary
    assert s["linewidth_ratio"] == pytest.approx(2.0, abs=0.02)
    dips = sorted(s["dip_positions_hz"])
    assert len(dips) == 2
    assert dips[0] == pytest.approx(-17e6, abs=0.5e6) and dips[1] == pytest.approx(17e6, abs=0.5e6)
    assert set(b.curves) >= {"transmission_pair", "transmission_map", "fluorescence"}


def test_spectra_device_pair_width():
    b = run(scenario_config(doc("spectra", sweep={"detuning_hz": [0.0], "rabi_hz": [10e6]})))
    assert 18e6 <= b.summary["fwhm_pair_hz"] <= 21.5e6


def test_stabilization_ideal_direct():
    b = run(scenario_config(doc("stabilize", preset="ideal", system={"purcell": 1e4})))
    cur = b.curves["moments_P10000"]
    x = np.asarray(cur["s1d_s2_re"])
    # relaxes to the dark-state value -alpha^2/(2(1+alpha^2))
    a2 = (37 / 17) ** 2 / 2
    assert x[-1] == pytest.approx(-a2 / (2 * (1 + a2)), abs=0.01)
    assert np.all(np.diff(x[len(x) // 2:]) <= 1e-6)
    pt = b.summary["points"][0]
    assert pt["tomography"] == "direct"
    assert pt["mle_fidelity"] == pytest.approx(pt["fidelity"], abs=1e-3) and pt["fidelity"] > 0.69


def test_stabilization_zero_drive_has_zero_moments():
    b = run(scenario_config(doc("stabilize", system={"rabi_hz": 0.0}, purcell_band=[10])))
    cur = b.curves["moments_P10"]
    for k, v in cur.items():
        if k != "t_s":
            assert np.allclose(v, 0, atol=1e-12)


def test_power_sweep_trend():
    b = run(scenario_config(doc("sweep", sweep={"rabi_hz": [20e6, 30e6, 40e6]})))
    for p in b.summary["per_purcell"]:
        assert p["rates_monotone_decreasing"]
    cur = b.curves["sweep_P10"]
    assert len(cur["rate_eq4_hz"]) == len(cur["rate_hz"]) == 3


def test_ef_comparison_small_grid():
    b = run(scenario_config(doc("ef-compare", sweep=SMALL_GRID)))
    s = b.summary
    assert 0 < s["max_fidelity_3level"] <= s["max_fidelity_2level"] + 0.02


def test_outlook_small():
    sc = scenario_config(doc("outlook", sweep={**SMALL_GRID, "purcell": [30, 600], "temperature_k": [0.039]}))
    b = run(sc)
    assert b.summary["thermal_purcell_39mK"] == pytest.approx(730, rel=0.05)
    f = [p["fidelity"] for p in b.summary["points"]]
    assert f[1] > f[0]


def test_noise_spec_protocols_agree():
    b = run(default_config("noise-spec"))
    s = b.summary
    assert s["protocols_agree"]
    for k in ("alpha_rabi", "alpha_spin_lock"):
        assert s[k] == pytest.approx(1.85, abs=0.3)


def test_payload_independent_of_threads():
    d = doc("ef-compare", sweep=SMALL_GRID, seed=3)
    a = run(scenario_config(d, threads=1))
    b = run(scenario_config(d, threads=2))
    assert a.payload_json() == b.payload_json()
    assert a.digest() == b.digest()
    assert json.loads(a.payload_json())["metadata"]["seed"] == 3


def test_monte_carlo_tomography_is_seeded():
    d = doc("stabilize", purcell_band=[30], seed=5,
            tomography={"mode": "monte_carlo", "n_shots": 20000, "n_noise": 2, "bootstrap": 100})
    a = run(scenario_config(d))
    b = run(scenario_config(d, threads=2))
    assert a.payload_json() == b.payload_json()
    c = run(scenario_config(d, seed=6))
    assert a.digest() != c.digest()


def test_dark_population_rate_record():
    r = dark_population_rate(1.0)
    assert r["fitted_rate"] > 0 and r["predicted_rate"] > 0
    assert r["population"][0] == pytest.approx(0.5)
