import json

import numpy as np
import pytest

from fdhetnet.config import ConfigError, SystemConfig
from fdhetnet.control import utility
from fdhetnet.harness import (BaselineMode, DropSimulator, compute_metrics, density_config,
                              emit_results, format_value, iteration_cdf, pilot_config, read_csv,
                              run_drop, sca_cdf, summary_rows, table_to_csv)


def test_compute_metrics_definitions():
    r = np.array([1.0, 2.0, 3.0, 10.0])
    m = compute_metrics(r, 1.0, [4.0, 6.0])
    assert m["avg_ut"] == 4.0
    assert m["cell_edge_ut"] == pytest.approx(np.percentile(r, 5))
    assert m["total_network_utility"] == pytest.approx(float(np.sum(utility(r))))
    assert m["avg_queue_length"] == 5.0


@pytest.mark.parametrize("mode", list(BaselineMode))
def test_drop_runs_cleanly_in_every_mode(small_cfg, mode):
    reports, m = run_drop(small_cfg, mode, 12, drop=0, record=True)
    assert len(reports) == 12 and m.n_slots == 12
    assert m.bound_violations == 0 and m.constraint_violations == 0
    assert m.max_kkt_residual <= 1e-6
    assert np.all(m.user_throughput >= 0)
    for rep in reports:
        assert np.all(rep.Q >= 0) and np.all(rep.Y >= 0) and np.all(rep.D >= 0)
        assert np.all(rep.p >= 0)
    if mode is BaselineMode.HOMNET:
        assert all(rep.D.size == 0 and rep.beta.size == 0 for rep in reports)
    if mode is not BaselineMode.HYBRID:
        assert m.offloaded_bits == 0.0


def test_queue_dynamics_follow_offered_rates(small_cfg):
    sim = DropSimulator(small_cfg, "closed", 0)
    before = sim.state.copy()
    arrivals = sim.arrivals
    # replay the arrival stream independently
    from fdhetnet.scenario import ArrivalProcess
    replay = ArrivalProcess(small_cfg, sim.K, 0)
    rep = sim.step(record=True)
    a = replay.next()
    np.testing.assert_allclose(rep.Q, np.maximum(before.Q - rep.rates, 0) + a)
    np.testing.assert_allclose(rep.Y, np.maximum(before.Y + rep.phi - rep.rates, 0))
    assert arrivals is sim.arrivals


def test_runs_are_deterministic(small_cfg):
    _, a = run_drop(small_cfg, "hybrid", 10, 1)
    _, b = run_drop(small_cfg, "hybrid", 10, 1)
    np.testing.assert_array_equal(a.user_throughput, b.user_throughput)
    assert a.avg_queue_length == b.avg_queue_length


def test_power_allocation_respects_the_budget_every_slot(small_cfg):
    sim = DropSimulator(small_cfg, "hybrid", 0)
    N = small_cfg.num_mbs_antennas
    for _ in range(15):
        rep = sim.step(record=True)
        act = sim.schedule.active
        used = float(np.sum(rep.p[act] / sim.schedule.omega[act])) / N
        assert used <= small_cfg.p_mbs * (1 + 1e-9)
        assert np.all(rep.p[np.setdiff1d(np.arange(sim.K), act)] == 0)


def test_density_and_pilot_configs():
    c = density_config(SystemConfig(), 4)
    assert (c.num_scs, c.num_mues, c.num_mbs_antennas) == (4, 6, 20)
    c = density_config(SystemConfig(), 8)
    assert (c.num_mues, c.num_mbs_antennas) == (12, 40)
    with pytest.raises(ConfigError):
        pilot_config(SystemConfig(), 5)
    with pytest.raises(ConfigError):
        pilot_config(SystemConfig(), 400)
    assert pilot_config(SystemConfig(), 40).pilot_length == 40


def test_invalid_mode_and_slots(small_cfg):
    with pytest.raises(ConfigError):
        run_drop(small_cfg, "open", 1)
    with pytest.raises(ConfigError):
        run_drop(small_cfg, "hybrid", -1)


def test_sca_cdf_rows(small_cfg):
    rows = sca_cdf(small_cfg, 3)
    assert len(rows) == 3 and all(r["monotone"] == 1 for r in rows)
    cdf = iteration_cdf(rows)
    assert cdf[-1]["cdf"] == 1.0
    assert all(a["cdf"] <= b["cdf"] for a, b in zip(cdf, cdf[1:]))


def test_csv_format_and_manifest(tmp_path):
    cfg = SystemConfig(seed=3)
    rows = [{"a": 1, "b": 1.0 / 3.0, "c": "x", "d": True}]
    text = table_to_csv(rows)
    assert text == "a,b,c,d\n1,0.333333333,x,1\n"
    assert format_value(np.float64(123456789.123)) == "123456789"
    paths = emit_results(tmp_path, {"t": rows}, cfg, "run")
    back = read_csv(paths["t"])
    assert back == [{"a": "1", "b": "0.333333333", "c": "x", "d": "1"}]
    man = json.loads(open(paths["manifest"]).read())
    assert man["seed"] == 3 and man["config_digest"] == cfg.digest()
    assert man["version"].startswith("0.1.0")


def test_summary_rows_layout():
    class M:
        avg_ut, cell_edge_ut, total_network_utility, avg_queue_length = 1.0, 0.5, 2.0, 3.0
    rows = summary_rows({"x": 1}, "closed", [M(), M()])
    assert [r["metric"] for r in rows] == ["avg_ut", "cell_edge_ut", "total_network_utility",
                                          "avg_queue_length"]
    assert rows[0]["mean"] == 1.0 and rows[0]["stderr"] == 0.0 and rows[0]["drops"] == 2
