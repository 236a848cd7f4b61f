import json
import math

import numpy as np
import pytest

import fscd


def small_spec():
    catalog, _ = fscd.standard_benchmark()
    return {
        "format": "fscd-genspec",
        "catalog": json.loads(catalog.to_json()),
        "informative": [{"field": catalog.names[0], "weight": 1.5}, {"field": catalog.names[1], "weight": 1.0}],
        "n_samples": 3000,
        "n_heldout": 600,
        "seed": 5,
    }


QUICK = {"steps_selection": 400, "steps_finetune": 200, "steps_reference": 60, "batch_size": 64, "k": 4}


def test_scalar_functions():
    assert fscd.complexity(0.4, 8, 10000) == pytest.approx(0.481, rel=1e-14)
    assert fscd.prior_theta(0.481) == pytest.approx(0.38201601761360947, rel=1e-14)
    assert fscd.reg_weight_alpha(0.5) == 0.0
    assert fscd.reg_weight_alpha(fscd.prior_theta(2.5)) == pytest.approx(2.5, abs=1e-12)
    assert fscd.sample_gate(0.5, 0.5) == 0.5
    assert fscd.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert fscd.recall_rate(list(range(200)), list(range(200)), 20) == 1.0


def test_errors_map_to_python_exceptions():
    with pytest.raises(fscd.DomainError):
        fscd.reg_weight_alpha(1.0)
    with pytest.raises(fscd.ConfigError):
        fscd.sample_gate(0.5, 0.5, 0.0)
    with pytest.raises(fscd.FscdError):
        fscd.auc([0.1, 0.2], [1, 1])
    spec = small_spec()
    spec["n_samples"] = 0
    with pytest.raises(fscd.ConfigError):
        fscd.generate(spec)


def test_standard_benchmark_arrays():
    catalog, data = fscd.standard_benchmark()
    assert len(catalog) == 20
    assert len(data) == 50000
    keys = data.keys
    assert isinstance(keys, np.ndarray)
    assert keys.shape == (50000, 20)
    assert data.labels.shape == (50000,)
    assert 0.0 < data.positive_rate() < 1.0
    assert catalog.request_cost([0], 200) == pytest.approx(0.4)


def test_run_report_is_deterministic():
    catalog, train = fscd.generate(small_spec())
    _, held = fscd.generate(small_spec(), heldout=True)
    a = fscd.run(catalog, train, held, QUICK)
    b = fscd.run(catalog, train, held, QUICK)
    assert a == b
    assert a["k"] == 4
    assert sum(1 for f in a["fields"] if f["selected"]) == 4
    assert sorted(f["rank"] for f in a["fields"]) == list(range(1, 21))
    assert 0.5 < a["heldout_auc"] <= 1.0


def test_sweep_rows():
    catalog, train = fscd.generate(small_spec())
    _, held = fscd.generate(small_spec(), heldout=True)
    rows = fscd.sweep(catalog, train, held, [2, 4], QUICK)
    assert [r[0] for r in rows] == [2, 4]
    assert all(math.isfinite(r[1]) and r[2] > 0 for r in rows)


def test_default_config_round_trips():
    cfg = fscd.default_config()
    assert cfg["k"] == 8
    assert cfg["temperature"] == pytest.approx(0.1)
