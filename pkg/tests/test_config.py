from __future__ import annotations

import numpy as np
import pytest

from delayhet import delays
from delayhet.config import DELAY_SEED_OFFSET, ConfigError, load_config, parse_config
from delayhet.delays import ConstantDelays


def base(**over):
    raw = {
        "schema_version": 1,
        "dataset": {"type": "quadratic", "m": 5, "n": 10, "d": 3},
        "delay": {"type": "synthetic"},
        "selector": {"type": "random", "K": 2},
        "engine": {"max_rounds": 5},
        "seeds": [0],
    }
    raw.update(over)
    return raw


def test_minimal_config_defaults():
    cfg = parse_config(base())
    assert cfg.dataset.eig_range == (1.0, 10.0) and cfg.dataset.noise_std == 0.001
    assert [s.name for s in cfg.selectors] == ["random"]
    assert cfg.engine_config(7).seed == 7


def test_synthetic_delay_means_use_offset_seed():
    cfg = parse_config(base())
    roster, model = cfg.delay.build(5, 3)
    expected = np.sort(delays.synthesize_delays(delays.SyntheticDelayConfig(), 5, 3 + DELAY_SEED_OFFSET))
    assert np.array_equal(roster.mean_delays, expected)
    assert isinstance(model, ConstantDelays)


def test_eta_auto_maps_to_default():
    cfg = parse_config(base(engine={"eta": "auto"}))
    assert cfg.engine_config(0).eta is None
    assert parse_config(base(engine={"eta": "auto_local"})).engine_config(0).eta == "auto_local"


@pytest.mark.parametrize(
    "over, match",
    [
        (dict(selector={"type": "random", "K": 6}), r"selector \(random\): K=6 exceeds"),
        (dict(selector=[{"type": "submodular"}, {"type": "sampling", "K": 9}]), r"selector\[1\] \(sampling\)"),
        (dict(selector={"type": "random", "K": 2, "temperature": 1}), "unknown key.*temperature"),
        (dict(selector={"type": "random"}), "missing key.*K"),
        (dict(selector={"type": "oracle"}), "selector.type"),
        (dict(selector=[{"type": "random", "K": 1}, {"type": "random", "K": 2}]), "duplicate selector name"),
        (dict(dataset={"type": "quadratic", "m": 5, "n": 10, "d": 3, "extra": 1}), "dataset: unknown"),
        (dict(dataset={"type": "mnist", "m": 5, "n": 10, "d": 3}), "dataset.type"),
        (dict(dataset={"type": "quadratic", "m": 0, "n": 10, "d": 3}), "dataset.m"),
        (dict(dataset={"type": "quadratic", "m": 5, "n": 10, "d": 3, "eig_range": [0, 1]}), "eig_range"),
        (dict(delay={"type": "synthetic", "speed": 3}), "delay: unknown"),
        (dict(delay={"type": "radio"}), "delay.type"),
        (dict(delay={"type": "trace", "path": "missing.csv"}), "does not exist"),
        (dict(engine={"max_rounds": 5, "lr": 0.1}), "engine: unknown"),
        (dict(engine={"eta": -1}), "engine"),
        (dict(engine={"target_metric": "accuracy"}), "target_metric"),
        (dict(seeds=[]), "seeds"),
        (dict(seeds=[1, 1]), "duplicate seed"),
        (dict(seeds=[-1]), "seeds"),
        (dict(schema_version=2), "schema_version"),
        (dict(extra_block={}), "config: unknown"),
    ],
)
def test_invalid_configs_name_the_offending_block(over, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(base(**over))


def test_trace_path_relative_to_config(tmp_path):
    delays.write_trace(tmp_path / "t.csv", np.array([3.0, 1.0, 2.0, 5.0, 4.0]), np.array([0.1, 0.2, 0.3, 0.4, 0.5]))
    (tmp_path / "c.yaml").write_text(
        "schema_version: 1\n"
        "dataset: {type: quadratic, m: 5, n: 10, d: 3}\n"
        "delay: {type: trace, path: t.csv}\n"
        "selector: {type: random, K: 2}\n"
        "seeds: [0]\n"
    )
    roster, model = load_config(tmp_path / "c.yaml").delay.build(5, 0)
    assert roster.mean_delays.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]
    assert model.sigma.tolist() == [0.2, 0.3, 0.1, 0.5, 0.4]


def test_trace_sigma_override_and_size_check(tmp_path):
    delays.write_trace(tmp_path / "t.csv", np.array([3.0, 1.0, 2.0, 5.0, 4.0]))
    raw = base(delay={"type": "trace", "path": "t.csv", "lognormal_sigma": 0.2})
    _, model = parse_config(raw, tmp_path).delay.build(5, 0)
    assert np.all(model.sigma == 0.2)
    _, model = parse_config(base(delay={"type": "trace", "path": "t.csv"}), tmp_path).delay.build(5, 0)
    assert np.all(model.sigma == 0.5)
    raw["dataset"] = {"type": "quadratic", "m": 4, "n": 10, "d": 3}
    raw["selector"] = {"type": "random", "K": 2}
    with pytest.raises(ConfigError, match="trace has 5 clients"):
        parse_config(raw, tmp_path)


def test_yaml_syntax_error_reports_position(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema_version: 1\ndataset: {type: quadratic\n")
    with pytest.raises(ConfigError, match=r"bad.yaml:\d+:\d+"):
        load_config(path)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")
