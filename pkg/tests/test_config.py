from __future__ import annotations

import pytest

from sinn.config import PRESETS, format_config, load_config, parse_config, preset, save_config
from sinn.errors import FormatError, ParameterError


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_round_trip(name):
    cfg = preset(name)
    text = format_config(cfg)
    assert parse_config(text) == cfg
    assert format_config(parse_config(text)) == text


def test_preset_time_steps():
    assert preset("ou").data.dt == pytest.approx(0.1)
    dw = preset("double-well-v5")
    assert dw.data.dt == pytest.approx(0.2)
    assert dw.data.trajectory_length == 401
    assert (dw.model.num_layers, dw.model.hidden_size) == (2, 25)
    assert dw.rate.window == (25.0, 50.0)
    assert preset("double-well-v4").rate.window == (5.0, 10.0)
    assert preset("poisson").noise["kind"] == "exponential"


def test_format_materialises_every_field():
    text = format_config(preset("ou"))
    for key in ("train.learning_rate", "train.beta2", "train.validation_size", "model.dropout_prob",
                "data.burn_in", "target.grid_points", "system.theta", "noise.kind", "seed"):
        assert f"\n{key} = " in "\n" + text


def test_overrides_on_preset():
    cfg = parse_config("preset = ou\nseed = 9\ntrain.max_iterations = 50  # short\nsystem.sigma = 0.25\n")
    assert cfg.seed == 9 and cfg.train.base_seed == 9
    assert cfg.train.max_iterations == 50
    assert cfg.system.build().sigma == 0.25
    assert cfg.target.statistics == ("acf", "pdf")


def test_tuple_values():
    cfg = parse_config("preset = fpu\ntarget.statistics = acf, pdf\nrate.window = 5, 10\n")
    assert cfg.target.statistics == ("acf", "pdf")
    assert cfg.rate.window == (5.0, 10.0)


@pytest.mark.parametrize(
    "text",
    [
        "preset = ou\nnonsense\n",
        "preset = ou\ntrain.bogus = 1\n",
        "preset = ou\nwhatever.x = 1\n",
        "preset = ou\ntrain.batch_size = many\n",
        " = 3\n",
    ],
)
def test_malformed_text_rejected(text):
    with pytest.raises(FormatError):
        parse_config(text)


@pytest.mark.parametrize(
    "text",
    [
        "preset = ou\ndata.trajectory_count = 0\n",
        "preset = ou\ndata.fine_dt = 0\n",
        "preset = fpu\ntarget.source = analytic\n",
        "preset = ou\nsystem.bogus = 1\n",
        "preset = nope\n",
        "preset = ou\nrate.window = 5, 1\n",
    ],
)
def test_invalid_values_rejected(text):
    with pytest.raises(ParameterError):
        parse_config(text)


def test_file_round_trip(tmp_path):
    cfg = preset("cg-chain").with_seed(77)
    save_config(cfg, tmp_path / "c.txt")
    assert load_config(tmp_path / "c.txt") == cfg
    with pytest.raises(FormatError):
        load_config(tmp_path / "missing.txt")
