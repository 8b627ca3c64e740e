import json

import pytest

from netpost.config import SCHEMAS, load_config, proposal_kwargs, validate_config
from netpost.exceptions import ConfigError


def _write(tmp_path, obj):
    p = tmp_path / "c.json"
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


class TestValidate:
    @pytest.mark.parametrize(
        "command, cfg",
        [
            ("generate", {"N": 10, "model": "kinetic-ising", "M": 100}),
            ("reconstruct", {"dataset": "d.csv", "model": "gaussian", "proposal": {"w_t": 0}}),
            ("sample", {"dataset": "d.csv", "model": "zero-ising", "sweeps": 10, "burn_in": 2}),
            ("compare", {"dataset": "d.csv", "marginals": "m.tsv", "fractions": [0.1, 0.5]}),
            ("bench-scaling", {"N": [100, 200], "mixes": {"u": {"w_u": 1.0}}}),
        ],
    )
    def test_valid(self, command, cfg):
        assert validate_config(command, cfg) is cfg

    @pytest.mark.parametrize(
        "command, cfg, where",
        [
            ("generate", {"N": 10, "model": "potts", "M": 5}, "model"),
            ("generate", {"N": 10, "model": "gaussian", "M": 5, "theta": -1}, "theta"),
            ("generate", {"N": 5, "model": "kinetic-ising", "M": 5, "avg_degree": 4}, "avg_degree"),
            ("generate", {"N": 10, "model": "kinetic-ising"}, "M"),
            ("reconstruct", {"dataset": "d", "model": "gaussian", "extra": 1}, "extra"),
            ("sample", {"dataset": "d", "model": "gaussian", "sweeps": 5, "burn_in": 5}, "burn_in"),
            ("sample", {"model": "gaussian"}, "dataset"),
            ("sample", {"model": "gaussian", "protocol": {"name": "map-vs-mp"}}, "truth"),
            ("reconstruct", {"dataset": "d", "model": "gaussian",
                             "proposal": {"bisection_min": 5, "bisection_max": 2}}, "bisection_min"),
            ("reconstruct", {"dataset": "d", "model": "gaussian", "proposal": {"w_u": 0}}, "w_u"),
            ("bench-scaling", {"N": [100]}, "N"),
        ],
    )
    def test_invalid_names_the_field(self, command, cfg, where):
        with pytest.raises(ConfigError, match=where):
            validate_config(command, cfg)

    def test_unknown_command(self):
        with pytest.raises(ConfigError):
            validate_config("train", {})

    def test_every_command_has_a_schema(self):
        assert set(SCHEMAS) == {"generate", "reconstruct", "sample", "compare", "bench-scaling"}


class TestLoad:
    def test_round_trip(self, tmp_path):
        cfg = {"dataset": "d.csv", "model": "kinetic-ising", "proposal": {"w_n": 0.0}}
        assert load_config(_write(tmp_path, cfg), "reconstruct") == cfg
        assert proposal_kwargs(cfg) == {"w_n": 0.0}

    def test_syntax_error_has_position(self, tmp_path):
        with pytest.raises(ConfigError, match=r":1:\d+"):
            load_config(_write(tmp_path, "{oops"), "generate")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "none.json", "generate")

    def test_not_an_object(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, [1, 2]), "generate")
