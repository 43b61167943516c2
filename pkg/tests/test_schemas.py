import json
from pathlib import Path

import pytest

from fairgame.config import Settings, get_settings
from fairgame.errors import ConfigError
from fairgame.models.schemas import (
    BoxPriorSpec,
    DirectPlayerSpec,
    NormalPriorSpec,
    config_schema,
    load_config,
    parse_config,
)


def minimal(**overrides) -> dict:
    data = {
        "seed": 1,
        "k": 4,
        "players": [
            {"name": "P1", "kind": "linear", "noise_sd": 1.0},
            {"name": "P2", "kind": "direct", "noise_var": 2.5},
        ],
    }
    data.update(overrides)
    return data


class TestParseConfig:
    def test_defaults(self):
        config = parse_config(minimal())
        assert isinstance(config.prior, NormalPriorSpec)
        assert config.true_theta == [1.0, -1.0, 0.5, 2.0]
        assert config.synthetic.m_grid == [2**p for p in range(4, 13)]
        assert config.synthetic.trials == 10
        assert config.fairshare is None
        assert config.players[0].noise_known

    def test_unknown_key_names_its_path(self):
        data = minimal()
        data["players"][1]["bogus"] = 1
        with pytest.raises(ConfigError, match=r"players\.1\.direct\.bogus"):
            parse_config(data)

    def test_missing_seed(self):
        data = minimal()
        del data["seed"]
        with pytest.raises(ConfigError, match="seed"):
            parse_config(data)

    def test_seed_range(self):
        with pytest.raises(ConfigError):
            parse_config(minimal(seed=2**64))
        assert parse_config(minimal(seed=2**64 - 1)).seed == 2**64 - 1

    def test_duplicate_names(self):
        players = [{"name": "P", "kind": "direct", "noise_var": 1.0}] * 2
        with pytest.raises(ConfigError, match="unique"):
            parse_config(minimal(players=players))

    def test_bad_player_name(self):
        with pytest.raises(ConfigError):
            parse_config(minimal(players=[{"name": "a-b", "kind": "direct", "noise_var": 1.0}]))

    def test_direct_noise_given_once(self):
        with pytest.raises(ConfigError, match="exactly one"):
            parse_config(minimal(players=[{"name": "a", "kind": "direct"}]))

    def test_theta_star_length(self):
        with pytest.raises(ConfigError, match="theta_star"):
            parse_config(minimal(theta_star=[1.0]))

    def test_theta_star_required_off_default_dimension(self):
        config = parse_config(minimal(k=2))
        with pytest.raises(ConfigError, match="theta_star is required"):
            config.true_theta

    def test_box_prior(self):
        config = parse_config(minimal(prior={"kind": "box", "lower": [-1] * 4, "upper": [1] * 4}))
        assert isinstance(config.prior, BoxPriorSpec)
        with pytest.raises(ConfigError, match="box prior"):
            parse_config(minimal(prior={"kind": "box", "lower": [-1], "upper": [1]}))

    def test_two_mode_needs_even_dimension(self):
        players = [{"name": "a", "kind": "two_mode", "noise_sd": 1.0, "ratio": 0.5}]
        with pytest.raises(ConfigError, match="even"):
            parse_config(minimal(k=3, theta_star=[0.0] * 3, players=players))

    def test_initial_counts_per_player(self):
        with pytest.raises(ConfigError, match="initial_counts"):
            parse_config(minimal(fairshare={"initial_counts": [10], "base_rate": 5}))

    def test_mc_samples_floor(self):
        with pytest.raises(ConfigError, match="valuate.mc_samples"):
            parse_config(minimal(valuate={"m": 10, "mc_samples": 999}))

    def test_sweep_settings(self):
        sweep = [{"label": "a", "players": {"P2": {"noise_var": 1.0}}}, {"label": "b"}]
        config = parse_config(minimal(fairshare={"initial_counts": [10, 10], "base_rate": 5, "sweep": sweep}))
        assert [s.label for s in config.fairshare.sweep] == ["a", "b"]
        assert config.fairshare.sweep[1].players == {}

    def test_sweep_unknown_player(self):
        sweep = [{"label": "a", "players": {"P9": {"noise_var": 1.0}}}]
        with pytest.raises(ConfigError, match="P9"):
            parse_config(minimal(fairshare={"initial_counts": [10, 10], "base_rate": 5, "sweep": sweep}))

    def test_sweep_cannot_rename(self):
        sweep = [{"label": "a", "players": {"P2": {"name": "P3"}}}]
        with pytest.raises(ConfigError, match="rename"):
            parse_config(minimal(fairshare={"initial_counts": [10, 10], "base_rate": 5, "sweep": sweep}))

    def test_sweep_labels_unique(self):
        sweep = [{"label": "a"}, {"label": "a"}]
        with pytest.raises(ConfigError, match="unique"):
            parse_config(minimal(fairshare={"initial_counts": [10, 10], "base_rate": 5, "sweep": sweep}))

    def test_config_is_frozen(self):
        config = parse_config(minimal())
        with pytest.raises(Exception):
            config.seed = 2

    def test_replay_model(self, tmp_path):
        player = {"name": "r", "kind": "replay", "data": "r.csv", "model": {"name": "r", "kind": "direct", "noise_var": 1}}
        config = parse_config(minimal(players=[player]), base_dir=tmp_path)
        assert isinstance(config.players[0].model, DirectPlayerSpec)
        assert config.players[0].data == tmp_path / "r.csv"


class TestLoadConfig:
    def test_relative_table_paths(self, tmp_path):
        path = tmp_path / "exp.json"
        data = minimal(players=[{"name": "t", "kind": "table_noisy", "table": "features.csv", "ratio": 0.5}])
        path.write_text(json.dumps(data))
        config = load_config(path)
        assert config.players[0].table == tmp_path / "features.csv"

    def test_absolute_paths_kept(self, tmp_path):
        path = tmp_path / "exp.json"
        data = minimal(players=[{"name": "t", "kind": "table_noisy", "table": "/data/f.csv", "ratio": 0.5}])
        path.write_text(json.dumps(data))
        assert load_config(path).players[0].table == Path("/data/f.csv")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text("[]")
        with pytest.raises(ConfigError, match="JSON object"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.json")

    def test_shipped_configs_are_valid(self):
        configs = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
        assert configs
        for path in configs:
            assert load_config(path).kind is not None


def test_schema_lists_player_kinds():
    text = json.dumps(config_schema())
    for kind in ("direct", "linear", "two_mode", "table_bundle", "table_noisy", "replay"):
        assert f'"{kind}"' in text


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.MC_SAMPLES == 200_000
        assert settings.OUTPUT_DIR == Path("runs")

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("FAIRGAME_THREADS", "3")
        get_settings.cache_clear()
        assert get_settings().THREADS == 3
