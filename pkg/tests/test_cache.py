import json

from mapcones.cache import ResultCache
from mapcones.config import ExperimentConfig


def test_miss_then_hit(tmp_path):
    cache = ResultCache(tmp_path)
    config = ExperimentConfig("membership", family="identity")
    assert cache.get(config) is None
    text = '{\n  "passed": true\n}\n'
    path = cache.put(config, text)
    assert path.exists()
    assert path.parent.name == config.cache_key()[:2]
    assert cache.get(config) == text


def test_default_root_is_under_xdg_cache(tmp_path):
    cache = ResultCache()
    assert cache.root == tmp_path / "cache" / "mapcones" / "results"


def test_other_version_is_ignored(tmp_path):
    config = ExperimentConfig("radii")
    ResultCache(tmp_path, version="0.0.1").put(config, "old")
    assert ResultCache(tmp_path, version="0.0.2").get(config) is None


def test_corrupt_entry_is_a_miss(tmp_path):
    cache = ResultCache(tmp_path)
    config = ExperimentConfig("radii")
    path = cache.path_for(config)
    path.parent.mkdir(parents=True)
    path.write_text("not json", encoding="utf-8")
    assert cache.get(config) is None


def test_entry_records_config(tmp_path):
    cache = ResultCache(tmp_path)
    config = ExperimentConfig("width", dirs=50)
    entry = json.loads(cache.put(config, "x").read_text(encoding="utf-8"))
    assert entry["config"]["dirs"] == 50
    assert entry["key"] == config.cache_key()


def test_output_directory_does_not_change_the_key(tmp_path):
    cache = ResultCache(tmp_path)
    cache.put(ExperimentConfig("volume", out="a"), "report")
    assert cache.get(ExperimentConfig("volume", out="b")) == "report"
    assert cache.get(ExperimentConfig("volume", seed=1)) is None


def test_clear(tmp_path):
    cache = ResultCache(tmp_path)
    cache.put(ExperimentConfig("volume"), "a")
    cache.put(ExperimentConfig("width"), "b")
    assert cache.clear() == 2
    assert cache.get(ExperimentConfig("volume")) is None
