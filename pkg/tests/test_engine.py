import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from elephant_abm.engine import (
    MODES,
    TICKS_PER_DAY,
    LandscapeConfig,
    ReplicateError,
    RunConfig,
    build_world,
    raid_episodes,
    replicate_seed,
    run_batch,
    run_replicate,
    write_batch,
)
from elephant_abm.environment import ScenarioConfig, SyntheticLandscapeSpec

from conftest import SMALL_SPEC


def test_replicate_seed_is_stable():
    a = replicate_seed(3, 7).generate_state(4)
    b = replicate_seed(3, 7).generate_state(4)
    c = replicate_seed(3, 8).generate_state(4)
    d = replicate_seed(4, 7).generate_state(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(month=13)
    with pytest.raises(ValueError):
        RunConfig(days=0)
    with pytest.raises(ValueError):
        RunConfig(replicates=0)
    with pytest.raises(ValueError):
        LandscapeConfig()
    assert RunConfig(month=2, year=2020).n_days == 29
    assert RunConfig(month=7, days=5).n_days == 5


def test_replicate_shapes(small_config, small_world):
    r = run_replicate(small_config, 0, small_world)
    n = 2 * TICKS_PER_DAY
    assert r.n_ticks == n
    for arr in (r.x, r.y, r.row, r.col, r.mode, r.fitness, r.thermo_scheduled):
        assert arr.shape == (n,)
    assert len(r.days) == 2
    assert [d["day"] for d in r.days] == [0, 1]
    assert np.all((r.fitness >= 0) & (r.fitness <= 1))
    h = small_world.stack.header
    assert np.all((r.x >= h.xll) & (r.x < h.xright) & (r.y > h.yll) & (r.y <= h.ytop))
    assert r.timestamp(0) == "2020-01-01T00:00:00"
    assert r.timestamp(12) == "2020-01-01T01:00:00"


def test_replicate_depends_only_on_config_and_index(small_config, small_world):
    a = run_replicate(small_config, 1, small_world)
    b = run_replicate(small_config, 1, build_world(small_config))
    c = run_replicate(small_config, 2, small_world)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.events == b.events
    assert not np.array_equal(a.x, c.x)


def test_batch_independent_of_thread_count(small_config):
    serial = run_batch(small_config, threads=1)
    parallel = run_batch(small_config, threads=2)
    for a, b in zip(serial.replicates, parallel.replicates):
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.mode, b.mode)
    assert json.dumps(serial.summary, sort_keys=True) == json.dumps(parallel.summary, sort_keys=True)


def test_batch_subset_matches_full(small_config, small_world):
    full = run_batch(small_config, world=small_world)
    part = run_batch(small_config, world=small_world, indices=[2])
    assert np.array_equal(full.replicates[2].x, part.replicates[0].x)


def test_starving_agent_dies_on_day_ten():
    cfg = RunConfig(landscape=LandscapeConfig(synthetic=SMALL_SPEC),
                    scenario=ScenarioConfig(forest_food_percent=0.0, cropland_food_percent=0.0),
                    agent=replace(RunConfig().agent, thermoregulation_threshold=80.0),
                    month=7, days=14, replicates=1)
    r = run_replicate(cfg, 0)
    assert r.died
    assert r.death_day == 10
    assert r.events[-1][1] == "death"
    assert r.consumed == 0.0
    assert not r.thermo_scheduled.any()


def test_raid_episode_gap_logic():
    on = np.zeros(100, dtype=bool)
    on[5:10] = True
    on[15:20] = True      # 5-tick gap: same episode
    on[40:45] = True      # 20-tick gap: new episode
    on[57:58] = True      # exactly 12 ticks outside: new episode
    assert raid_episodes(on) == [(5, 19), (40, 44), (57, 57)]
    on[56] = True         # 11 ticks outside: merged
    assert raid_episodes(on) == [(5, 19), (40, 57)]
    assert raid_episodes(np.zeros(5, bool)) == []


def test_summary_fields(small_config, small_world):
    batch = run_batch(small_config, world=small_world)
    s = batch.summary
    assert s["replicates"] == 3 and len(s["per_replicate"]) == 3
    for key in ("raid_probability", "reentry_probability", "starvation_probability", "death_fraction"):
        assert 0.0 <= s[key] <= 1.0
    for per, r in zip(s["per_replicate"], batch.replicates):
        assert per["raid_episodes"] == len(r.episodes)
        assert per["plantation_ticks_not_escaping"] <= per["plantation_ticks"]
        assert 0.0 <= per["steep_tick_fraction"] <= 1.0


def test_nocturnal_plantation_presence():
    cfg = RunConfig(landscape=LandscapeConfig(synthetic=SMALL_SPEC), month=1, days=3, replicates=6,
                    agent=replace(RunConfig().agent, aggression=1.0))
    batch = run_batch(cfg, world=build_world(cfg))
    stack = build_world(cfg).stack
    escape = MODES.index(next(m for m in MODES if m.value == "escape"))
    assert sum(p["plantation_ticks_not_escaping"] for p in batch.summary["per_replicate"]) > 0
    for r in batch.replicates:
        tod_hours = (np.arange(r.n_ticks) % TICKS_PER_DAY) * 5 / 60.0
        inside = stack.plantation[r.row, r.col] & (r.mode != escape)
        daytime = (tod_hours >= 7.0) & (tod_hours < 19.0)
        assert not np.any(inside & daytime)


def test_write_batch_layout(tmp_path, small_config, small_world):
    batch = run_batch(small_config, world=small_world)
    out = write_batch(batch, tmp_path / "run", resolved_config={"run": {"replicates": 3}})
    trajs = sorted((out / "trajectories").glob("*.csv"))
    assert [p.name for p in trajs] == [f"replicate_{i:04d}.csv" for i in range(3)]
    with open(trajs[0]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["tick", "timestamp", "x", "y", "mode", "fitness"]
    assert len(rows) == 1 + batch.replicates[0].n_ticks
    assert float(rows[1][2]) == batch.replicates[0].x[0]
    assert {r[4] for r in rows[1:]} <= {m.value for m in MODES}
    assert (out / "events" / "replicate_0000.csv").is_file()
    assert (out / "days" / "replicate_0000.csv").is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["replicates"] == 3
    assert json.loads((out / "resolved-config.json").read_text()) == {"run": {"replicates": 3}}


def test_start_outside_landscape():
    cfg = RunConfig(landscape=LandscapeConfig(synthetic=SMALL_SPEC, start=(-1e6, 0.0)), days=1, replicates=1)
    with pytest.raises(ValueError):
        build_world(cfg)


def test_replicate_error_carries_index(small_config, small_world, monkeypatch):
    import elephant_abm.engine as engine

    def boom(*a, **k):
        raise FloatingPointError("overflow")

    monkeypatch.setattr(engine, "run_replicate", boom)
    with pytest.raises(ReplicateError) as info:
        engine.run_batch(small_config, world=small_world, indices=[2])
    assert info.value.index == 2
    assert isinstance(info.value.cause, FloatingPointError)


def test_food_only_decreases(small_config, small_world):
    r = run_replicate(small_config, 0, small_world)
    assert r.final_food <= r.initial_food
    assert r.initial_food - r.final_food == pytest.approx(r.consumed, rel=1e-9)


def test_default_synthetic_spec_runs_one_day():
    cfg = RunConfig(landscape=LandscapeConfig(synthetic=SyntheticLandscapeSpec()), days=1, replicates=1)
    r = run_replicate(cfg, 0)
    assert r.n_ticks == TICKS_PER_DAY
