"""Acceptance suite: one PASS/FAIL line per criterion.

Each test prints ``C<n> PASS|FAIL: <detail>`` and then asserts, so the
printed line survives even when the criterion fails. The lines are
reprinted in the terminal summary by ``conftest.py``.
"""
import itertools
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from elephant_abm import kernels
from elephant_abm.agent import (
    AgentParams,
    AgentRandom,
    ElephantAgent,
    MemoryMatrix,
    Mode,
    MovementDistributions,
    end_of_day_update,
    switch_mode,
    thermoregulation_probability,
)
from elephant_abm.analytics import (
    DEFAULT_EPSILONS,
    convergence_cv,
    dbscan,
    kde_area,
    kl_divergence,
    mcp_area,
)
from elephant_abm.calibration import GaConfig, dominates, fit_families, nsga2, simulate_series
from elephant_abm.calibration.tuning import steep_tick_fraction
from elephant_abm.cli import EXIT_OK, main
from elephant_abm.engine import MODES, TICKS_PER_DAY, LandscapeConfig, RunConfig, build_world, run_batch, run_replicate
from elephant_abm.environment import ScenarioConfig, SyntheticLandscapeSpec

from conftest import ACCEPTANCE_LINES
from test_analytics import _brute_dbscan, _brute_hull_area

pytestmark = pytest.mark.acceptance


def report(capsys, n, ok, detail):
    line = f"C{n} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def bare_agent(params=AgentParams(), movement=MovementDistributions()):
    mem = MemoryMatrix(known=np.zeros((1, 1), bool), food=np.zeros((1, 1)))
    return ElephantAgent(params=params, movement=movement, memory=mem, x=15.0, y=15.0, row=0, col=0,
                         aggression=params.aggression, food_habituation=params.food_habituation,
                         disturbance_tolerance=params.disturbance_tolerance)


def brute_loglik(initial, transition, log_b):
    total = 0.0
    T = log_b.shape[0]
    for path in itertools.product((0, 1), repeat=T):
        p = initial[path[0]] * math.exp(log_b[0, path[0]])
        for t in range(1, T):
            p *= transition[path[t - 1], path[t]] * math.exp(log_b[t, path[t]])
        total += p
    return math.log(total)


# ------------------------------------------------------------------ C1


def test_c1_hmm_recovery(capsys):
    t0 = time.perf_counter()
    series, _ = simulate_series(5000, rng=2024)
    cmp = fit_families(series, ["gamma", "exponential", "weibull"], ["vonmises", "wrappedcauchy"])
    elapsed = time.perf_counter() - t0
    fit = cmp.fits[("gamma", "vonmises")]
    enc, exp_ = fit.step_means
    best = cmp.best
    checks = {
        "p11": abs(fit.p11 - 0.8775) <= 0.05,
        "p22": abs(fit.p22 - 0.9096) <= 0.05,
        "exploratory": abs(exp_ - 0.0398) <= 0.004,
        "encamped": abs(enc - 0.0040) <= 0.0008,
        "aic": (best.step_family, best.turn_family) == ("gamma", "vonmises"),
        "runtime": elapsed < 120.0,
    }
    detail = (f"p11={fit.p11:.4f} p22={fit.p22:.4f} exploratory={exp_:.4f} km encamped={enc:.4f} km "
              f"best={best.step_family}+{best.turn_family} runtime={elapsed:.1f}s "
              f"failed={[k for k, v in checks.items() if not v]}")
    report(capsys, 1, all(checks.values()), detail)


# ------------------------------------------------------------------ C2


def test_c2_forward_exactness(capsys):
    worst = 0.0
    count = 0
    backends = kernels.available_backends()
    rng = np.random.default_rng(0)
    for T in range(1, 11):
        for _ in range(20):
            initial = rng.dirichlet([1, 1])
            a, b = rng.uniform(0.01, 0.99, 2)
            transition = np.array([[a, 1 - a], [1 - b, b]])
            log_b = rng.normal(0.0, 2.0, (T, 2))
            starts = np.zeros(T, np.uint8)
            starts[0] = 1
            want = brute_loglik(initial, transition, log_b)
            for mod in backends.values():
                _, got = mod.forward_log(np.log(initial), np.log(transition), log_b, starts)
                worst = max(worst, abs(got - want) / abs(want) if want else abs(got))
                count += 1
    report(capsys, 2, worst <= 1e-10,
           f"{count} comparisons over lengths 1-10, backends {sorted(backends)}, max rel err {worst:.2e}")


# ------------------------------------------------------------------ C3


def test_c3_fitness_arithmetic(capsys):
    fed = bare_agent()
    fed.fitness = 0.0
    fed.todays_intake = 68.0
    food_gain = end_of_day_update(fed)["fitness"]
    cool = bare_agent()
    cool.fitness = 0.0
    cool.thermoregulation_steps_today = 288
    cool.thermoregulated_steps_today = 288
    thermo_gain = end_of_day_update(cool)["fitness"]

    cfg = RunConfig(scenario=ScenarioConfig(forest_food_percent=0.0, cropland_food_percent=0.0),
                    agent=replace(AgentParams(), thermoregulation_threshold=80.0),
                    month=7, days=14, replicates=1)
    r = run_replicate(cfg, 0)
    ok = food_gain == 0.1 and thermo_gain == 0.1 and r.died and r.death_day == 10 and not r.thermo_scheduled.any()
    report(capsys, 3, ok, f"food increment {food_gain!r}, thermoregulation increment {thermo_gain!r}, "
                          f"starved agent died on day {r.death_day}")


# ------------------------------------------------------------------ C4


def test_c4_thermoregulation_formula(capsys):
    at = thermoregulation_probability(30.0, 30.0, -0.1)
    hot = thermoregulation_probability(40.0, 30.0, -0.1)
    rng = np.random.default_rng(4)
    pairs = rng.uniform(-10.0, 50.0, (10_000, 2))
    mismatches = sum((thermoregulation_probability(t, thr, -0.1) > 0.5) != (t > thr) for t, thr in pairs)
    ok = at == 0.5 and abs(hot - 0.7311) <= 1e-4 and mismatches == 0
    report(capsys, 4, ok, f"p(T=Tth)={at!r} p(Tth+10)={hot:.6f} mismatches={mismatches}/10000")


# ------------------------------------------------------------------ C5


TOLERANCES = (25.0, 50.0, 100.0, 200.0)


def test_c5_slope_constraint(capsys):
    spec = SyntheticLandscapeSpec()
    # start twelve cells east of the ridge centreline, inside the forest belt
    start_x = (spec.resolved_ridge_col + 12 + 0.5) * spec.cellsize
    start_y = 2985.0
    base = RunConfig(landscape=LandscapeConfig(synthetic=spec, start=(start_x, start_y)),
                     agent=replace(AgentParams(), terrain_radius=750.0),
                     days=7, replicates=192)
    world = build_world(base)
    t0 = time.perf_counter()
    fractions = {}
    for tol in TOLERANCES:
        cfg = replace(base, agent=replace(base.agent, tolerance=tol))
        batch = run_batch(cfg, world=world)
        fractions[tol] = steep_tick_fraction(batch.replicates, world.stack, cfg.agent.slope_limit)
    elapsed = time.perf_counter() - t0
    vals = [fractions[t] for t in TOLERANCES]
    monotone = all(b >= a for a, b in zip(vals, vals[1:]))
    ok = fractions[100.0] <= 0.01 and monotone and elapsed < 600.0
    report(capsys, 5, ok, f"steep fractions {dict(zip(TOLERANCES, [round(v, 5) for v in vals]))} "
                          f"monotone={monotone} runtime={elapsed:.1f}s (1 core)")


# ------------------------------------------------------------------ C6


@pytest.fixture(scope="module")
def nocturnal_batch():
    cfg = RunConfig(month=1, days=7, replicates=192)
    world = build_world(cfg)
    return cfg, world, run_batch(cfg, world=world)


def test_c6_nocturnal_raiding(capsys, nocturnal_batch):
    cfg, world, batch = nocturnal_batch
    escape = MODES.index(Mode.ESCAPE)
    inside_total = night_total = 0
    for r in batch.replicates:
        hour = (np.arange(r.n_ticks) % TICKS_PER_DAY) * 5 / 60.0
        inside = world.stack.plantation[r.row, r.col] & (r.mode != escape)
        night = (hour >= 19.0) | (hour < 7.0)
        inside_total += int(inside.sum())
        night_total += int((inside & night).sum())
    ok = inside_total > 0 and night_total == inside_total
    report(capsys, 6, ok, f"{night_total}/{inside_total} plantation-interior ticks at night over "
                          f"{len(batch.replicates)} replicates")


# ------------------------------------------------------------------ C7


def _raid_probability(cfg):
    batch = run_batch(cfg)
    s = batch.summary
    thermo = float(np.mean([p["thermoregulation_tick_fraction"] for p in s["per_replicate"]]))
    return s["raid_probability"], thermo


def _pairs_holding(values, nondecreasing):
    pairs = list(zip(values, values[1:]))
    return sum((b >= a) if nondecreasing else (b <= a) for a, b in pairs), len(pairs)


def test_c7_conflict_trends(capsys):
    base = RunConfig(month=7, days=7, replicates=64)
    aggression = (0.2, 0.35, 0.5, 0.65, 0.8)
    by_aggr = [_raid_probability(replace(base, agent=replace(base.agent, aggression=a)))[0] for a in aggression]
    by_scen = [_raid_probability(replace(base, scenario=ScenarioConfig.named(f"S{i}")))[0] for i in range(1, 6)]
    wet, wet_thermo = _raid_probability(base)
    dry, dry_thermo = _raid_probability(replace(base, month=4))
    a_ok, a_n = _pairs_holding(by_aggr, True)
    s_ok, s_n = _pairs_holding(by_scen, False)
    climate = wet >= dry and wet_thermo == 0.0 and dry_thermo >= 0.30
    ok = a_ok >= 3 and s_ok >= 3 and climate
    report(capsys, 7, ok,
           f"aggression {dict(zip(aggression, by_aggr))} ({a_ok}/{a_n} pairs); "
           f"S1-S5 {by_scen} ({s_ok}/{s_n} pairs); wet {wet:.3f} (thermo {wet_thermo:.3f}) "
           f"vs dry {dry:.3f} (thermo {dry_thermo:.3f})")


# ------------------------------------------------------------------ C8


def test_c8_markov_mode_frequencies(capsys):
    agent = bare_agent()
    agent.fitness = 1.0
    rng = AgentRandom(np.random.default_rng(8))
    code = {Mode.RANDOM_WALK: 0, Mode.FORAGING: 1}
    counts = np.zeros((2, 2), dtype=np.int64)
    prev = code[agent.mode]
    for _ in range(1_000_000):
        cur = code[switch_mode(agent, 20.0, rng)]
        counts[prev, cur] += 1
        prev = cur
    mv = agent.movement
    p_rw = stats.chisquare(counts[0], counts[0].sum() * np.array([mv.p11, 1 - mv.p11])).pvalue
    p_fo = stats.chisquare(counts[1], counts[1].sum() * np.array([1 - mv.p22, mv.p22])).pvalue
    ok = p_rw > 0.05 and p_fo > 0.05
    report(capsys, 8, ok, f"stay rates {counts[0, 0] / counts[0].sum():.4f}/{counts[1, 1] / counts[1].sum():.4f} "
                          f"vs {mv.p11}/{mv.p22}, chi-square p={p_rw:.3f}/{p_fo:.3f}")


# ------------------------------------------------------------------ C9


def _dbscan_agrees(pts, eps, min_pts):
    res = dbscan(pts, eps, min_pts)
    core, comp, clusters, border_options = _brute_dbscan(pts, eps, min_pts)
    if not np.array_equal(res.core, core) or res.n_clusters != len(clusters):
        return False
    got = {}
    for i in np.flatnonzero(core):
        got.setdefault(res.labels[i], set()).add(int(i))
    if sorted(map(sorted, got.values())) != sorted(map(sorted, clusters.values())):
        return False
    label_of_comp = {comp[i]: res.labels[i] for i in np.flatnonzero(core)}
    for i, opts in border_options.items():
        allowed = {label_of_comp[o] for o in opts} if opts else {-1}
        if res.labels[i] not in allowed:
            return False
    return True


def test_c9_analytics_oracles(capsys):
    rng = np.random.default_rng(9)
    worst_mcp = 0.0
    for _ in range(100):
        pts = rng.uniform(-5000, 5000, (int(rng.integers(3, 14)), 2))
        want = _brute_hull_area(pts) / 1e6
        worst_mcp = max(worst_mcp, abs(mcp_area(pts) - want) / want)

    db_ok = 0
    for k in range(30):
        n = int(rng.integers(5, 201))
        centres = rng.uniform(0, 5000, (4, 2))
        pts = centres[rng.integers(0, 4, n)] + rng.normal(0, 300, (n, 2))
        db_ok += _dbscan_agrees(pts, float(rng.uniform(50, 800)), int(rng.integers(1, 7)))

    sigma = 500.0
    sample = rng.normal(0.0, sigma, (2000, 2))
    area = kde_area(sample, levels=(0.95,), cellsize=30.0)[0.95]
    analytic = -2.0 * math.log(0.05) * math.pi * sigma ** 2 / 1e6
    kde_err = abs(area - analytic) / analytic

    kl = kl_divergence([0.9, 0.1], [0.5, 0.5])
    ok = worst_mcp <= 1e-9 and db_ok == 30 and kde_err <= 0.15 and abs(kl - 0.3681) <= 1e-4
    report(capsys, 9, ok, f"MCP max rel err {worst_mcp:.1e}; DBSCAN {db_ok}/30 partitions match; "
                          f"KDE95 {area:.3f} vs {analytic:.3f} km2 ({kde_err:.1%}); KL {kl:.6f}")


# ------------------------------------------------------------------ C10


def test_c10_nsga2_biobjective(capsys):
    front = nsga2(lambda v: (v[0] ** 2, (v[0] - 2.0) ** 2), [(-10.0, 10.0)], GaConfig(pop_size=50, generations=100))
    x = front.decisions[:, 0]
    in_range = bool(np.all((x >= -0.01) & (x <= 2.01)))
    dominated = sum(dominates(a, b) for a, b in itertools.permutations(front.objectives, 2))
    ok = in_range and dominated == 0
    report(capsys, 10, ok, f"{len(front)} members, x in [{x.min():.4f}, {x.max():.4f}], dominated pairs {dominated}")


# ------------------------------------------------------------------ C11


def test_c11_thread_count_determinism(capsys, tmp_path):
    cfg = {"landscape": {"synthetic": {"nrows": 60, "ncols": 60, "ridge_halfwidth": 4, "ridge_pass_rows": 8}},
           "run": {"days": 1, "replicates": 6, "master_seed": 11}}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    rc1 = main(["simulate", "--config", str(path), "--out", str(tmp_path / "a"), "--threads", "1"])
    rc2 = main(["simulate", "--config", str(path), "--out", str(tmp_path / "b"), "--threads", "2"])
    names = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a" / "trajectories").glob("*.csv"))
    names.append((tmp_path / "a" / "summary.json").relative_to(tmp_path / "a"))
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    ok = rc1 == rc2 == EXIT_OK and len(names) == 7 and same
    report(capsys, 11, ok, f"{len(names)} files compared between 1 and 2 worker processes, identical={same}")


# ------------------------------------------------------------------ C12


def test_c12_convergence_tooling(capsys, nocturnal_batch):
    _, _, batch = nocturnal_batch
    areas = [mcp_area(np.column_stack([r.x, r.y])) for r in batch.replicates]
    rep = convergence_cv(areas, DEFAULT_EPSILONS)
    by_eps = sorted(rep.nmin.items())
    nonincreasing = all(b[1] <= a[1] for a, b in zip(by_eps, by_eps[1:]))
    const = convergence_cv(np.full(len(areas), 4.2))
    zero = bool(np.all(const.curve == 0.0))
    sweep = [r["epsilon"] for r in rep.table()] == list(DEFAULT_EPSILONS)
    ok = not rep.flagged and nonincreasing and zero and sweep
    table = ", ".join(f"eps={r['epsilon']}: nmin={r['nmin']}" for r in rep.table())
    report(capsys, 12, ok, f"MCP over {len(areas)} replicates: {table}; constant-output CV zero={zero}")
