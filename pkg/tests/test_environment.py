import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elephant_abm.environment import (
    DEFAULT_AGRI_FRACTIONS,
    SCENARIOS,
    AgriCategory,
    DisturbanceSchedule,
    ScenarioConfig,
    SyntheticLandscapeSpec,
    TemperatureModel,
    assign_agri_plots,
    disturbance_at,
    food_density_t_per_km2,
    generate_synthetic_landscape,
    init_food,
    temperature_at,
    temperature_field,
)
from elephant_abm.terrain import LandUseClass

PLANT = int(LandUseClass.PLANTATIONS)


def _all_plantation(n=10_000):
    return np.full((100, n // 100), PLANT)


def test_scenarios_forest_maxima():
    assert [SCENARIOS[f"S{i}"].forest_max_food_value for i in range(1, 6)] == [5, 10, 15, 20, 25]
    assert ScenarioConfig.named("s3") == SCENARIOS["S3"]
    with pytest.raises(ValueError):
        ScenarioConfig.named("S6")
    with pytest.raises(ValueError):
        ScenarioConfig(forest_food_percent=1.5)


def test_home_garden_fraction_50_75_class():
    mask = assign_agri_plots(_all_plantation(), {"50-75rubberXHG": 1.0}, np.random.default_rng(0))
    assert mask.mean() == pytest.approx(0.375, abs=0.02)


@pytest.mark.parametrize("label,expected", [("100rubber", 0.0), ("HG", 1.0), ("None", 0.0)])
def test_home_garden_pure_classes(label, expected):
    mask = assign_agri_plots(_all_plantation(), {label: 1.0}, np.random.default_rng(1))
    assert mask.mean() == expected


def test_default_fractions_give_about_35_percent():
    expected = sum(share * cat.home_garden_probability for cat, share in DEFAULT_AGRI_FRACTIONS.items())
    assert expected == pytest.approx(0.35, abs=0.01)
    mask = assign_agri_plots(_all_plantation(40_000), None, np.random.default_rng(2))
    assert mask.mean() == pytest.approx(expected, abs=0.01)
    dominant = [DEFAULT_AGRI_FRACTIONS[AgriCategory.parse(k)]
                for k in ("75-100rubberXHG", "50-75rubberXHG", "25-50rubberXHG")]
    assert dominant == [0.369, 0.296, 0.157]


def test_fractions_must_sum_to_one():
    with pytest.raises(ValueError):
        assign_agri_plots(_all_plantation(), {"HG": 0.5, "100rubber": 0.4}, np.random.default_rng(0))


def test_home_gardens_only_on_plantations(small_landscape):
    mask = assign_agri_plots(small_landscape.landuse, None, np.random.default_rng(4))
    assert not np.any(mask & ~small_landscape.plantation)


def test_food_placement(small_landscape):
    food = init_food(small_landscape, SCENARIOS["S5"], np.random.default_rng(0))
    assert np.all(food >= 0)
    forest_food = food[small_landscape.forest]
    assert forest_food.max() <= 25.0 and np.any(forest_food > 0)
    allowed = small_landscape.forest | small_landscape.agri_plots
    assert np.all(food[~allowed] == 0)
    empty = init_food(small_landscape, replace(SCENARIOS["S1"], forest_food_percent=0.0), np.random.default_rng(0))
    assert np.all(empty[small_landscape.forest] == 0)


def test_forest_presence_fraction():
    spec = SyntheticLandscapeSpec(nrows=400, ncols=400, plantation_share=0.05, river=False, ridge_height=0)
    stack, _ = generate_synthetic_landscape(spec, 3)
    food = init_food(stack, ScenarioConfig(), np.random.default_rng(9))
    assert stack.forest.sum() > 100_000
    assert np.mean(food[stack.forest] > 0) == pytest.approx(0.1, abs=0.01)


def test_food_density_units():
    food = np.full((10, 10), 10.0)
    mask = np.ones((10, 10), bool)
    # 100 cells of 30 m = 0.09 km2 holding 1 t
    assert food_density_t_per_km2(food, mask, 30.0) == pytest.approx(1.0 / 0.09)


def test_temperature_curve_points():
    m = TemperatureModel.uniform(20.0, 30.0)
    assert temperature_at(m, (0, 0), 1, 5) == 20.0
    assert temperature_at(m, (0, 0), 1, 17) == 30.0
    assert temperature_at(m, (0, 0), 1, 11) == pytest.approx(25.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 40), st.floats(0, 20), st.floats(0, 23.999))
def test_temperature_bounded_and_periodic(tmin, spread, hour):
    m = TemperatureModel.uniform(tmin, tmin + spread)
    t = temperature_at(m, (0, 0), 6, hour)
    assert tmin - 1e-9 <= t <= tmin + spread + 1e-9
    other = (hour + 12.0) % 24.0
    # the curve is symmetric about its mean with a 24 h period
    assert t + temperature_at(m, (0, 0), 6, other) == pytest.approx(2 * tmin + spread, abs=1e-9)


def test_temperature_grids():
    tmin = np.array([[20.0, 22.0]])
    tmax = np.array([[30.0, 36.0]])
    m = TemperatureModel({1: (tmin, tmax)})
    np.testing.assert_allclose(temperature_field(m, 1, 17), tmax)
    assert temperature_at(m, (0, 1), 1, 5) == 22.0
    with pytest.raises(ValueError):
        TemperatureModel({1: (tmax, tmin)})
    with pytest.raises(ValueError):
        temperature_at(m, (0, 0), 13, 5)
    with pytest.raises(ValueError):
        temperature_at(m, (0, 0), 1, 24)


@pytest.mark.parametrize("hour,level", [(12, 1.0), (3, 0.0), (7, 1.0), (18.99, 1.0), (19, 0.0), (6.99, 0.0)])
def test_disturbance_window(hour, level):
    assert disturbance_at(DisturbanceSchedule(), hour) == level


def test_disturbance_schedule_validation():
    with pytest.raises(ValueError):
        DisturbanceSchedule(day_level=0.0, night_level=0.5)


def test_flat_synthetic_landscape():
    spec = SyntheticLandscapeSpec(nrows=40, ncols=40, ridge_height=0.0, tilt_per_cell=0.0)
    stack, _ = generate_synthetic_landscape(spec, 0)
    assert stack.slope.max() < 1.0


def test_synthetic_layout(small_landscape):
    spec = SyntheticLandscapeSpec()
    stack, gardens = generate_synthetic_landscape(spec, 0)
    assert stack.plantation.mean() == pytest.approx(0.3, abs=0.01)
    assert stack.water.any() and stack.forest.any()
    assert np.any(stack.slope > 30.0)
    assert np.all(gardens <= stack.plantation)
    np.testing.assert_array_equal(gardens, stack.agri_plots)
    # river is one cell wide
    assert np.all(stack.water.sum(axis=1) <= 1)


def test_synthetic_determinism():
    spec = SyntheticLandscapeSpec(nrows=50, ncols=50)
    a, ga = generate_synthetic_landscape(spec, 11)
    b, gb = generate_synthetic_landscape(spec, 11)
    for name in ("elevation", "slope", "landuse", "buildings", "proximity_water"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(ga, gb)


def test_synthetic_too_small():
    with pytest.raises(ValueError):
        generate_synthetic_landscape(SyntheticLandscapeSpec(nrows=10, ncols=30), 0)
