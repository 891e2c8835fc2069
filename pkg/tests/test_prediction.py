import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cbfplan.prediction import (
    ActionSet,
    GridSpec,
    ObservationError,
    OccupancyMap,
    PredictorConfig,
    TrackletStore,
    extract_disc,
    predict,
    predict_discs,
)


def walker(store, aid, start, vel, n=4, dt=0.1, t0=0.0):
    for i in range(n):
        store.ingest_observation(aid, t0 + i * dt, (start[0] + vel[0] * i * dt, start[1] + vel[1] * i * dt))
    return store


# --- tracklets -------------------------------------------------------------------


def test_ingest_examples():
    store = TrackletStore()
    store.ingest_observation(3, 0.0, (1.0, 2.0))
    assert len(store) == 1 and len(store[3]) == 1
    with pytest.raises(ObservationError):
        store.ingest_observation(3, 0.0, (1.0, 2.1))
    with pytest.raises(ObservationError):
        store.ingest_observation(3, -0.1, (1.0, 2.1))
    store.ingest_observation("b", 0.0, (0.0, 0.0))
    store.ingest_observation(3, 0.1, (1.1, 2.0))
    store.ingest_observation("b", 0.1, (0.0, -0.1))
    assert len(store[3]) == 2 and len(store["b"]) == 2
    assert store[3].velocity() == pytest.approx((1.0, 0.0))
    assert store["b"].velocity() == pytest.approx((0.0, -1.0))


def test_config_validation():
    with pytest.raises(ValueError):
        PredictorConfig(samples=0)
    with pytest.raises(ValueError):
        PredictorConfig(horizon=0)
    with pytest.raises(ValueError):
        ActionSet(heading_offsets=())


# --- predictor -------------------------------------------------------------------


def test_empty_store_gives_no_maps():
    assert predict(TrackletStore(), PredictorConfig()) == {}


def argmax_center(m: OccupancyMap):
    r, c = divmod(int(np.argmax(m.cells)), m.cells.shape[1])
    return np.array(m.cell_center(r, c))


def test_constant_velocity_argmax_tracks_extrapolation():
    store = walker(TrackletStore(), "w", (0.03, 0.03), (1.0, 0.0))
    last = np.array(store["w"].last_position)
    cfg = PredictorConfig(horizon=10, samples=10_000, goals=((100.0, 0.03),), seed=1)
    maps = predict(store, cfg)["w"]
    assert len(maps) == 11
    for k, m in enumerate(maps):
        expected = last + np.array([1.0, 0.0]) * k * cfg.dt
        assert np.max(np.abs(argmax_center(m) - expected)) <= cfg.grid.cell_size + 1e-9


def test_standing_agent_stays_put():
    store = walker(TrackletStore(), "s", (1.05, 2.05), (0.0, 0.0))
    maps = predict(store, PredictorConfig(goals=((5.0, 5.0), (-5.0, 0.0)), seed=3))["s"]
    for m in maps:
        assert argmax_center(m) == pytest.approx((1.05, 2.05))
    for m in maps:
        assert m.cells.max() == pytest.approx(1.0)


def test_single_observation_is_predicted_standing():
    store = TrackletStore().ingest_observation("x", 0.0, (0.55, 0.55))
    maps = predict(store, PredictorConfig(goals=((5.0, 0.0),)))["x"]
    for m in maps:
        assert m.cells.sum() == pytest.approx(1.0)
        assert argmax_center(m) == pytest.approx((0.55, 0.55))


def test_map_timestamps_and_steps():
    store = walker(TrackletStore(), "w", (0.0, 0.0), (1.0, 0.5), t0=2.0)
    maps = predict(store, PredictorConfig(horizon=5, goals=((9.0, 4.0),)))["w"]
    assert [m.step for m in maps] == list(range(6))
    assert [m.timestamp for m in maps] == pytest.approx([2.3 + 0.1 * k for k in range(6)])


def test_maps_are_probabilities():
    store = walker(TrackletStore(), "a", (0.0, 0.0), (1.0, 0.0))
    walker(store, "b", (2.0, 2.0), (0.0, -1.2))
    cfg = PredictorConfig(horizon=10, samples=300, goals=((5, 0), (0, -5), (-5, 0)), grid=GridSpec(bounds=(-1, -1, 1.5, 3)))
    for maps in predict(store, cfg).values():
        for m in maps:
            assert np.all(m.cells >= 0) and np.all(m.cells <= 1)
            assert m.cells.sum() <= 1 + 1e-6
    # bounds drop mass that walks off the grid
    assert any(m.cells.sum() < 1 for m in predict(store, cfg)["a"])


def test_prediction_is_deterministic():
    store = walker(TrackletStore(), "a", (0.0, 0.0), (1.0, 0.3))
    cfg = PredictorConfig(goals=((5, 0), (0, 5)))
    a = predict(store, cfg, np.random.default_rng(9))
    b = predict(store, cfg, np.random.default_rng(9))
    for m1, m2 in zip(a["a"], b["a"]):
        assert np.array_equal(m1.cells, m2.cells) and m1.origin == m2.origin
    d1 = predict_discs(store, cfg, 0.2, np.random.default_rng(4))
    d2 = predict_discs(store, cfg, 0.2, np.random.default_rng(4))
    assert d1 == d2


def test_goal_choice_follows_heading():
    # walking east: the east goal should dominate the step-10 mass
    store = walker(TrackletStore(), "a", (0.0, 0.0), (1.0, 0.0))
    cfg = PredictorConfig(horizon=10, samples=4000, goals=((6.0, 0.0), (-6.0, 0.0)), seed=2)
    m = predict(store, cfg)["a"][-1]
    X, _ = m.cell_centers()
    assert m.cells[X > 0].sum() > 0.9


# --- level-set discs -------------------------------------------------------------


def occ(cells, origin=(0.0, 0.0), cs=0.1):
    return OccupancyMap(origin, cs, np.asarray(cells, dtype=float), 0.0, "a")


def test_disc_single_certain_cell():
    d = extract_disc(occ([[0, 0, 0], [0, 1, 0]]), 0.2)
    assert d.center == pytest.approx((0.15, 0.15)) and d.radius == 0 and not d.vacuous


def test_disc_uniform_block_uses_first_tied_cell():
    cells = np.zeros((5, 5))
    cells[1:4, 1:4] = 0.25
    d = extract_disc(occ(cells), 0.2)
    assert d.center == pytest.approx((0.15, 0.15))  # row 1, col 1
    # brute force: farthest qualifying cell centre from the first tied cell
    rows, cols = np.nonzero(cells >= 0.2)
    assert d.radius == pytest.approx(max(math.hypot(r - 1, c - 1) * 0.1 for r, c in zip(rows, cols)))
    assert d.radius == pytest.approx(math.sqrt(8) * 0.1)


def test_disc_only_argmax_clears_threshold():
    d = extract_disc(occ([[0.1, 0.15], [0.5, 0.19]]), 0.2)
    assert d.radius == 0 and d.center == pytest.approx((0.05, 0.15))


def test_disc_vacuous_cases():
    d = extract_disc(occ(np.zeros((3, 3)), origin=(2.0, 3.0)), 0.2)
    assert d.vacuous and d.radius == 0 and d.center == (2.0, 3.0)
    d = extract_disc(occ([[0.1, 0.05]]), 0.2)
    assert d.vacuous
    with pytest.raises(ValueError):
        extract_disc(occ([[1.0]]), 0.0)


prob_maps = arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(0, 1))


@settings(max_examples=200)
@given(cells=prob_maps)
def test_disc_covers_threshold_cells_and_shrinks_with_threshold(cells):
    m = occ(cells, origin=(-0.3, 0.7))
    radii = []
    for p in (0.1, 0.2, 0.4):
        d = extract_disc(m, p)
        radii.append(d.radius)
        rows, cols = np.nonzero(cells >= p)
        for r, c in zip(rows, cols):
            x, y = m.cell_center(r, c)
            assert math.hypot(x - d.center[0], y - d.center[1]) <= d.radius + 1e-12
    assert radii[0] >= radii[1] >= radii[2]
