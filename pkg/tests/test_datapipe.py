import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccsrl.datapipe import (
    Dataset,
    NormStats,
    Normalizer,
    build_dataset,
    denormalize,
    fit_stats,
    generate_dataset,
    normalize,
    read_dataset,
    sample_schedule,
    simulate_trajectories,
    split,
    write_dataset,
)
from ccsrl.datapipe.dataset import _run_trajectory
from ccsrl.errors import ArtifactError, ConfigurationError, ContractError, FingerprintMismatch
from ccsrl.simcore import ControlBounds, model_fingerprint

from conftest import small_model

STATS = NormStats(2200.0, 2500.0, 0.0, 50.0, 0.0, 1.0e6)


@pytest.fixture(scope="module")
def tiny_model():
    return small_model(n=10, seed=5)


@pytest.fixture(scope="module")
def tiny_ds(tiny_model):
    return generate_dataset(tiny_model, n_traj=4, n_steps=3, seed=11, control_period=30.0)


def fabricated(model, n_traj, n_steps, seed=0):
    """Physically shaped random arrays, no simulation needed."""
    rng = np.random.default_rng(seed)
    nb = model.grid.n_cells
    n_p, n_i = len(model.producers), len(model.injectors)
    states = np.concatenate(
        [rng.uniform(2100, 2600, (n_traj, n_steps + 1, nb)), rng.uniform(0, 1, (n_traj, n_steps + 1, nb))], axis=2
    )
    lo, hi = model.bounds.arrays(n_p, n_i)
    controls = rng.uniform(lo, hi, (n_traj, n_steps, n_p + n_i))
    obs = np.concatenate(
        [rng.uniform(0, 40, (n_traj, n_steps, n_p)), rng.uniform(0, 5e5, (n_traj, n_steps, n_p)),
         rng.uniform(2300, 3000, (n_traj, n_steps, n_i))],
        axis=2,
    )
    return states, controls, obs


# ------------------------------------------------------------ schedules
def test_schedule_within_bounds_and_seeded():
    b = ControlBounds()
    s1 = sample_schedule(7, b, 4, 5, 20)
    s2 = sample_schedule(7, b, 4, 5, 20)
    lo, hi = b.arrays(4, 5)
    assert len(s1) == 20
    for a, c in zip(s1, s2):
        assert np.array_equal(a.to_array(), c.to_array())
        assert np.all(a.to_array() >= lo) and np.all(a.to_array() <= hi)
    assert not np.array_equal(s1[0].to_array(), sample_schedule(8, b, 4, 5, 20)[0].to_array())


def test_schedule_bhp_mean_moment():
    b = ControlBounds()
    sched = sample_schedule(3, b, 1, 1, 10_000)
    bhp = np.array([u.producer_bhp[0] for u in sched])
    sigma = (b.bhp_high - b.bhp_low) / np.sqrt(12.0) / np.sqrt(bhp.size)
    assert abs(bhp.mean() - 2350.0) < 3 * sigma


# -------------------------------------------------------- normalization
def test_normalize_endpoints_and_midpoint():
    assert normalize(2200.0, STATS, "pressure") == 0.0
    assert normalize(2500.0, STATS, "pressure") == 1.0
    assert normalize(2350.0, STATS, "pressure") == pytest.approx(0.5, rel=1e-9)
    assert normalize(0.3, STATS, "z") == 0.3


def test_normalize_round_trip_sweep():
    rng = np.random.default_rng(0)
    for fam in ("pressure", "z", "water", "gas"):
        lo, hi = STATS.bounds(fam)
        v = rng.uniform(lo, hi, 1000)
        back = denormalize(normalize(v, STATS, fam), STATS, fam)
        assert np.max(np.abs(back - v) / np.maximum(np.abs(v), 1e-300)) <= 1e-12


@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=2, max_size=30))
@settings(max_examples=50, deadline=None)
def test_normalize_monotone(vals):
    v = np.array(vals)
    n = normalize(v, STATS, "pressure")
    order = np.argsort(v, kind="stable")
    assert np.all(np.diff(n[order]) >= 0)


def test_degenerate_family_rejected():
    with pytest.raises(ConfigurationError):
        NormStats(1.0, 1.0, 0.0, 1.0, 0.0, 1.0)
    with pytest.raises(ContractError):
        STATS.bounds("temperature")


def test_fit_stats_covers_bounds_with_margin():
    s = fit_stats(np.array([2300.0, 2400.0]), (2200.0, 2500.0), np.array([2600.0]), np.array([0.0, 10.0]),
                  (1e5, 1e6), np.array([0.0, 2e5]))
    assert s.p_min == pytest.approx(2200 - 4.0) and s.p_max == pytest.approx(2600 + 4.0)
    assert s.qw_min == pytest.approx(-0.1) and s.qw_max == pytest.approx(10.1)
    assert s.qg_min == pytest.approx(-1e4) and s.qg_max == pytest.approx(1e6 + 1e4)


def test_normalizer_vector_families():
    nz = Normalizer(STATS, n_cells=2, n_prod=1, n_inj=1)
    x = np.array([2200.0, 2500.0, 0.25, 0.75])
    assert np.allclose(nz.norm(x, "x"), [0, 1, 0.25, 0.75])
    assert np.allclose(nz.norm([2350.0, 5e5], "u"), [0.5, 0.5])
    assert np.allclose(nz.norm([25.0, 2.5e5, 2500.0], "y"), [0.5, 0.25, 1.0])
    y = np.array([3.0, 7e4, 2410.0])
    assert np.allclose(nz.denorm(nz.norm(y, "y"), "y"), y, rtol=1e-13)
    with pytest.raises(ContractError):
        nz.norm([1.0, 2.0], "x")


# ------------------------------------------------------------ generation
def test_generated_dataset_shapes(tiny_model, tiny_ds):
    nb = tiny_model.grid.n_cells
    assert len(tiny_ds) == 12
    assert tiny_ds.x.shape == (12, 2 * nb) and tiny_ds.x.dtype == np.float32
    assert tiny_ds.u.shape == (12, tiny_model.n_controls)
    assert tiny_ds.y.shape == (12, tiny_model.n_outputs)
    assert np.array_equal(tiny_ds.step_index, np.tile(np.arange(3), 4))
    assert tiny_ds.out_of_range_fraction() == 0.0
    # consecutive tuples chain: x_{t+1} of step t is x_t of step t+1
    assert np.array_equal(tiny_ds.x_next[0], tiny_ds.x[1])
    assert tiny_ds.meta["model_fingerprint"] == model_fingerprint(tiny_model)


def test_single_tuple(tiny_model):
    ds = generate_dataset(tiny_model, n_traj=1, n_steps=1, seed=0, control_period=10.0)
    assert len(ds) == 1 and ds.step_index.tolist() == [0]


def test_count_full_profile(tiny_model):
    ds = build_dataset(tiny_model, *fabricated(tiny_model, 600, 20))
    assert len(ds) == 12000


def test_per_trajectory_seeding_is_order_free(tiny_model):
    states, controls, _ = simulate_trajectories(tiny_model, 3, 2, seed=4, control_period=20.0)
    for k in (2, 0, 1):
        direct = _run_trajectory((tiny_model, 4, k, 2, 20.0, {}))
        assert np.array_equal(states[k], direct[0]) and np.array_equal(controls[k], direct[1])


# ----------------------------------------------------------------- split
def test_split_full_profile_counts(tiny_model):
    ds = build_dataset(tiny_model, *fabricated(tiny_model, 600, 20, seed=1))
    tr, te = split(ds, (3, 1), seed=2)
    assert (tr.n_traj, te.n_traj) == (450, 150)
    assert (len(tr), len(te)) == (9000, 3000)
    assert set(tr.traj_ids).isdisjoint(te.traj_ids)
    assert sorted(np.r_[tr.traj_ids, te.traj_ids]) == list(range(600))
    # whole trajectories move together
    k = te.traj_ids[0]
    assert np.array_equal(te.trajectory(0)["u"], ds.trajectory(int(k))["u"])


def test_split_all_train_and_errors(tiny_ds):
    tr, te = split(tiny_ds, (1, 0))
    assert tr.n_traj == 4 and te.n_traj == 0 and len(te) == 0
    with pytest.raises(ConfigurationError):
        split(tiny_ds.subset([0]), (3, 1))
    with pytest.raises(ConfigurationError):
        split(tiny_ds, (0, 0))


def test_split_seeded(tiny_ds):
    a, _ = split(tiny_ds, (1, 1), seed=5)
    b, _ = split(tiny_ds, (1, 1), seed=5)
    assert np.array_equal(a.traj_ids, b.traj_ids)


# ------------------------------------------------------------- container
def test_container_round_trip(tmp_path, tiny_ds):
    path = tmp_path / "d.e2cd"
    man = write_dataset(path, tiny_ds)
    back = read_dataset(path, expected_fingerprint=tiny_ds.meta["model_fingerprint"])
    for name in ("x", "u", "x_next", "y"):
        assert np.array_equal(getattr(back, name), getattr(tiny_ds, name))
    assert back.stats == tiny_ds.stats
    assert back.grid_shape == tiny_ds.grid_shape and back.n_prod == tiny_ds.n_prod
    assert man["n_tuples"] == 12


def test_container_layout(tmp_path, tiny_ds):
    path = tmp_path / "d.e2cd"
    write_dataset(path, tiny_ds)
    buf = path.read_bytes()
    assert buf[:4] == b"E2CD"
    assert struct.unpack_from("<H", buf, 4) == (1,)
    nb = tiny_ds.n_cells
    assert struct.unpack_from("<5Q", buf, 6) == (4, 3, nb, tiny_ds.u.shape[1], tiny_ds.y.shape[1])
    assert np.array_equal(np.frombuffer(buf, "<f8", 8, 46), tiny_ds.stats.as_array())
    first = np.frombuffer(buf, "<f4", 2 * nb, 110)
    assert np.array_equal(first, tiny_ds.x[0])


def test_digest_is_deterministic(tmp_path, tiny_model, tiny_ds):
    again = generate_dataset(tiny_model, n_traj=4, n_steps=3, seed=11, control_period=30.0)
    m1 = write_dataset(tmp_path / "a.e2cd", tiny_ds)
    m2 = write_dataset(tmp_path / "b.e2cd", again)
    assert m1["sha256"] == m2["sha256"]


def test_corruption_and_fingerprint_detected(tmp_path, tiny_ds):
    path = tmp_path / "d.e2cd"
    write_dataset(path, tiny_ds)
    with pytest.raises(FingerprintMismatch):
        read_dataset(path, expected_fingerprint="0" * 64)
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ArtifactError):
        read_dataset(path)


def test_dataset_rejects_inconsistent_counts():
    z = np.zeros((3, 4), np.float32)
    with pytest.raises(ContractError):
        Dataset(z, z[:, :2], z, z[:, :3], STATS, n_traj=2, n_steps=2, grid_shape=(1, 2), n_prod=1, n_inj=1)
