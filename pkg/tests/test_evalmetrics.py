import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajattn import evalmetrics as em
from trajattn.geomcore import Extrinsics
from trajattn.synthoracle import apply_global, drift_pair, random_extrinsics, random_pose_path


@pytest.fixture
def path(rng):
    return random_pose_path(rng, 10)


def test_self_alignment_is_identity(path):
    T, s = em.rigid_align(path, path)
    np.testing.assert_allclose(T.matrix, np.eye(4), atol=1e-12)
    assert s == 1.0


def test_recovers_known_transform(rng, path):
    T0 = random_extrinsics(rng)
    T, s = em.rigid_align(apply_global(path, T0), path)
    np.testing.assert_allclose(T.matrix, T0.inverse().matrix, atol=1e-9)


def test_recovers_scale(path):
    est = path.copy()
    est[:, :3, 3] *= 2.0
    _, s = em.rigid_align(est, path, with_scale=True)
    assert s == pytest.approx(0.5, abs=1e-12)
    assert em.ate(est, path, with_scale=True) < 1e-12


def test_degenerate_positions(rng):
    poses = np.tile(np.eye(4), (4, 1, 1))
    with pytest.raises(em.DegenerateInputError):
        em.rigid_align(poses, random_pose_path(rng, 4))


def test_ate_examples(rng, path):
    assert em.ate(path, path) == 0.0
    shifted = path.copy()
    shifted[:, :3, 3] += [1.0, -2.0, 0.5]
    assert em.ate(shifted, path) < 1e-12
    with pytest.raises(ValueError):
        em.ate(path[:5], path)


def test_ate_single_perturbation_matches_scalar_loop(path):
    est = path.copy()
    est[4, :3, 3] += [0.3, 0.0, 0.0]
    T, s = em.rigid_align(est, path)
    total = 0.0
    for i in range(len(path)):
        aligned = T.rotation @ est[i, :3, 3] + T.translation
        total += sum((aligned[j] - path[i, j, 3]) ** 2 for j in range(3))
    assert em.ate(est, path) == pytest.approx(np.sqrt(total / len(path)), rel=1e-12)
    assert em.ate(est, path) > 0


def test_rpe_examples(rng, path):
    r = em.rpe(path, path)
    assert r.trans_m < 1e-12 and r.rot_deg < 1e-6
    moved = apply_global(path, random_extrinsics(rng))
    r = em.rpe(moved, path)
    assert r.trans_m < 1e-9 and r.rot_deg < 1e-6
    r = em.rpe(drift_pair(path, 1.0, axis=(0.3, 1.0, -0.2)), path)
    assert abs(r.rot_deg - 1.0) <= 1e-6
    with pytest.raises(ValueError):
        em.rpe(path[:2], path[:2], delta=2)


def test_rotation_angle_small_and_large():
    from trajattn.geomcore import rotation_about_axis
    for deg in (1e-7, 1e-3, 1.0, 90.0, 179.9):
        R = rotation_about_axis([1.0, 2.0, 3.0], np.radians(deg))
        assert np.degrees(em.rotation_angle(R)) == pytest.approx(deg, rel=1e-8)


def test_evaluate_report_keys(path):
    rep = em.evaluate(path, path)
    assert set(rep) == {"ate_m", "rpe_trans_m", "rpe_rot_deg"}
    assert all(v >= 0 for v in rep.values())


def test_accepts_extrinsics_lists(rng):
    poses = [random_extrinsics(rng) for _ in range(4)]
    assert em.ate(poses, [p.matrix for p in poses]) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_invariances(seed, delta):
    rng = np.random.default_rng(seed)
    gt = random_pose_path(rng, 8)
    est = gt @ np.stack([random_extrinsics(rng, 0.05).matrix for _ in range(8)])
    T = random_extrinsics(rng)
    assert abs(em.ate(apply_global(est, T), gt) - em.ate(est, gt)) <= 1e-9
    a = em.rpe(est, gt, delta)
    b = em.rpe(apply_global(est, T), gt, delta)
    c = em.rpe(est, apply_global(gt, T), delta)
    assert abs(a.trans_m - b.trans_m) <= 1e-9 and abs(a.trans_m - c.trans_m) <= 1e-9
    assert abs(a.rot_deg - b.rot_deg) <= 1e-7 and abs(a.rot_deg - c.rot_deg) <= 1e-7
    assert abs(a.rot_deg - em.rpe(gt, est, delta).rot_deg) <= 1e-7
    assert all(np.isfinite(v) and v >= 0 for v in (*a, em.ate(est, gt)))
