import numpy as np
import pytest

from alefsi import iteration as it
from alefsi.errors import CollisionGuard, InconsistentConfig
from alefsi.mesh import DISK, Geometry, generate_mesh
from alefsi.navier_stokes import FluidParams
from alefsi.rigid_body import RigidParams, RigidState, RigidTrajectory

TAU = 5e-4
GEOM = Geometry(target_h=0.12)
FLUID = FluidParams(1.0, 1.0)
HEAVY = RigidParams(200 / np.pi, 0.1)


@pytest.fixture(scope="module")
def mesh0():
    return generate_mesh(GEOM)


def at_rest():
    return RigidState(GEOM.disk_center0, (0.0, 0.0), 0.0)


def cfg(**kw):
    return it.IterationConfig(**{"tau": TAU, "T": 2 * TAU, "k_max": 1, **kw})


def test_freefall_guess():
    g = it.initial_guess_freefall(HEAVY, at_rest(), 0.01, 4)
    t = 0.01 * np.arange(5)
    np.testing.assert_allclose(g.v[:, 1], -9.8 * t)
    np.testing.assert_allclose(g.q[:, 1], 0.5 - 4.9 * t**2)
    np.testing.assert_array_equal(g.q[:, 0], 0.5)
    assert np.all(g.omega == 0)


def test_freefall_guess_with_initial_velocity():
    start = RigidState((0.5, 0.5), (1.0, 2.0), 0.3)
    g = it.initial_guess_freefall(HEAVY, start, 0.1, 2)
    np.testing.assert_allclose(g.q[2], [0.7, 0.5 + 0.4 - 4.9 * 0.04])
    np.testing.assert_allclose(g.omega, 0.3)


@pytest.mark.parametrize(
    "kw",
    [
        dict(schedule="parallel"),
        dict(force_method="stress"),
        dict(extension="elastic"),
        dict(tau=0.0),
        dict(k_max=0),
        dict(collision_fraction=1.0),
        dict(snapshot_stride=-1),
        dict(T=1.3 * TAU),
    ],
)
def test_config_validation(kw):
    with pytest.raises(InconsistentConfig):
        cfg(**kw)


def test_n_steps():
    assert it.IterationConfig(tau=5e-4, T=0.1).n_steps == 200
    assert it.IterationConfig(tau=2.5e-5, T=0.05).n_steps == 2000


def test_rest_is_a_fixed_point(mesh0):
    rigid = RigidParams(200 / np.pi, 0.1, gravity=(0.0, 0.0))
    guess = it.initial_guess_freefall(rigid, at_rest(), TAU, 2)
    traj, diag, _ = it.apply_F(guess, GEOM, FLUID, rigid, cfg(), mesh0=mesh0)
    assert np.abs(traj.as_array() - guess.as_array()).max() < 1e-12
    assert diag.max_divergence < 1e-10


def test_guess_length_checked(mesh0):
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 3)
    with pytest.raises(InconsistentConfig):
        it.apply_F(guess, GEOM, FLUID, HEAVY, cfg(), mesh0=mesh0)


def test_initial_state_must_match_geometry():
    guess = it.initial_guess_freefall(HEAVY, RigidState((0.4, 0.5), (0, 0), 0), TAU, 2)
    with pytest.raises(InconsistentConfig):
        it.apply_F(guess, GEOM, FLUID, HEAVY, cfg())


def test_drag_opposes_fall(mesh0):
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 4)
    traj, _, _ = it.apply_F(guess, GEOM, FLUID, HEAVY, cfg(T=4 * TAU), mesh0=mesh0)
    # slower than free fall, but still falling
    assert guess.v[-1, 1] < traj.v[-1, 1] < 0
    assert abs(traj.v[-1, 0]) < 1e-5 * abs(traj.v[-1, 1]) and 0.1 * abs(traj.omega[-1]) < 1e-2 * abs(traj.v[-1, 1])


def test_apply_f_is_deterministic_and_history_free(mesh0):
    c = cfg(T=3 * TAU, k_max=2)
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 3)
    hist = it.run_global(guess, GEOM, FLUID, HEAVY, c)
    # the second image depends only on the first, not on the path to it
    again, _, _ = it.apply_F(hist.trajectories[0], GEOM, FLUID, HEAVY, c, mesh0=mesh0)
    np.testing.assert_array_equal(again.as_array(), hist.trajectories[1].as_array())
    first, _, _ = it.apply_F(guess, GEOM, FLUID, HEAVY, c, mesh0=mesh0)
    np.testing.assert_array_equal(first.as_array(), hist.trajectories[0].as_array())


def test_history_bookkeeping():
    c = cfg(T=2 * TAU, k_max=3)
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 2)
    hist = it.run_global(guess, GEOM, FLUID, HEAVY, c)
    assert len(hist) == 3
    assert hist.summaries.shape == (3, 5)
    d0 = np.linalg.norm(hist.trajectories[0].as_array()[:, :5].ravel() - guess.as_array().ravel())
    assert hist.distances[0] == pytest.approx(hist.trajectories[0].distance(guess))
    assert hist.distances[0] == pytest.approx(d0)
    # contraction on this short horizon
    assert hist.distances[2] < hist.distances[1] < hist.distances[0]


def test_tolerance_stops_early():
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 2)
    hist = it.run_global(guess, GEOM, FLUID, HEAVY, cfg(k_max=4, trajectory_tol=np.inf))
    assert len(hist) == 1


def test_callback_sees_every_iteration():
    seen = []
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 1)
    it.run_global(guess, GEOM, FLUID, HEAVY, cfg(T=TAU, k_max=2), callback=lambda k, h: seen.append((k, len(h))))
    assert seen == [(0, 1), (1, 2)]


def test_per_timestep_first_step_matches_global(mesh0):
    # at n = 1 the predictor is the free-fall guess, so one inner iteration
    # reproduces the first step of the first global image
    c = cfg(T=2 * TAU, k_max=1)
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 2)
    glob, _, _ = it.apply_F(guess, GEOM, FLUID, HEAVY, c, mesh0=mesh0)
    per = it.run_per_timestep(GEOM, FLUID, HEAVY, c.__class__(**{**c.__dict__, "schedule": "per_timestep"}), at_rest())
    np.testing.assert_allclose(per.trajectory.state(1).as_array(), glob.state(1).as_array(), rtol=0, atol=1e-14)
    assert per.trajectory.n_steps == 2
    assert [len(i) for i in per.increments] == [1, 1]


def test_per_timestep_increments_shrink():
    c = cfg(schedule="per_timestep", T=2 * TAU, k_max=3)
    per = it.run_per_timestep(GEOM, FLUID, HEAVY, c, at_rest())
    for incs in per.increments:
        assert incs[2] < incs[1] < incs[0]


def test_predictor_is_freefall_from_rest():
    g = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 1)
    p = it.predictor(at_rest(), HEAVY, TAU)
    np.testing.assert_allclose(p.as_array(), g.state(1).as_array(), atol=1e-15)


def test_collision_guard_is_annotated(mesh0):
    start = RigidState(GEOM.disk_center0, (0.0, -10.0), 0.0)
    guess = it.initial_guess_freefall(HEAVY, start, TAU, 2)
    with pytest.raises(CollisionGuard) as info:
        it.apply_F(guess, GEOM, FLUID, HEAVY, cfg(collision_fraction=0.999), iteration=3, mesh0=mesh0)
    assert info.value.iteration == 3
    assert info.value.timestep == 1
    assert "k=3" in str(info.value)


def test_exact_motion_translates_disk_nodes(mesh0):
    prev = RigidState((0.5, 0.5), (0.0, 0.0), 0.0)
    new = RigidState((0.5, 0.49), (0.0, -20.0), 0.0)
    V = np.zeros((mesh0.n_nodes, 2))
    moved = it.advance_mesh(mesh0, V, prev, new, TAU, exact=True)
    disk = mesh0.node_tags == DISK
    np.testing.assert_allclose(moved.nodes[disk] - mesh0.nodes[disk], [[0.0, -0.01]] * disk.sum(), atol=1e-14)
    np.testing.assert_allclose(moved.disk_center, (0.5, 0.49), atol=1e-15)


def test_euler_motion_uses_previous_velocity(mesh0):
    prev = RigidState((0.5, 0.5), (0.0, -2.0), 0.0)
    new = RigidState((0.5, 0.49), (0.0, -20.0), 0.0)
    V = np.tile([0.0, -2.0], (mesh0.n_nodes, 1))
    moved = it.advance_mesh(mesh0, V, prev, new, TAU, exact=False)
    np.testing.assert_allclose(moved.nodes - mesh0.nodes, np.tile([0.0, -2.0 * TAU], (mesh0.n_nodes, 1)), atol=1e-13)


def test_snapshots_follow_stride(mesh0):
    c = cfg(T=4 * TAU, snapshot_stride=2)
    guess = it.initial_guess_freefall(HEAVY, at_rest(), TAU, 4)
    _, _, snaps = it.apply_F(guess, GEOM, FLUID, HEAVY, c, mesh0=mesh0)
    assert [s.timestep for s in snaps] == [0, 2, 4]
    assert snaps[-1].speed.shape == (mesh0.n_vertices,)
