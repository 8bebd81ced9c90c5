import math
import warnings

import numpy as np
import pytest

from shelab.coeff import Coefficient
from shelab.grid import GridSpec
from shelab.kernel import InitialCondition, initial_convolution
from shelab.noise import NoiseSpec, generate
from shelab.solver import (
    SolverBlowupError,
    load_trajectory,
    save_trajectory,
    solve_batch,
    solve_pair_coupled,
    solve_truncated,
    step_explicit,
)

ZERO = Coefficient.builtin("zero")
ONE = Coefficient.builtin("one")
LINEAR = Coefficient.builtin("linear")


def mkgrid(**kw):
    args = dict(R=4.0, dx=0.1, dt=0.005, T=0.25, boundary="dirichlet")
    args.update(kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return GridSpec(**args)


def zero_noise_row(grid):
    return np.zeros(grid.n_points)


class TestStepExplicit:
    def test_constant_row_is_fixed_point_without_forcing(self):
        g = mkgrid()
        row = np.full(g.n_points, 3.25)
        nxt = step_explicit(row, 0, zero_noise_row(g), ZERO, ZERO, g)
        assert np.array_equal(nxt, row)

    def test_unit_drift_accumulates_dt_per_step_periodic(self):
        g = mkgrid(boundary="periodic")
        row = np.zeros(g.n_points)
        expected = 0.0
        for m in range(g.n_steps):
            row = step_explicit(row, m, zero_noise_row(g), ONE, ZERO, g)
            expected += g.dt
            assert np.all(row == expected)
        assert expected == pytest.approx(g.n_steps * g.dt, rel=1e-12)

    def test_unit_drift_first_step_dirichlet_interior(self):
        g = mkgrid()
        row = step_explicit(np.zeros(g.n_points), 0, zero_noise_row(g), ONE, ZERO, g)
        assert np.all(row[1:-1] == g.dt)
        assert row[0] == 0.0 and row[-1] == 0.0  # frozen ends

    def test_one_step_additive_noise_is_scaled_increments(self):
        g = mkgrid()
        field = generate(NoiseSpec(seed=3, replication=0, grid=g))
        row = step_explicit(np.zeros(g.n_points), 0, field.row(0), ZERO, ONE, g)
        assert np.array_equal(row[1:-1], field.row(0)[1:-1] / g.dx)

    def test_one_step_noise_variance_is_dt_over_dx(self):
        g = mkgrid(R=2.0)
        vals = []
        for rep in range(200):
            field = generate(NoiseSpec(seed=91, replication=rep, grid=g))
            row = step_explicit(np.zeros(g.n_points), 0, field.row(0), ZERO, ONE, g)
            vals.extend(row[1:-1])
        vals = np.asarray(vals)
        target = g.dt / g.dx
        # chi-square band: sd of the sample variance is target * sqrt(2/n)
        assert np.var(vals) == pytest.approx(target, abs=5 * target * math.sqrt(2.0 / vals.size))

    def test_nonfinite_output_aborts_with_location(self):
        g = mkgrid()
        explode = Coefficient.from_callable(
            "explode",
            lambda t, x: np.where(np.arange(x.shape[-1]) == 17, np.inf, 0.0) * np.ones_like(x),
        )
        with pytest.raises(SolverBlowupError) as exc:
            step_explicit(np.zeros(g.n_points), 4, zero_noise_row(g), explode, ZERO, g)
        assert exc.value.step == 4
        assert exc.value.cell == 18  # interior offset 17 maps to lattice cell 18


class TestSolveTruncated:
    def test_deterministic_heat_flow_matches_convolution(self):
        g = mkgrid(R=8.0, dx=0.05, dt=0.001, T=0.25)
        u0 = InitialCondition.indicator(-1.0, 1.0)
        traj = solve_truncated(5.0, ZERO, ZERO, u0, g, NoiseSpec(seed=1, replication=0, grid=g))
        got, t_snap, x_snap = traj.at(0.25, 0.0)
        assert (t_snap, x_snap) == (0.25, 0.0)
        ref = initial_convolution(u0, 0.25, 0.0)
        assert abs(got - ref) <= 2.0 * g.dx

    def test_initial_row_is_exact(self):
        g = mkgrid()
        u0 = InitialCondition.indicator(-1.0, 1.0)
        traj = solve_truncated(2.0, ZERO, LINEAR, u0, g, NoiseSpec(seed=2, replication=0, grid=g))
        assert np.array_equal(traj.values[0], u0(g.xs))

    def test_inactive_clamp_levels_are_bit_identical(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        spec = NoiseSpec(seed=17, replication=0, grid=g)
        a = solve_truncated(30.0, ZERO, LINEAR, u0, g, spec)
        b = solve_truncated(50.0, ZERO, LINEAR, u0, g, spec)
        assert np.array_equal(a.values, b.values)
        # and identical to integrating the raw, unclamped coefficients
        raw = np.empty_like(a.values)
        field = generate(spec)
        raw[0] = u0(g.xs)
        for m in range(g.n_steps):
            raw[m + 1] = step_explicit(
                raw[m], m, field.row(m), lambda t, x: ZERO(t, x), lambda t, x: LINEAR(t, x), g
            )
        assert np.array_equal(a.values, raw)

    def test_determinism(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        spec = NoiseSpec(seed=99, replication=7, grid=g)
        a = solve_truncated(3.0, Coefficient.builtin("affine"), LINEAR, u0, g, spec)
        b = solve_truncated(3.0, Coefficient.builtin("affine"), LINEAR, u0, g, spec)
        assert np.array_equal(a.values, b.values)

    def test_multiplicative_noise_preserves_replication_mean(self):
        # stochastic forcing integrates to zero in expectation
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        vals = []
        for rep in range(400):
            traj = solve_truncated(3.0, ZERO, LINEAR, u0, g, NoiseSpec(seed=314, replication=rep, grid=g))
            vals.append(traj.at(0.25, 0.0)[0])
        vals = np.asarray(vals)
        se = vals.std(ddof=1) / math.sqrt(vals.size)
        assert abs(vals.mean() - 1.0) <= 3.0 * se

    def test_comparison_principle_additive_noise(self):
        g = mkgrid()
        spec = NoiseSpec(seed=5, replication=1, grid=g)
        a = solve_truncated(20.0, ZERO, ONE, InitialCondition.constant(0.5), g, spec)
        b = solve_truncated(20.0, ZERO, ONE, InitialCondition.constant(1.5), g, spec)
        np.testing.assert_allclose(b.values - a.values, 1.0, rtol=0, atol=1e-10)

    def test_refinement_consistency_order_two(self):
        # smooth profile; dt = 0.05 dx^2 keeps the parabolic ratio fixed;
        # probe x-coordinates must be lattice points at every resolution
        u0 = InitialCondition.from_expression("exp(-x^2)", bound=1.0)
        probes = [(0.25, 0.0), (0.25, 1.0)]
        vals = []
        for dx in (0.2, 0.1, 0.05):
            g = mkgrid(R=8.0, dx=dx, dt=0.05 * dx * dx, T=0.25)
            traj = solve_truncated(5.0, ZERO, ZERO, u0, g, NoiseSpec(seed=1, replication=0, grid=g))
            vals.append([traj.at(t, x)[0] for t, x in probes])
        err_coarse = abs(vals[0][0] - vals[1][0]) + abs(vals[0][1] - vals[1][1])
        err_fine = abs(vals[1][0] - vals[2][0]) + abs(vals[1][1] - vals[2][1])
        assert 3.0 <= err_coarse / err_fine <= 5.0

    def test_window_truncation_insensitivity(self):
        u0 = InitialCondition.indicator(-1.0, 1.0)
        outs = []
        for R in (8.0, 12.0):
            g = mkgrid(R=R, dx=0.05, dt=0.001, T=0.25)
            traj = solve_truncated(5.0, ZERO, ZERO, u0, g, NoiseSpec(seed=1, replication=0, grid=g))
            outs.append([traj.at(0.25, x)[0] for x in (-1.0, 0.0, 1.0)])
        assert np.max(np.abs(np.array(outs[0]) - np.array(outs[1]))) < 1e-8


class TestSolvePairCoupled:
    def test_inactive_clamps_give_identical_trajectories(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        low, high = solve_pair_coupled(20.0, ZERO, LINEAR, u0, g, NoiseSpec(seed=8, replication=0, grid=g))
        assert np.array_equal(low.values, high.values)
        assert low.level == 20.0 and high.level == 21.0

    def test_sup_difference_recorded_and_finite(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        low, high = solve_pair_coupled(0.5, ZERO, LINEAR, u0, g, NoiseSpec(seed=8, replication=0, grid=g))
        sup = float(np.max(np.abs(high.values - low.values)))
        assert math.isfinite(sup)
        assert sup > 0  # clamp bound e^0.5 < 1.65 engages for this profile

    def test_lower_level_increases_difference_per_seed(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        for rep in range(3):
            spec = NoiseSpec(seed=2024, replication=rep, grid=g)
            sups = []
            for level in (0.25, 0.75, 1.5):
                low, high = solve_pair_coupled(level, ZERO, LINEAR, u0, g, spec)
                sups.append(float(np.max(np.abs(high.values - low.values))))
            assert sups[0] > sups[1] > sups[2]


class TestSolveBatch:
    def test_batch_matches_single_replication_bitwise(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        steps = np.array([10, 25, 50])
        cells = np.array([0, 20, 40, 60, 80])
        batch = solve_batch((2.0,), ZERO, LINEAR, u0, g, 123, np.arange(6), steps, cells)
        for rep in range(6):
            traj = solve_truncated(2.0, ZERO, LINEAR, u0, g, NoiseSpec(seed=123, replication=rep, grid=g))
            assert np.array_equal(batch.samples[0, rep], traj.values[np.ix_(steps, cells)])

    def test_pair_batch_tracks_sup_difference(self):
        g = mkgrid()
        u0 = InitialCondition.constant(1.0)
        batch = solve_batch((0.5, 1.5), ZERO, LINEAR, u0, g, 123, np.arange(4), np.array([50]), np.array([40]))
        for rep in range(4):
            low, high = solve_pair_coupled(
                0.5, ZERO, LINEAR, u0, g, NoiseSpec(seed=123, replication=rep, grid=g)
            )
            assert batch.sup_abs_diff[rep] == pytest.approx(
                float(np.max(np.abs(high.values - low.values))), rel=0, abs=0
            )

    def test_blowup_is_recorded_and_isolated(self):
        # a drift that returns inf once the state crosses a threshold kills
        # exactly the replications whose noise pushes them there; survivors
        # must be untouched (their paths never see the bomb)
        g = mkgrid(T=0.25)
        u0 = InitialCondition.constant(1.0)
        reps = np.arange(8)
        clean = solve_batch(
            (9.0,), ZERO, LINEAR, u0, g, 5, reps, np.array([g.n_steps]), np.array([40])
        )
        tau = float(np.median(clean.path_max_abs))  # roughly half the paths cross
        bomb = Coefficient.from_callable("bomb", lambda t, x: np.where(x > tau, np.inf, 0.0))
        batch = solve_batch(
            (9.0,), bomb, LINEAR, u0, g, 5, reps, np.array([g.n_steps]), np.array([40])
        )
        assert 0 < len(batch.aborted) < len(reps)
        dead = {a.replication for a in batch.aborted}
        for r in reps:
            if int(r) in dead:
                assert np.isnan(batch.samples[0, r]).all()
            else:
                assert np.isfinite(batch.samples[0, r]).all()
                # surviving replications match their standalone solve exactly
                traj = solve_truncated(
                    9.0, bomb, LINEAR, u0, g, NoiseSpec(seed=5, replication=int(r), grid=g)
                )
                assert batch.samples[0, r, 0, 0] == traj.values[g.n_steps, 40]


def test_trajectory_dump_roundtrip(tmp_path):
    g = mkgrid()
    u0 = InitialCondition.constant(1.0)
    traj = solve_truncated(2.0, ZERO, LINEAR, u0, g, NoiseSpec(seed=4, replication=9, grid=g))
    bin_path = tmp_path / "traj.bin"
    side = tmp_path / "traj.json"
    save_trajectory(traj, bin_path, side)
    back = load_trajectory(bin_path, side)
    assert np.array_equal(back.values, traj.values)
    assert back.grid == traj.grid
    assert back.level == traj.level
    assert back.noise_spec == traj.noise_spec
    assert back.provenance == traj.provenance


def test_trajectory_dump_rejects_garbage(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\x00" * 200)
    with pytest.raises(ValueError, match="not a trajectory dump"):
        load_trajectory(p)
