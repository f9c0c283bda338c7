import numpy as np
import pytest
from scipy import optimize

from errors import ConfigError, InvalidArgumentError
from game import (
    GameDefinition,
    check_strong_monotonicity,
    connectivity_game,
    create_game,
    estimate_lipschitz,
    pseudo_gradient,
    quadratic_game,
    solve_ne,
)

from conftest import SIX_PLAYER_C


def _fd_own_gradient(game, i, x, step=1e-6):
    n = game.n
    g = np.zeros(n)
    for k in range(n):
        e = np.zeros(game.dim)
        e[i * n + k] = step
        g[k] = (game.cost(i, x + e) - game.cost(i, x - e)) / (2.0 * step)
    return g


def test_connectivity_gradient_at_origin(connectivity):
    x = np.zeros(12)
    g = connectivity.grad(0, x)
    assert np.allclose(g, [2.0, 2.0])


def test_connectivity_gradient_matches_finite_differences(connectivity, rng):
    for _ in range(100):
        x = rng.uniform(-3.0, 3.0, connectivity.dim)
        for i in range(connectivity.N):
            g = connectivity.grad(i, x)
            g_fd = _fd_own_gradient(connectivity, i, x)
            assert np.linalg.norm(g - g_fd) <= 1e-5 * max(1.0, np.linalg.norm(g))


def test_quadratic_gradient_matches_finite_differences(quad_raw, rng):
    game = quadratic_game(quad_raw["game"]["Q"], quad_raw["game"]["c"])
    for _ in range(20):
        x = rng.uniform(-3.0, 3.0, game.dim)
        for i in range(game.N):
            assert np.allclose(game.grad(i, x), _fd_own_gradient(game, i, x), atol=1e-6)


def test_connectivity_ne_close_to_published_profile(connectivity, six_player_ne):
    x = solve_ne(connectivity)
    # published values are rounded loosely; the largest gap is 0.017 at x_61
    assert np.max(np.abs(x - six_player_ne)) < 0.02
    assert np.linalg.norm(pseudo_gradient(connectivity, x)) <= 1e-8


def test_connectivity_ne_second_coordinates_closed_form(connectivity):
    # second coordinates are linear: 14 x_i2 − 2 Σ_j x_j2 + c_i2 = 0
    x = solve_ne(connectivity).reshape(6, 2)
    c2 = np.array(SIX_PLAYER_C, dtype=float)[:, 1]
    expected = (2.0 * (-c2.sum() / 2.0) - c2) / 14.0
    assert np.allclose(x[:, 1], expected, atol=1e-8)


def test_connectivity_ne_first_coordinates_fixed_point(connectivity):
    # first coordinates solve 14 x_i1 + cos x_i1 − 2 Σ_j x_j1 + c_i1 = 0
    c1 = np.array(SIX_PLAYER_C, dtype=float)[:, 0]

    def residual(z):
        return 14.0 * z + np.cos(z) - 2.0 * z.sum() + c1

    ref = optimize.fsolve(residual, np.zeros(6), xtol=1e-12)
    assert np.abs(residual(ref)).max() < 1e-9
    x = solve_ne(connectivity).reshape(6, 2)
    assert np.allclose(x[:, 0], ref, atol=1e-7)


def test_linear_connectivity_ne_matches_dense_solve():
    game = connectivity_game(SIX_PLAYER_C, include_sin=False)
    M = np.kron(14.0 * np.eye(6) - 2.0 * np.ones((6, 6)), np.eye(2))
    c = np.array(SIX_PLAYER_C, dtype=float).ravel()
    x_ref = np.linalg.solve(M, -c)
    assert np.allclose(solve_ne(game), x_ref, atol=1e-8)


def test_single_player_minimizes_own_cost():
    game = GameDefinition(
        N=1, n=2, cost=lambda i, x: float(x @ x), grad=lambda i, x: 2.0 * x, mu=2.0, lipschitz=[2.0],
    )
    x = solve_ne(game, x0=[3.0, -4.0])
    assert np.allclose(x, 0.0, atol=1e-8)


def test_k1_bound(connectivity):
    assert connectivity.k1_bound == pytest.approx(2.0 / 22.0 ** 2)
    assert 0.001 < connectivity.k1_bound


def test_strong_monotonicity_sampled(connectivity):
    report = check_strong_monotonicity(connectivity, n_samples=1000, seed=0)
    assert report["pass"]
    assert report["min_ratio"] >= 2.0


def test_strong_monotonicity_identity_is_tight():
    game = GameDefinition(N=2, n=1, cost=lambda i, x: 0.5 * x[i] ** 2, grad=lambda i, x: x[i:i + 1],
                          mu=1.0, lipschitz=[1.0, 1.0])
    report = check_strong_monotonicity(game, n_samples=50)
    assert report["pass"]
    assert report["min_ratio"] == pytest.approx(1.0)


def test_strong_monotonicity_detects_violation():
    game = GameDefinition(N=2, n=1, cost=lambda i, x: -0.5 * x[i] ** 2, grad=lambda i, x: -x[i:i + 1],
                          mu=1.0, lipschitz=[1.0, 1.0])
    report = check_strong_monotonicity(game, n_samples=50)
    assert not report["pass"]
    assert report["min_ratio"] == pytest.approx(-1.0)


def test_estimated_lipschitz_below_declared(connectivity):
    est = estimate_lipschitz(connectivity)
    assert len(est) == 6
    assert max(est) <= 22.0
    assert min(est) > 5.0


def test_quadratic_moduli(quad_raw):
    game = quadratic_game(quad_raw["game"]["Q"], quad_raw["game"]["c"])
    assert game.mu == pytest.approx(1.8)
    assert np.allclose(game.lipschitz, np.sqrt(4.2))
    assert game.k1_bound > quad_raw["gains"]["k1"]


def test_quadratic_ne_is_linear_solve(quad_raw):
    game = quadratic_game(quad_raw["game"]["Q"], quad_raw["game"]["c"])
    Q = np.array(game.params["Q"])
    c = np.array(game.params["c"]).ravel()
    assert np.allclose(solve_ne(game), np.linalg.solve(Q, -c), atol=1e-8)


def test_quadratic_rejects_non_monotone():
    with pytest.raises(InvalidArgumentError):
        quadratic_game([[[1.0, 3.0]], [[3.0, 1.0]]], [[0.0], [0.0]])


def test_quadratic_rejects_asymmetric_own_block():
    Q = [[[1.0, 0.5, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]], [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]]
    with pytest.raises(InvalidArgumentError):
        quadratic_game(Q, [[0.0, 0.0], [0.0, 0.0]])


def test_invalid_game_definition():
    with pytest.raises(InvalidArgumentError):
        GameDefinition(N=2, n=1, cost=None, grad=None, mu=0.0, lipschitz=[1.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        GameDefinition(N=2, n=1, cost=None, grad=None, mu=1.0, lipschitz=[1.0])


def test_profile_length_checked(connectivity):
    with pytest.raises(InvalidArgumentError):
        pseudo_gradient(connectivity, np.zeros(5))


def test_solver_rejects_bad_tolerance(connectivity):
    with pytest.raises(InvalidArgumentError):
        solve_ne(connectivity, tol=0.0)


def test_create_game_registry():
    game = create_game("connectivity", c=SIX_PLAYER_C)
    assert game.N == 6 and game.n == 2
    with pytest.raises(ConfigError):
        create_game("potential", c=SIX_PLAYER_C)
    with pytest.raises(ConfigError):
        create_game("connectivity", c=SIX_PLAYER_C, weights=[1.0])
    with pytest.raises(ConfigError):
        create_game("connectivity", c=[[1.0, 2.0, 3.0]])
