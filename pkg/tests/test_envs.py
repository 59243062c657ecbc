"""Environment rules against hand-computed values plus determinism checks."""

import numpy as np
import pytest

from eqmarl.envs import (CARTPOLE_SCALE, CartPoleEnv, CoinGameEnv,
                         MiniGridEnv, cartpole_mdp_matrix, coingame_mdp_matrix,
                         flatten)


# -- transforms -------------------------------------------------------------

def test_coingame_mdp_transform_zero():
    np.testing.assert_array_equal(coingame_mdp_matrix(np.zeros((4, 3, 3))),
                                  np.zeros((4, 3)))


def test_coingame_mdp_transform_weights():
    obs = np.zeros((4, 3, 3))
    obs[1, 2, :] = 1.0  # all three k entries set
    out = coingame_mdp_matrix(obs)
    assert out.shape == (4, 3)
    assert out[1, 2] == pytest.approx(1.0 + 0.5 + 0.25)


def test_cartpole_mdp_transform():
    out = cartpole_mdp_matrix(CARTPOLE_SCALE.copy())
    np.testing.assert_allclose(out, np.ones((4, 3)))
    assert out.shape == (4, 3)


def test_flatten():
    assert flatten(np.zeros((4, 3, 3))).shape == (36,)
    assert flatten(np.zeros((7, 7, 3))).shape == (147,)


# -- CoinGame ---------------------------------------------------------------

def _fixed_coingame(positions, coin_pos, coin_color):
    env = CoinGameEnv(seed=0)
    env.positions = list(positions)
    env.coin_pos = coin_pos
    env.coin_color = coin_color
    return env


def test_coingame_same_color_collection():
    # Agent 1 (blue) steps east onto a blue coin.
    env = _fixed_coingame([(0, 0), (1, 0)], (1, 1), coin_color=1)
    _, rewards, _, info = env.step([1, 2])  # red south, blue east
    assert rewards[1] == 1.0
    assert rewards[0] == 0.0
    assert info["collections"] == [(1, True)]


def test_coingame_wrong_color_collection():
    # Agent 0 (red) steps onto a blue coin: -2 for red, 0 for blue.
    env = _fixed_coingame([(0, 0), (2, 2)], (0, 1), coin_color=1)
    _, rewards, _, info = env.step([2, 0])  # red east onto coin
    assert rewards[0] == -2.0
    assert rewards[1] == 0.0
    assert info["collections"] == [(0, False)]


def test_coingame_boundary_noop():
    env = _fixed_coingame([(0, 1), (2, 2)], (1, 1), coin_color=0)
    env.step([0, 1])  # north from top row: no-op
    assert env.positions[0] == (0, 1)


def test_coingame_respawn_rules():
    env = _fixed_coingame([(0, 0), (1, 0)], (1, 1), coin_color=1)
    env.step([1, 2])
    # New coin: opposite color, not under either agent, on the grid.
    assert env.coin_color == 0
    assert env.coin_pos not in env.positions
    assert 0 <= env.coin_pos[0] < 3 and 0 <= env.coin_pos[1] < 3


def test_coingame_both_agents_collect():
    env = _fixed_coingame([(0, 1), (2, 1)], (1, 1), coin_color=0)
    _, rewards, _, info = env.step([1, 0])  # both step onto the coin
    assert rewards[0] == 1.0   # red coin, red collector
    assert rewards[1] == -2.0  # blue collector, wrong color
    assert len(info["collections"]) == 2


def test_coingame_episode_length():
    env = CoinGameEnv(seed=1)
    rng = np.random.default_rng(2)
    done = False
    steps = 0
    while not done:
        _, _, done, _ = env.step(rng.integers(0, 4, size=2))
        steps += 1
    assert steps == 50
    with pytest.raises(RuntimeError):
        env.step([0, 0])


def test_coingame_observation_structure():
    env = CoinGameEnv(seed=3)
    for agent in range(2):
        obs = env.observe(agent)
        assert obs.shape == (4, 3, 3)
        assert obs[0].sum() == 1.0          # exactly one self cell
        assert obs[1].sum() == 1.0          # one other-agent cell
        assert obs[2].sum() + obs[3].sum() == 1.0  # one live coin
    pomdp = env.observe(0, mode="pomdp")
    assert pomdp.shape == (3, 3, 3)
    np.testing.assert_array_equal(pomdp[0], env.observe(0)[0])
    np.testing.assert_array_equal(pomdp[1], env.observe(0)[2])


def test_coingame_invalid_action():
    env = CoinGameEnv(seed=4)
    with pytest.raises(ValueError):
        env.step([5, 0])


def test_coingame_determinism():
    rng1, rng2 = np.random.default_rng(9), np.random.default_rng(9)
    e1, e2 = CoinGameEnv(seed=11), CoinGameEnv(seed=11)
    for _ in range(50):
        a = rng1.integers(0, 4, size=2)
        o1, r1, d1, _ = e1.step(a)
        o2, r2, d2, _ = e2.step(rng2.integers(0, 4, size=2))
        assert d1 == d2
        np.testing.assert_array_equal(r1, r2)
        for x, y in zip(o1, o2):
            np.testing.assert_array_equal(x, y)


# -- CartPole ---------------------------------------------------------------

def test_cartpole_upright_step_rewards():
    env = CartPoleEnv(seed=0)
    env.states[:] = 0.0
    _, rewards, done, _ = env.step([0, 1])
    np.testing.assert_array_equal(rewards, [1.0, 1.0])
    assert not done


def test_cartpole_tilted_agent_dies():
    env = CartPoleEnv(seed=1)
    env.states[:] = 0.0
    env.states[0, 2] = 0.3  # beyond the 0.2095 angle limit
    _, rewards, _, info = env.step([0, 0])
    assert rewards[0] == 0.0
    assert rewards[1] == 1.0
    assert not info["alive"][0]
    # Dead agent: frozen observation and zero reward from now on.
    frozen = env.observe(0).copy()
    _, rewards, _, _ = env.step([1, 1])
    assert rewards[0] == 0.0
    np.testing.assert_array_equal(env.observe(0), frozen)


def test_cartpole_position_limit():
    env = CartPoleEnv(seed=2)
    env.states[:] = 0.0
    env.states[1, 0] = 2.5
    _, rewards, _, info = env.step([0, 0])
    assert rewards[1] == 0.0
    assert not info["alive"][1]


def test_cartpole_agents_independent():
    e1 = CartPoleEnv(seed=3)
    e2 = CartPoleEnv(seed=3)
    for _ in range(8):
        e1.step([1, 0])
        e2.step([1, 1])  # only agent 1's action differs
    np.testing.assert_array_equal(e1.states[0], e2.states[0])
    assert not np.array_equal(e1.states[1], e2.states[1])


def test_cartpole_dynamics_hand_step():
    """One Euler step from rest under a rightward push, by hand."""
    env = CartPoleEnv(seed=4)
    env.states[:] = 0.0
    env.step([1, 1])
    total_mass = 1.1
    temp = 10.0 / total_mass
    th_acc = (-temp) / (0.5 * (4.0 / 3.0 - 0.1 / total_mass))
    x_acc = temp - 0.05 * th_acc / total_mass
    expect = np.array([0.0, 0.02 * x_acc, 0.0, 0.02 * th_acc])
    np.testing.assert_allclose(env.states[0], expect, atol=1e-12)


def test_cartpole_done_when_all_dead():
    env = CartPoleEnv(seed=5)
    env.states[:, 2] = 0.5
    _, _, done, _ = env.step([0, 0])
    assert done


def test_cartpole_time_limit_and_determinism():
    e1, e2 = CartPoleEnv(seed=6), CartPoleEnv(seed=6)
    rng = np.random.default_rng(0)
    actions = rng.integers(0, 2, size=(600, 2))
    s1 = s2 = 0
    for a in actions:
        if not e1.done:
            _, r1, _, _ = e1.step(a)
            _, r2, _, _ = e2.step(a)
            np.testing.assert_array_equal(r1, r2)
            s1 += 1
    assert e1.t <= 500


# -- MiniGrid ---------------------------------------------------------------

def test_minigrid_initial_layout():
    env = MiniGridEnv(seed=0)
    assert env.positions == [(1, 1), (1, 1)]
    assert env.dirs == [0, 0]
    assert env.goal == (3, 3)
    obs = env.observe(0)
    assert obs.shape == (7, 7, 3)


def test_minigrid_first_step_bonus():
    env = MiniGridEnv(seed=1)
    _, rewards, _, _ = env.step([2, 2])  # both move forward
    # Fresh triple: bonus 1/sqrt(1) = 1; moving non-goal step: -1.
    np.testing.assert_allclose(rewards, [0.0, 0.0])
    assert env.positions[0] == (2, 1)


def test_minigrid_wall_bump_penalty():
    env = MiniGridEnv(seed=2)
    env.dirs[0] = 2  # face left, wall adjacent
    _, rewards, _, _ = env.step([2, 0])
    assert rewards[0] == pytest.approx(1.0 - 2.0)


def test_minigrid_turn_counts_as_standstill():
    env = MiniGridEnv(seed=3)
    _, rewards, _, _ = env.step([0, 1])
    assert rewards[0] == pytest.approx(-1.0)
    assert rewards[1] == pytest.approx(-1.0)
    assert env.dirs == [3, 1]


def test_minigrid_repeat_decay():
    # Rotate away and back to the start pose, then repeat the first triple.
    env2 = MiniGridEnv(seed=4)
    _, r1, _, _ = env2.step([0, 0])
    env2.step([1, 1])       # back to original pose
    _, r3, _, _ = env2.step([0, 0])  # same (pos, dir, action) as step 1
    assert r3[0] == pytest.approx(1.0 / np.sqrt(2) - 2.0)
    assert r1[0] == pytest.approx(1.0 - 2.0)


def test_minigrid_goal_reward_at_t8():
    """Nine-step optimal path: goal on the step with t=8 earns 83.8 base."""
    # Right 2, turn, down 2 reaches the goal in 5 moves; pad with four
    # turns so the goal step is the 9th (taken at t=8).
    env = MiniGridEnv(seed=5)
    actions = [0, 1, 0, 1, 2, 2, 1, 2]  # 4 turns + right x2 + turn + down
    for a in actions:
        _, rewards, _, _ = env.step([a, a])
    assert env.positions[0] == (3, 2)
    _, rewards, _, info = env.step([2, 2])  # t=8: forward onto the goal
    base = 100.0 * (1.0 - 0.9 * 9 / 50)
    assert base == pytest.approx(83.8)
    assert rewards[0] == pytest.approx(1.0 + base)
    assert info["reached_goal"] == [0, 1]


def test_minigrid_done_agent_freezes():
    env = MiniGridEnv(seed=6)
    for a in [2, 2, 1, 2, 2]:  # straight to goal in 5 steps
        _, rewards, done, _ = env.step([a, 0])
    assert env.agent_done[0]
    assert not done
    pos = env.positions[0]
    _, rewards, _, _ = env.step([2, 0])
    assert rewards[0] == 0.0
    assert env.positions[0] == pos


def test_minigrid_standstill_worse_than_moving():
    env = MiniGridEnv(seed=7)
    _, r_move, _, _ = env.step([2, 0])
    assert r_move[0] > r_move[1]


def test_minigrid_out_of_bounds_reads_as_wall():
    env = MiniGridEnv(seed=8)
    obs = env.observe(0)
    # Facing right from (1,1): the far edge of the view is outside the grid.
    assert obs[0, 6, 0] == 2  # wall object code


def test_minigrid_determinism():
    e1, e2 = MiniGridEnv(seed=9), MiniGridEnv(seed=9)
    rng = np.random.default_rng(1)
    for _ in range(50):
        if e1.done:
            break
        a = rng.integers(0, 3, size=2)
        o1, r1, d1, _ = e1.step(a)
        o2, r2, d2, _ = e2.step(a)
        np.testing.assert_array_equal(r1, r2)
        assert d1 == d2
        for x, y in zip(o1, o2):
            np.testing.assert_array_equal(x, y)
