"""Multi-agent environments and observation transforms.

All three environments share a small interface: ``reset() -> [obs]``,
``step(actions) -> (next_obs, rewards, done, info)``, plus ``num_agents``,
``num_actions``, and ``obs_dim`` attributes.  Every source of randomness
flows through one seeded generator injected at construction, so identical
seeds and action sequences replay bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ---------------------------------------------------------------------------
# Observation transforms.
# ---------------------------------------------------------------------------

CARTPOLE_SCALE = np.array([2.4, 2.5, 0.21, 2.5])


def coingame_mdp_matrix(obs: np.ndarray) -> np.ndarray:
    """Collapse a (4, 3, 3) binary tensor to a 4x3 matrix.

    The last axis is summed with weights 2^-k (k zero-based), which keeps
    the encoding injective while bounding entries by 2.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., planes, 3, 3), got {obs.shape}")
    weights = 2.0 ** -np.arange(3)
    return obs @ weights


def cartpole_mdp_matrix(obs: np.ndarray) -> np.ndarray:
    """Scale the 4 cart-pole features and tile them across 3 columns."""
    obs = np.asarray(obs, dtype=float)
    if obs.shape[-1] != 4:
        raise ValueError(f"expected 4 features, got {obs.shape}")
    scaled = obs / CARTPOLE_SCALE
    return np.repeat(scaled[..., None], 3, axis=-1)


def flatten(obs: np.ndarray) -> np.ndarray:
    """Flatten trailing axes to one feature vector (leading batch kept)."""
    obs = np.asarray(obs, dtype=float)
    return obs.reshape(-1)


# ---------------------------------------------------------------------------
# CoinGame.
# ---------------------------------------------------------------------------

COINGAME_ACTIONS = ("north", "south", "east", "west")
_MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, 1), 3: (0, -1)}


class CoinGameEnv:
    """Two colored agents compete for a single colored coin on a 3x3 grid.

    Rewards: the collector earns +1 for a same-color coin and -2 for the
    other color; the non-collecting agent earns 0.  On collection a new
    coin spawns on a uniformly random agent-free cell with the opposite
    color.  Both agents landing on the coin at once each score under their
    own color, with a single respawn.
    """

    num_agents = 2
    num_actions = 4
    size = 3
    T = 50

    def __init__(self, seed: int, mode: str = "mdp"):
        if mode not in ("mdp", "pomdp"):
            raise ValueError(f"unknown mode: {mode!r}")
        self.mode = mode
        self.obs_dim = 36 if mode == "mdp" else 27
        self._rng = np.random.default_rng(seed)
        self.reset()

    def reset(self) -> list[np.ndarray]:
        cells = self._rng.choice(self.size * self.size, size=2, replace=False)
        self.positions = [divmod(int(c), self.size) for c in cells]
        # Agent 0 is red, agent 1 is blue.
        self.coin_color = int(self._rng.integers(2))
        self._spawn_coin(self.coin_color)
        self.t = 0
        self.done = False
        return [self.observe(n) for n in range(2)]

    def _spawn_coin(self, color: int):
        free = [c for c in range(self.size * self.size)
                if divmod(c, self.size) not in self.positions]
        self.coin_pos = divmod(int(self._rng.choice(free)), self.size)
        self.coin_color = color

    def step(self, actions) -> tuple[list[np.ndarray], np.ndarray, bool, dict]:
        if self.done:
            raise RuntimeError("episode already finished")
        new_positions = []
        for n, a in enumerate(actions):
            a = int(a)
            if a not in _MOVES:
                raise ValueError(f"invalid action: {a}")
            r, c = self.positions[n]
            dr, dc = _MOVES[a]
            nr, nc = r + dr, c + dc
            if 0 <= nr < self.size and 0 <= nc < self.size:
                new_positions.append((nr, nc))
            else:
                new_positions.append((r, c))
        self.positions = new_positions

        rewards = np.zeros(2)
        collections = []  # (agent, own_color) pairs
        collectors = [n for n in range(2) if self.positions[n] == self.coin_pos]
        if collectors:
            for n in collectors:
                own = (n == self.coin_color)
                rewards[n] = 1.0 if own else -2.0
                collections.append((n, own))
            self._spawn_coin(1 - self.coin_color)

        self.t += 1
        self.done = self.t >= self.T
        obs = [self.observe(n) for n in range(2)]
        return obs, rewards, self.done, {"collections": collections,
                                         "terminal": False}

    def observe(self, agent: int, mode: str | None = None) -> np.ndarray:
        """Binary planes: self, other agents, own-color coin, other coin.

        POMDP mode drops the second plane (other agents).
        """
        mode = mode or self.mode
        planes = np.zeros((4, self.size, self.size))
        planes[0][self.positions[agent]] = 1.0
        planes[1][self.positions[1 - agent]] = 1.0
        own_coin = (self.coin_color == agent)
        planes[2 if own_coin else 3][self.coin_pos] = 1.0
        if mode == "pomdp":
            return planes[[0, 2, 3]]
        return planes


# ---------------------------------------------------------------------------
# CartPole (multi-agent: independent instances, shared clock).
# ---------------------------------------------------------------------------

class CartPoleEnv:
    """N independent cart-pole instances stepped in lockstep.

    Canonical constants: gravity 9.8, cart mass 1.0, pole mass 0.1, pole
    half-length 0.5, force 10.0, Euler step 0.02 s.  An agent whose pole
    angle leaves [-0.2095, 0.2095] or cart leaves [-2.4, 2.4] dies: it
    stops earning reward and its observation freezes.
    """

    num_actions = 2
    obs_dim = 4
    T = 500

    GRAVITY = 9.8
    MASS_CART = 1.0
    MASS_POLE = 0.1
    HALF_LENGTH = 0.5
    FORCE = 10.0
    DT = 0.02
    ANGLE_LIMIT = 0.2095
    POS_LIMIT = 2.4

    def __init__(self, seed: int, num_agents: int = 2, mode: str = "mdp"):
        if mode not in ("mdp", "pomdp"):
            raise ValueError(f"unknown mode: {mode!r}")
        self.mode = mode
        self.num_agents = num_agents
        self._rng = np.random.default_rng(seed)
        self.reset()

    def reset(self) -> list[np.ndarray]:
        self.states = self._rng.uniform(-0.05, 0.05, (self.num_agents, 4))
        self.alive = np.ones(self.num_agents, dtype=bool)
        self.t = 0
        self.done = False
        return [self.observe(n) for n in range(self.num_agents)]

    def _balanced(self, state: np.ndarray) -> bool:
        return (abs(state[2]) <= self.ANGLE_LIMIT
                and abs(state[0]) <= self.POS_LIMIT)

    def step(self, actions) -> tuple[list[np.ndarray], np.ndarray, bool, dict]:
        if self.done:
            raise RuntimeError("episode already finished")
        rewards = np.zeros(self.num_agents)
        total_mass = self.MASS_CART + self.MASS_POLE
        pml = self.MASS_POLE * self.HALF_LENGTH
        for n, a in enumerate(actions):
            if not self.alive[n]:
                continue
            a = int(a)
            if a not in (0, 1):
                raise ValueError(f"invalid action: {a}")
            x, x_dot, th, th_dot = self.states[n]
            force = self.FORCE if a == 1 else -self.FORCE
            cos, sin = np.cos(th), np.sin(th)
            temp = (force + pml * th_dot ** 2 * sin) / total_mass
            th_acc = (self.GRAVITY * sin - cos * temp) / (
                self.HALF_LENGTH * (4.0 / 3.0
                                    - self.MASS_POLE * cos ** 2 / total_mass))
            x_acc = temp - pml * th_acc * cos / total_mass
            x = x + self.DT * x_dot
            x_dot = x_dot + self.DT * x_acc
            th = th + self.DT * th_dot
            th_dot = th_dot + self.DT * th_acc
            self.states[n] = (x, x_dot, th, th_dot)
            if self._balanced(self.states[n]):
                rewards[n] = 1.0
            else:
                self.alive[n] = False
        self.t += 1
        self.done = bool(self.t >= self.T or not self.alive.any())
        obs = [self.observe(n) for n in range(self.num_agents)]
        return obs, rewards, self.done, {"alive": self.alive.copy(),
                                         "terminal": bool(not self.alive.any())}

    def observe(self, agent: int) -> np.ndarray:
        return self.states[agent].copy()


# ---------------------------------------------------------------------------
# MiniGrid (independent per-agent grid instances).
# ---------------------------------------------------------------------------

# Cell encodings for the egocentric view (object, color, state).
_CELL_EMPTY = (1, 0, 0)
_CELL_WALL = (2, 5, 0)
_CELL_GOAL = (8, 1, 0)

# Facing directions: 0 right, 1 down, 2 left, 3 up; (dx, dy) with x = column.
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))


class MiniGridEnv:
    """A 5x5 walled gridworld (3x3 walkable) with a count-based bonus.

    Each agent explores its own instance: spawn at the top-left interior
    cell facing right, goal at the bottom-right interior cell; the optimal
    path takes 9 steps.  Reward per step is 1/sqrt(c) (c counts repeats of
    the (position, direction, action) triple) plus -2 for standing still,
    +100*(1 - 0.9*(t+1)/T) for reaching the goal, or -1 otherwise.
    """

    num_actions = 3  # turn left, turn right, forward
    size = 5
    view = 7
    obs_dim = 7 * 7 * 3
    T = 50

    def __init__(self, seed: int, num_agents: int = 2):
        self.num_agents = num_agents
        self._rng = np.random.default_rng(seed)
        self.goal = (3, 3)
        self.reset()

    def reset(self) -> list[np.ndarray]:
        self.positions = [(1, 1) for _ in range(self.num_agents)]
        self.dirs = [0] * self.num_agents
        self.agent_done = np.zeros(self.num_agents, dtype=bool)
        self.counts = [dict() for _ in range(self.num_agents)]
        self.t = 0
        self.done = False
        return [self.observe(n) for n in range(self.num_agents)]

    def _is_wall(self, x: int, y: int) -> bool:
        return not (1 <= x <= 3 and 1 <= y <= 3)

    def step(self, actions) -> tuple[list[np.ndarray], np.ndarray, bool, dict]:
        if self.done:
            raise RuntimeError("episode already finished")
        rewards = np.zeros(self.num_agents)
        reached = []
        for n, a in enumerate(actions):
            if self.agent_done[n]:
                continue
            a = int(a)
            if a not in (0, 1, 2):
                raise ValueError(f"invalid action: {a}")
            pos = self.positions[n]
            key = (pos, self.dirs[n], a)
            c = self.counts[n].get(key, 0) + 1
            self.counts[n][key] = c
            bonus = 1.0 / np.sqrt(c)

            if a == 0:
                self.dirs[n] = (self.dirs[n] - 1) % 4
            elif a == 1:
                self.dirs[n] = (self.dirs[n] + 1) % 4
            else:
                dx, dy = _DIRS[self.dirs[n]]
                nx, ny = pos[0] + dx, pos[1] + dy
                if not self._is_wall(nx, ny):
                    self.positions[n] = (nx, ny)

            if self.positions[n] == pos:
                rewards[n] = bonus - 2.0
            elif self.positions[n] == self.goal:
                rewards[n] = bonus + 100.0 * (1.0 - 0.9 * (self.t + 1) / self.T)
                self.agent_done[n] = True
                reached.append(n)
            else:
                rewards[n] = bonus - 1.0
        self.t += 1
        self.done = bool(self.t >= self.T or self.agent_done.all())
        obs = [self.observe(n) for n in range(self.num_agents)]
        return obs, rewards, self.done, {"reached_goal": reached,
                                         "terminal": bool(self.agent_done.all())}

    def observe(self, agent: int) -> np.ndarray:
        """Egocentric 7x7x3 window; cells outside the grid read as walls."""
        pos = self.positions[agent]
        fwd = _DIRS[self.dirs[agent]]
        right = _DIRS[(self.dirs[agent] + 1) % 4]
        view = np.zeros((self.view, self.view, 3))
        half = self.view // 2
        for ahead in range(self.view):
            for lateral in range(-half, half + 1):
                x = pos[0] + fwd[0] * ahead + right[0] * lateral
                y = pos[1] + fwd[1] * ahead + right[1] * lateral
                if self._is_wall(x, y):
                    cell = _CELL_WALL
                elif (x, y) == self.goal:
                    cell = _CELL_GOAL
                else:
                    cell = _CELL_EMPTY
                view[lateral + half, ahead] = cell
        return view
