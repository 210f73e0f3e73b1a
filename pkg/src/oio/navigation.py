"""Odour-tracking policies and tabular reinforcement learning.

Three ways to pick the next one-second move: follow the gradient, chase
the belief-map target, or act greedily on a Q-table trained in a lattice
version of the task with Expected SARSA (or Q-learning for comparison).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol

import numpy as np

from .bout import BoutDetectorState, BoutSignal, detect, init_baseline
from .errors import ConfigurationError
from .kinematics import (
    OPPOSITE,
    ArmState,
    Direction,
    EffectorPose,
    Envelope,
    direction_vector,
)
from .plume import PlumeParams, PlumeState, concentration_at, purge_and_develop, step as plume_step

ACTIONS: tuple[Direction, ...] = (
    Direction.LEFT,
    Direction.RIGHT,
    Direction.UP,
    Direction.DOWN,
    Direction.FORWARD,
    Direction.BACKWARD,
    Direction.STAY,
)
N_ACTIONS = len(ACTIONS)
MOVES = ACTIONS[:-1]
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}

QTABLE_SCHEMA = 1


@dataclass(frozen=True)
class Action:
    direction: Direction
    magnitude: float = 0.0

    def __post_init__(self):
        if self.direction is Direction.STAY and self.magnitude != 0:
            raise ConfigurationError("stay has zero magnitude")


@dataclass(frozen=True)
class RlHyperparams:
    gamma: float = 0.8
    alpha: float = 0.1
    epsilon: float = 0.1
    episodes: int = 1000
    steps_per_episode: int = 100
    policy_weighted: bool = False

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigurationError("gamma must be in (0, 1]")
        if not 0 < self.alpha < 1 or not 0 < self.epsilon < 1:
            raise ConfigurationError("alpha and epsilon must be in (0, 1)")
        if self.episodes < 0 or self.steps_per_episode < 1:
            raise ConfigurationError("episodes must be >= 0 and steps_per_episode >= 1")


def reward(in_plume: bool) -> int:
    return -1 if in_plume else -5


# --------------------------------------------------------------------------
# State discretisation


@dataclass(frozen=True)
class GridSpec:
    """Regular lattice over the workspace bounding box; cell centres fall on z = 0 and the base axis."""

    origin: tuple[float, float, float] = (-0.925, -0.925, -0.375)
    cell: float = 0.05
    shape: tuple[int, int, int] = (37, 37, 19)

    def __post_init__(self):
        if self.cell <= 0 or min(self.shape) < 1:
            raise ConfigurationError("grid needs a positive cell size and at least one cell per axis")

    def center(self, idx) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(idx, dtype=float) + 0.5) * self.cell


def discretize_state(pose, grid: GridSpec = GridSpec()) -> tuple[int, int, int]:
    """Lattice cell holding the effector; cells are half-open, positions outside are clamped."""
    p = pose.position if isinstance(pose, EffectorPose) else np.asarray(pose, dtype=float)[:3]
    u = (p - np.asarray(grid.origin)) / grid.cell
    # Ratios a rounding error short of an edge belong to the higher cell.
    idx = np.floor(np.where(np.abs(u - np.rint(u)) < 1e-9, np.rint(u), u)).astype(int)
    idx = np.clip(idx, 0, np.asarray(grid.shape) - 1)
    return tuple(int(i) for i in idx)


# --------------------------------------------------------------------------
# Q-table


@dataclass
class QTable:
    values: dict = field(default_factory=dict)

    def row(self, s) -> np.ndarray:
        """Action values for ``s``; unseen states read as zeros and are not stored."""
        r = self.values.get(s)
        return r if r is not None else np.zeros(N_ACTIONS)

    def get(self, s, a) -> float:
        return float(self.row(s)[_aidx(a)])

    def set(self, s, a, value: float) -> None:
        r = self.values.get(s)
        if r is None:
            r = self.values[s] = np.zeros(N_ACTIONS)
        r[_aidx(a)] = value

    def visited(self, s) -> bool:
        return s in self.values

    def copy(self) -> "QTable":
        return QTable({k: v.copy() for k, v in self.values.items()})

    def to_json(self, grid: GridSpec | None = None) -> str:
        triples = []
        for s in sorted(self.values):
            for i, v in enumerate(self.values[s]):
                if v != 0.0:
                    triples.append([list(s), ACTIONS[i].value, float(v)])
        doc = {
            "schema": QTABLE_SCHEMA,
            "grid": asdict(grid) if grid is not None else None,
            "actions": [a.value for a in ACTIONS],
            "entries": triples,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> tuple["QTable", GridSpec | None]:
        doc = json.loads(text)
        if doc.get("schema") != QTABLE_SCHEMA:
            raise ConfigurationError(f"unsupported Q-table schema {doc.get('schema')!r}")
        order = [Direction(a) for a in doc["actions"]]
        q = cls()
        for s, a, v in doc["entries"]:
            q.set(tuple(s), order[[d.value for d in order].index(a)], v)
        g = doc.get("grid")
        grid = GridSpec(tuple(g["origin"]), g["cell"], tuple(g["shape"])) if g else None
        return q, grid

    def save(self, path, grid: GridSpec | None = None) -> None:
        Path(path).write_text(self.to_json(grid))

    @classmethod
    def load(cls, path) -> tuple["QTable", GridSpec | None]:
        return cls.from_json(Path(path).read_text())


def _aidx(a) -> int:
    if isinstance(a, (int, np.integer)):
        return int(a)
    if isinstance(a, Action):
        a = a.direction
    return ACTION_INDEX[Direction(a)]


def epsilon_greedy(q: QTable, s, epsilon: float, rng: np.random.Generator) -> Direction:
    """Uniform random action with probability ``epsilon``, else the first best action."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError("epsilon must be within [0, 1]")
    if rng.random() < epsilon:
        return ACTIONS[int(rng.integers(N_ACTIONS))]
    return ACTIONS[int(np.argmax(q.row(s)))]


def expected_sarsa_update(q: QTable, s, a, r: float, s_next, hp: RlHyperparams, terminal: bool = False) -> QTable:
    """Q(s,a) += alpha * (r + (gamma / n) * sum_a' Q(s', a') - Q(s,a)).

    The next-state term is the plain average over all actions. With
    ``hp.policy_weighted`` it is the expectation under the epsilon-greedy
    behaviour policy instead.
    """
    old = q.get(s, a)
    if terminal:
        target = r
    else:
        nxt = q.row(s_next)
        if hp.policy_weighted:
            probs = np.full(N_ACTIONS, hp.epsilon / N_ACTIONS)
            probs[int(np.argmax(nxt))] += 1.0 - hp.epsilon
            expectation = float(probs @ nxt)
        else:
            expectation = float(np.sum(nxt)) / N_ACTIONS
        target = r + hp.gamma * expectation
    q.set(s, a, old + hp.alpha * (target - old))
    return q


def q_learning_update(q: QTable, s, a, r: float, s_next, hp: RlHyperparams, terminal: bool = False) -> QTable:
    old = q.get(s, a)
    target = r if terminal else r + hp.gamma * float(np.max(q.row(s_next)))
    q.set(s, a, old + hp.alpha * (target - old))
    return q


UPDATES: dict[str, Callable] = {
    "expected_sarsa": expected_sarsa_update,
    "q_learning": q_learning_update,
}
ALGORITHM_ALIASES = {"esarsa": "expected_sarsa", "qlearn": "q_learning"}


class Environment(Protocol):
    def reset(self, rng: np.random.Generator): ...

    def step(self, action: Direction, rng: np.random.Generator) -> tuple[object, float, bool]: ...


def train(
    env: Environment,
    hp: RlHyperparams = RlHyperparams(),
    algorithm: str = "expected_sarsa",
    rng: np.random.Generator | None = None,
) -> tuple[QTable, np.ndarray]:
    """Epsilon-greedy episodes with the chosen update rule.

    Returns the table and the undiscounted return of every episode.
    """
    algorithm = ALGORITHM_ALIASES.get(algorithm, algorithm)
    if algorithm not in UPDATES:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")
    update_rule = UPDATES[algorithm]
    rng = rng if rng is not None else np.random.default_rng()
    q = QTable()
    returns = np.zeros(hp.episodes)
    for ep in range(hp.episodes):
        s = env.reset(rng)
        total = 0.0
        for _ in range(hp.steps_per_episode):
            a = epsilon_greedy(q, s, hp.epsilon, rng)
            s_next, r, done = env.step(a, rng)
            update_rule(q, s, a, r, s_next, hp, terminal=done)
            total += r
            s = s_next
            if done:
                break
        returns[ep] = total
    return q, returns


# --------------------------------------------------------------------------
# Lattice training environment


@dataclass
class GridOdourEnv:
    """Lattice version of the tracking task used to train the Q-table.

    The effector hops between cell centres: each move travels up to
    ``step_length`` metres in the base-aligned frame, limited to what the
    arm covers in one action (``max_turn_deg`` of base rotation, ``radial_step``
    and ``vertical_step``), is clamped to the envelope and snapped to a cell. Each episode draws one of ``n_snapshots``
    developed plumes and reads it through log-normal filament noise. Reward
    uses the bout-style rule: in the plume when the smoothed reading exceeds
    ``in_plume_factor`` times the largest baseline reading.
    """

    plume: PlumeParams
    start: np.ndarray
    grid: GridSpec = field(default_factory=GridSpec)
    envelope: Envelope = field(default_factory=Envelope)
    step_length: float = 0.1
    max_turn_deg: float = 9.5
    radial_step: float = 0.035
    vertical_step: float = 0.075
    success_radius: float = 0.10
    develop_time: float = 30.0
    n_snapshots: int = 8
    in_plume_factor: float = 1.5
    seed: int = 0

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float)
        snap_rng = np.random.default_rng(self.seed)
        self._snapshots: list[PlumeState] = []
        for _ in range(self.n_snapshots):
            t_extra = float(snap_rng.uniform(0.0, 30.0))
            self._snapshots.append(purge_and_develop(self.plume, self.develop_time + t_extra, snap_rng))
        self._source = np.asarray(self.plume.source_position, dtype=float)
        self._conc: list[dict] = [dict() for _ in self._snapshots]
        self._moves: dict = {}
        self._start_cell = discretize_state(self.start, self.grid)

    def _c(self, cell) -> float:
        cache = self._conc[self._snap]
        c = cache.get(cell)
        if c is None:
            c = cache[cell] = concentration_at(self._snapshots[self._snap], self.grid.center(cell))
        return c

    def _read(self, cell, rng) -> float:
        s = self.plume.filament_sigma
        return self._c(cell) * math.exp(s * rng.standard_normal() - 0.5 * s * s)

    def move(self, cell, action: Direction):
        key = (cell, action)
        nxt = self._moves.get(key)
        if nxt is None:
            p = self.grid.center(cell)
            if action is Direction.STAY:
                nxt = cell
            else:
                az = math.degrees(math.atan2(p[1], p[0]))
                if action in (Direction.LEFT, Direction.RIGHT):
                    reach = min(self.step_length, math.hypot(p[0], p[1]) * math.radians(self.max_turn_deg))
                elif action in (Direction.FORWARD, Direction.BACKWARD):
                    reach = min(self.step_length, self.radial_step)
                else:
                    reach = min(self.step_length, self.vertical_step)
                goal = p + reach * direction_vector(action, az)
                goal, _ = self.envelope.clamp(goal, az)
                nxt = discretize_state(goal, self.grid)
            self._moves[key] = nxt
        return nxt

    def reset(self, rng: np.random.Generator):
        self._snap = int(rng.integers(self.n_snapshots))
        self._cell = self._start_cell
        self._bout = init_baseline([self._read(self._cell, rng) for _ in range(5)])
        self._threshold = self.in_plume_factor * max(self._bout.baseline)
        return self._cell

    def step(self, action: Direction, rng: np.random.Generator):
        self._cell = self.move(self._cell, action)
        sig = detect(self._bout, self._read(self._cell, rng))
        done = bool(np.linalg.norm(self.grid.center(self._cell) - self._source) <= self.success_radius)
        return self._cell, reward(sig.smoothed > self._threshold), done


# --------------------------------------------------------------------------
# Policies


def best_move(direction_to_goal: np.ndarray, base_angle_deg: float) -> Direction:
    """The move whose unit vector points most nearly along ``direction_to_goal``."""
    scores = [float(direction_vector(d, base_angle_deg) @ direction_to_goal) for d in MOVES]
    return MOVES[int(np.argmax(scores))]


@dataclass
class GradientFollower:
    """Keep going while the signal improves; otherwise sweep untried directions.

    Each sweep cycle visits the six moves in a fresh random order, with the
    reverse of the move that just failed pushed to the end.
    """

    untried: list = field(default_factory=list)

    def act(self, bout: BoutSignal, rssi_trend, last_action: Direction | None, rng: np.random.Generator) -> Direction:
        rising = len(rssi_trend) >= 2 and rssi_trend[-1] > rssi_trend[-2]
        if last_action is not None and last_action is not Direction.STAY and (bout.toward_source or rising):
            self.untried = []
            return last_action
        if not self.untried:
            self.untried = [MOVES[i] for i in rng.permutation(len(MOVES))]
        if last_action is not None and last_action in self.untried:
            self.untried.remove(last_action)
        if not self.untried:
            self.untried = [MOVES[i] for i in rng.permutation(len(MOVES))]
        reverse = OPPOSITE.get(last_action) if last_action is not None else None
        if reverse in self.untried and len(self.untried) > 1:
            self.untried.remove(reverse)
            self.untried.append(reverse)
        return self.untried.pop(0)


def gradient_policy(
    bout: BoutSignal,
    rssi_trend,
    last_action: Direction | None,
    rng: np.random.Generator,
    follower: GradientFollower | None = None,
) -> Direction:
    """Functional form of :class:`GradientFollower`; pass ``follower`` to keep sweep state."""
    return (follower or GradientFollower()).act(bout, rssi_trend, last_action, rng)


@dataclass
class GreedyQPolicy:
    """Deployed RL policy: greedy on the table while it makes progress.

    States training never reached are handled by gradient following for that
    step. Once the table stalls (it picks ``stay``, leads back into a cell
    already visited this trial, or its move is blocked) control is handed to
    gradient following for the rest of the trial.
    """

    q: QTable
    grid: GridSpec = field(default_factory=GridSpec)
    fallback: GradientFollower = field(default_factory=GradientFollower)
    handed_over: bool = False
    visited: set = field(default_factory=set)

    def hand_over(self) -> None:
        self.handed_over = True

    def act(self, pose, bout: BoutSignal, rssi_trend, last_action, rng) -> tuple[Direction, bool]:
        if not self.handed_over:
            s = discretize_state(pose, self.grid)
            if not self.q.visited(s):
                return self.fallback.act(bout, rssi_trend, last_action, rng), True
            action = ACTIONS[int(np.argmax(self.q.row(s)))]
            if action is not Direction.STAY and s not in self.visited:
                self.visited.add(s)
                return action, False
            self.handed_over = True
        return self.fallback.act(bout, rssi_trend, last_action, rng), True
