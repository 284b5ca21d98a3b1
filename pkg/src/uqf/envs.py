"""Benchmark environments.

Grid worlds are plain-text layouts over ``# . S G``.  Compiled models have
one state per free cell (row-major order) plus an absorbing terminal state
appended last.  The agent observes only how many of its four neighbours are
walls; the terminal state emits observation 4.
"""
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import InvalidModelError
from .pomdp import Pomdp

ACTIONS = ("up", "down", "left", "right")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
NUM_OBS = 5
TERMINAL_OBS = 4


@dataclass(frozen=True)
class GridSpec:
    layout: tuple
    slip: float = 0.2
    step_reward: float = 0.0
    goal_reward: float = 1.0

    def __post_init__(self):
        layout = self.layout
        if isinstance(layout, str):
            layout = layout.strip("\n").splitlines()
        layout = tuple(line.rstrip("\r") for line in layout)
        object.__setattr__(self, "layout", layout)
        problems = check_grid(self)
        if problems:
            raise InvalidModelError("invalid grid: " + "; ".join(problems))

    @property
    def shape(self):
        return len(self.layout), len(self.layout[0])

    def find(self, char):
        return [(r, c) for r, row in enumerate(self.layout) for c, ch in enumerate(row) if ch == char]

    def free_cells(self):
        return [(r, c) for r, row in enumerate(self.layout) for c, ch in enumerate(row) if ch != "#"]

    def with_start(self, cell):
        rows = [list(row.replace("S", ".")) for row in self.layout]
        r, c = cell
        if rows[r][c] != ".":
            raise InvalidModelError(f"start cell {cell} is not free")
        rows[r][c] = "S"
        return GridSpec(tuple("".join(row) for row in rows), self.slip, self.step_reward, self.goal_reward)

    def text(self):
        return "\n".join(self.layout) + "\n"


def check_grid(spec):
    layout = spec.layout
    problems = []
    if not layout or not layout[0]:
        return ["layout is empty"]
    width = len(layout[0])
    if any(len(row) != width for row in layout):
        return ["rows have unequal lengths"]
    bad = sorted({ch for row in layout for ch in row} - set("#.SG"))
    if bad:
        problems.append(f"unexpected characters {bad}")
    for ch in "SG":
        n = sum(row.count(ch) for row in layout)
        if n != 1:
            problems.append(f"expected exactly one {ch!r}, found {n}")
    border = layout[0] + layout[-1] + "".join(row[0] + row[-1] for row in layout)
    if set(border) - {"#"}:
        problems.append("outer boundary must be wall")
    if not 0.0 <= spec.slip < 1.0:
        problems.append(f"slip must lie in [0, 1), got {spec.slip}")
    if problems:
        return problems
    start = spec.find("S")[0]
    seen = _distances(layout, start)
    unreachable = [cell for cell in spec.free_cells() if cell not in seen]
    if unreachable:
        problems.append(f"cells unreachable from S: {unreachable}")
    return problems


def _distances(layout, source):
    dist = {source: 0}
    queue = deque([source])
    while queue:
        r, c = queue.popleft()
        for dr, dc in MOVES:
            nxt = (r + dr, c + dc)
            if layout[nxt[0]][nxt[1]] != "#" and nxt not in dist:
                dist[nxt] = dist[(r, c)] + 1
                queue.append(nxt)
    return dist


def shortest_distance(spec):
    """Number of moves on a shortest path from S to G."""
    return _distances(spec.layout, spec.find("S")[0])[spec.find("G")[0]]


def wall_count(layout, cell):
    r, c = cell
    return sum(layout[r + dr][c + dc] == "#" for dr, dc in MOVES)


def parse_layout(text, **kwargs):
    return GridSpec(tuple(text.strip("\n").splitlines()), **kwargs)


def load_layout(path, **kwargs):
    return parse_layout(Path(path).read_text(), **kwargs)


def compile_gridworld(spec: GridSpec, gamma: float = 0.99) -> Pomdp:
    """Exact POMDP for a grid world.

    An action succeeds with probability ``1 - slip``; otherwise a uniformly
    random action (possibly the intended one) is executed.  Bumping into a
    wall leaves the agent in place.  The first action taken on G pays
    ``goal_reward`` and moves to the terminal state.
    """
    cells = spec.free_cells()
    index = {cell: i for i, cell in enumerate(cells)}
    k = len(cells) + 1
    term = k - 1
    nA = len(ACTIONS)
    goal = index[spec.find("G")[0]]
    T = np.zeros((k, nA, k))
    Z = np.zeros((k, nA, NUM_OBS))
    R = np.full((k, nA), float(spec.step_reward))
    exec_prob = (1.0 - spec.slip) * np.eye(nA) + spec.slip / nA
    for cell, s in index.items():
        if s == goal:
            T[s, :, term] = 1.0
            continue
        targets = []
        for dr, dc in MOVES:
            nxt = (cell[0] + dr, cell[1] + dc)
            targets.append(index.get(nxt, s))
        for a in range(nA):
            for b in range(nA):
                T[s, a, targets[b]] += exec_prob[a, b]
    T[term, :, term] = 1.0
    for cell, s in index.items():
        Z[s, :, wall_count(spec.layout, cell)] = 1.0
    Z[term, :, TERMINAL_OBS] = 1.0
    R[goal, :] = spec.goal_reward
    R[term, :] = 0.0
    mu = np.zeros(k)
    mu[index[spec.find("S")[0]]] = 1.0
    return Pomdp(T=T, Z=Z, R=R, mu=mu, gamma=gamma)


# Shared maze for the three benchmark variants; starts listed from nearest to
# farthest from G.
MAZE = (
    "#######",
    "#.....#",
    "#.#.#.#",
    "#...#G#",
    "#######",
)
STARTS = {"A": (1, 5), "B": (1, 3), "C": (3, 1)}


def builtin_gridworlds(slip=0.2):
    """Variants ``A``, ``B``, ``C`` of one maze with increasingly distant starts."""
    rows = [list(row) for row in MAZE]
    r, c = STARTS["A"]
    rows[r][c] = "S"
    base = GridSpec(tuple("".join(row) for row in rows), slip=slip)
    return {name: base.with_start(cell) for name, cell in STARTS.items()}


def random_pomdp(k, nA, nO, concentration=1.0, reward_scale=1.0, seed=0, gamma=0.9) -> Pomdp:
    """Dirichlet-distributed dynamics with uniform rewards in ``[0, reward_scale]``."""
    if min(k, nA, nO) < 1:
        raise ValueError("k, nA and nO must be >= 1")
    rng = np.random.default_rng(seed)
    T = rng.dirichlet(np.full(k, concentration), size=(k, nA))
    Z = rng.dirichlet(np.full(nO, concentration), size=(k, nA))
    R = rng.uniform(0.0, reward_scale, size=(k, nA))
    mu = rng.dirichlet(np.full(k, concentration))
    T /= T.sum(axis=-1, keepdims=True)
    Z /= Z.sum(axis=-1, keepdims=True)
    mu /= mu.sum()
    return Pomdp(T=T, Z=Z, R=R, mu=mu, gamma=gamma)
