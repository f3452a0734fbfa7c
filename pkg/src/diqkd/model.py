"""Honest device statistics for the two-party CHSH-based protocol.

A device model gives the joint outcome distribution P(a, b | x, y) for
Alice's setting x in {0, 1} and Bob's setting y in {0, 1, 2}. Settings
y in {0, 1} are Bell-test rounds, y = 2 is a key-generation round in
which Alice's setting is forced to x = 0. The five valid setting pairs
are therefore (0,0), (0,1), (1,0), (1,1), (0,2).

Two model variants are supported:

- parametric: test rounds follow
      P(a, b | x, y) = (1 + (-1)^(a xor b xor x*y) * S/4) / 4
  and key rounds follow
      P(a, b | 0, 2) = (delta_ab - (-1)^(a xor b) * Q) / 2,
  where S is the CHSH score and Q the quantum bit error rate;
- empirical: an explicit 2x2 probability table per setting pair,
  e.g. estimated from a device characterisation run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

TEST_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))
KEY_PAIR = (0, 2)
SETTING_PAIRS = TEST_PAIRS + (KEY_PAIR,)

# Sum tolerance for externally supplied tables (published tables carry
# rounding at the 1e-4 level) and for internal normalization checks.
TABLE_SUM_TOL = 1e-3
NORM_TOL = 1e-12


class InvalidSettingError(ValueError):
    """Raised for a setting pair outside the five valid ones."""


@dataclass(frozen=True)
class DeviceModel:
    """Joint outcome tables for the five setting pairs.

    `tables[(x, y)][a][b]` is P(a, b | x, y). Tables are normalized on
    construction; each sums to 1 within 1e-12 afterwards.
    """

    tables: Dict[Tuple[int, int], np.ndarray]
    chsh_score: Optional[float] = None
    qber: Optional[float] = None

    def __post_init__(self):
        for pair in SETTING_PAIRS:
            if pair not in self.tables:
                raise ValueError(f"missing table for setting pair {pair}")
            t = np.asarray(self.tables[pair], dtype=float)
            if t.shape != (2, 2):
                raise ValueError(f"table for {pair} must be 2x2")
            if (t < 0).any():
                raise ValueError(f"negative probability in table for {pair}")
            s = float(t.sum())
            if abs(s - 1.0) > TABLE_SUM_TOL:
                raise ValueError(
                    f"table for {pair} sums to {s}, outside tolerance {TABLE_SUM_TOL}"
                )
            self.tables[pair] = t / s
            assert abs(self.tables[pair].sum() - 1.0) <= NORM_TOL

    @classmethod
    def parametric(cls, chsh_score: float, qber: float) -> "DeviceModel":
        """Build the two-parameter model from CHSH score S and QBER Q."""
        if not 2.0 < chsh_score <= 2 * math.sqrt(2) + 1e-12:
            raise ValueError(f"CHSH score {chsh_score} outside (2, 2*sqrt(2)]")
        if not 0.0 <= qber < 0.5:
            raise ValueError(f"QBER {qber} outside [0, 1/2)")
        tables = {}
        for (x, y) in TEST_PAIRS:
            t = np.empty((2, 2))
            for a in (0, 1):
                for b in (0, 1):
                    sign = -1.0 if (a ^ b ^ (x * y)) else 1.0
                    t[a, b] = (1.0 + sign * chsh_score / 4.0) / 4.0
            tables[(x, y)] = t
        tk = np.empty((2, 2))
        for a in (0, 1):
            for b in (0, 1):
                delta = 1.0 if a == b else 0.0
                sign = -1.0 if (a ^ b) else 1.0
                tk[a, b] = (delta - sign * qber) / 2.0
        tables[KEY_PAIR] = tk
        return cls(tables=tables, chsh_score=chsh_score, qber=qber)

    @classmethod
    def empirical(
        cls,
        tables: Dict[Tuple[int, int], Sequence[Sequence[float]]],
        invert_alice: bool = False,
    ) -> "DeviceModel":
        """Build from measured tables.

        With `invert_alice` the rows (Alice's outcome) of every table are
        swapped, for data recorded under the opposite outcome labelling
        convention.
        """
        prepared = {}
        for pair, t in tables.items():
            t = np.asarray(t, dtype=float)
            prepared[pair] = t[::-1, :].copy() if invert_alice else t
        return cls(tables=prepared)

    def joint_prob(self, a: int, b: int, x: int, y: int) -> float:
        """Return P(a, b | x, y) for one of the five valid setting pairs."""
        if (x, y) not in self.tables:
            raise InvalidSettingError(f"invalid setting pair ({x}, {y})")
        if a not in (0, 1) or b not in (0, 1):
            raise ValueError("outcomes must be bits")
        return float(self.tables[(x, y)][a, b])

    def outcome_cdfs(self) -> Dict[Tuple[int, int], np.ndarray]:
        """Cumulative outcome distributions, cell order (0,0),(0,1),(1,0),(1,1).

        Used for inverse-CDF sampling: a uniform u in [0,1) picks the first
        cell whose cumulative weight exceeds u.
        """
        return {pair: np.cumsum(t.reshape(-1)) for pair, t in self.tables.items()}


def load_empirical_table(path, invert_alice: bool = False) -> DeviceModel:
    """Load a device table from text: one `x y p00 p01 p10 p11` line per pair.

    Blank lines and `#` comments are ignored. All five setting pairs must
    be present exactly once.
    """
    tables = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            x, y = int(parts[0]), int(parts[1])
            if (x, y) not in SETTING_PAIRS:
                raise InvalidSettingError(f"{path}:{lineno}: invalid setting pair ({x}, {y})")
            if (x, y) in tables:
                raise ValueError(f"{path}:{lineno}: duplicate setting pair ({x}, {y})")
            p = [float(v) for v in parts[2:]]
            tables[(x, y)] = [[p[0], p[1]], [p[2], p[3]]]
    missing = [pair for pair in SETTING_PAIRS if pair not in tables]
    if missing:
        raise ValueError(f"{path}: missing setting pairs {missing}")
    return DeviceModel.empirical(tables, invert_alice=invert_alice)


@dataclass(frozen=True)
class InputPolicy:
    """Input distributions: Alice uniform on {0,1}; Bob tests with
    probability gamma, split evenly between y = 0 and y = 1, else y = 2.

    gamma is kept as an exact rational so that values like 13/256 survive
    round-trips; it is converted to float only when sampling.
    """

    gamma: Fraction

    def __post_init__(self):
        g = Fraction(self.gamma)
        # gamma = 1 (every round a test) is allowed for diagnostics, though
        # a protocol run needs key rounds and hence gamma < 1
        if not 0 < g <= 1:
            raise ValueError(f"gamma {g} outside (0, 1]")
        object.__setattr__(self, "gamma", g)

    @property
    def gamma_float(self) -> float:
        return float(self.gamma)

    def bob_distribution(self) -> Tuple[Fraction, Fraction, Fraction]:
        half = self.gamma / 2
        dist = (half, half, 1 - self.gamma)
        assert sum(dist) == 1
        return dist


@dataclass(frozen=True)
class RoundData:
    """One protocol round: inputs, test flag, outcomes and the CHSH score.

    The score u is 1/0 on test rounds (game won/lost) and None on key
    rounds. t = 1 exactly when y != 2, and u is None exactly when t = 0.
    """

    index: int
    x: int
    y: int
    t: int
    a: int
    b: int
    u: Optional[int] = field(default=None)

    def __post_init__(self):
        if self.t != (1 if self.y != 2 else 0):
            raise ValueError("test flag t must equal indicator(y != 2)")
        if (self.u is None) != (self.t == 0):
            raise ValueError("score u must be None exactly on key rounds")


def sample_outcomes(model: DeviceModel, x: int, y: int, u: float) -> Tuple[int, int]:
    """Map a uniform variate to an outcome pair via the inverse CDF of
    P(a, b | x, y), cell order (0,0),(0,1),(1,0),(1,1)."""
    if (x, y) not in model.tables:
        raise InvalidSettingError(f"invalid setting pair ({x}, {y})")
    cdf = np.cumsum(model.tables[(x, y)].reshape(-1))
    cell = int(np.searchsorted(cdf, u, side="right"))
    cell = min(cell, 3)
    return cell >> 1, cell & 1


def sample_round(
    model: DeviceModel,
    policy: InputPolicy,
    rng: np.random.Generator,
    index: int = 0,
) -> RoundData:
    """Draw one honest round.

    Bob samples y (and hence t); Alice samples x uniformly but overrides
    it to 0 when t = 0. Outcomes follow the model's joint table. The
    score u uses Alice's true outcome.
    """
    gamma = policy.gamma_float
    r = rng.random()
    if r < gamma / 2:
        y = 0
    elif r < gamma:
        y = 1
    else:
        y = 2
    t = 1 if y != 2 else 0
    x = int(rng.integers(0, 2))
    if t == 0:
        x = 0
    a, b = sample_outcomes(model, x, y, rng.random())
    u = (1 if (a ^ b) == (x * y) else 0) if t == 1 else None
    return RoundData(index=index, x=x, y=y, t=t, a=a, b=b, u=u)


def sample_rounds(
    model: DeviceModel,
    policy: InputPolicy,
    rng: np.random.Generator,
    n: int,
) -> list:
    return [sample_round(model, policy, rng, i) for i in range(n)]


class UndefinedStatisticError(ValueError):
    """Raised when a requested statistic has an empty sample."""


def chsh_statistics(rounds: Sequence[RoundData]) -> Tuple[float, float, float]:
    """Empirical (winning probability, CHSH score, QBER) from rounds.

    omega is the fraction of test rounds with a xor b = x*y, the score is
    4*(2*omega - 1), and the QBER estimate is the fraction of key rounds
    with a != b.
    """
    n_test = n_win = n_key = n_err = 0
    for r in rounds:
        if r.t == 1:
            n_test += 1
            if (r.a ^ r.b) == (r.x * r.y):
                n_win += 1
        else:
            n_key += 1
            if r.a != r.b:
                n_err += 1
    if n_test == 0 or n_key == 0:
        raise UndefinedStatisticError(
            f"need at least one test and one key round (got {n_test}, {n_key})"
        )
    omega = n_win / n_test
    return omega, 4.0 * (2.0 * omega - 1.0), n_err / n_key


class InfeasibleThresholdError(ValueError):
    """Raised when the tolerance allowance exceeds the test budget."""


def completeness_threshold(omega: float, gamma, n: int, k: float = 3.0) -> float:
    """Threshold winning probability leaving k standard deviations of slack.

    The per-round probability of a lost test is q = gamma*(1 - omega);
    accepting up to q_th = q + k*sqrt(q*(1-q)/n) lost-test fraction
    corresponds to the threshold 1 - q_th/gamma.
    """
    gamma = float(gamma)
    if not 0.75 < omega <= 1.0:
        raise ValueError(f"omega {omega} outside (3/4, 1]")
    if not 0 < gamma < 1:
        raise ValueError(f"gamma {gamma} outside (0, 1)")
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    q = gamma * (1.0 - omega)
    q_th = q + k * math.sqrt(q * (1.0 - q) / n)
    if q_th >= gamma:
        raise InfeasibleThresholdError(
            f"allowance too large: q_th {q_th} >= gamma {gamma}"
        )
    return 1.0 - q_th / gamma


def expected_winning_probability(chsh_score: float) -> float:
    """omega = (4 + S) / 8 for the parametric model."""
    return (4.0 + chsh_score) / 8.0
