"""Finite-size secure key length with term-by-term breakdown.

The certified key length is Upsilon_b applied to an entropy budget that
accumulates, per round, a linear lower bound on the conditional von
Neumann entropy certified by the CHSH score, minus second-order
statistical corrections, the cost of bounding the side information Bob
publishes, smoothing and hashing costs, and the classical leakage
(syndrome plus the 264 bits of tags, flags, and extractor slack). All
logarithms are base 2; b = 4 / ln 2.

The entropy bound as a function of the winning probability w is

    eta(w) = 0                                       for 1/4 <= w <= 3/4
           = 1 - h( (1 + sqrt(16 w (w-1) + 3)) / 2 ) elsewhere on
             [w_min, w_max],

with w_min/max = (1 -+ 1/sqrt(2))/2 the quantum extremes; g_t is its
tangent at t, extended affinely. The budget's statistical terms involve
the variance of the affine score functional under the test distribution
q(w) = (gamma (1-w), gamma w, 1-gamma), minimized over w in the quantum
range (any discretization error of that infimum lowers the key length,
never inflates it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .ecc.bounds import binary_entropy
from .trevisan import upsilon

UPSILON_B = 4.0 / math.log(2.0)
OMEGA_MIN = (1.0 - 1.0 / math.sqrt(2.0)) / 2.0
OMEGA_MAX = (1.0 + 1.0 / math.sqrt(2.0)) / 2.0
LOG2_5 = math.log2(5.0)
LOG2_33 = math.log2(33.0)
DEFAULT_EPS_HASH = 2.0 ** -61


def eta(omega: float) -> float:
    """CHSH-certified entropy bound; 0 on the classical band [1/4, 3/4]."""
    if 0.25 <= omega <= 0.75:
        return 0.0
    if not OMEGA_MIN - 1e-12 <= omega <= OMEGA_MAX + 1e-12:
        raise ValueError(f"omega {omega} outside the quantum range")
    radicand = max(16.0 * omega * (omega - 1.0) + 3.0, 0.0)
    z = (1.0 + math.sqrt(radicand)) / 2.0
    return 1.0 - binary_entropy(z)


def eta_prime(t: float) -> float:
    """Analytic derivative of eta on (3/4, omega_max).

    Finite differences are ill-conditioned near omega_max where the
    square root's slope blows up, so the chain rule is applied in closed
    form: eta' = log2(z / (1 - z)) * 4 (2t - 1) / sqrt(radicand).
    """
    if not 0.75 < t <= OMEGA_MAX:
        raise ValueError(f"tangent point {t} outside (3/4, omega_max]")
    radicand = 16.0 * t * (t - 1.0) + 3.0
    sq = math.sqrt(radicand)
    z = (1.0 + sq) / 2.0
    if z >= 1.0:
        return math.inf
    dz = 16.0 * (2.0 * t - 1.0) / (4.0 * sq)
    return math.log2(z / (1.0 - z)) * dz


@dataclass(frozen=True)
class TradeoffContext:
    """Test probability and the quantum winning-probability range."""

    gamma: float
    omega_min: float = OMEGA_MIN
    omega_max: float = OMEGA_MAX


@dataclass(frozen=True)
class TradeoffTerms:
    """Tangent bound g_t and its affine score extension f_t.

    g_t(w) = eta(t) + (w - t) eta'(t). The score functional takes value
    f0 on a lost test round and g_t(1) on won or skipped rounds, with
    f0 = g_t(0)/gamma + (1 - 1/gamma) g_t(1); under q(w) its mean is
    g_t(w) again. max over distributions is g_t(1), min over the
    quantum-compatible ones is g_t(omega_min).
    """

    t: float
    eta_t: float
    slope: float
    gamma: float

    def g(self, omega: float) -> float:
        return self.eta_t + (omega - self.t) * self.slope

    @property
    def f_lost(self) -> float:
        return self.g(0.0) / self.gamma + (1.0 - 1.0 / self.gamma) * self.g(1.0)

    @property
    def f_won(self) -> float:
        return self.g(1.0)

    @property
    def max_f(self) -> float:
        return self.g(1.0)

    @property
    def min_f(self) -> float:
        return self.g(OMEGA_MIN)

    def f_mean(self, omega: float) -> float:
        p_lost = self.gamma * (1.0 - omega)
        return p_lost * self.f_lost + (1.0 - p_lost) * self.f_won

    def f_variance(self, omega) -> np.ndarray:
        """Var of the score functional under q(omega); vectorized."""
        p_lost = self.gamma * (1.0 - np.asarray(omega, dtype=float))
        mean = p_lost * self.f_lost + (1.0 - p_lost) * self.f_won
        second = p_lost * self.f_lost**2 + (1.0 - p_lost) * self.f_won**2
        return second - mean**2


def tradeoff_terms(t: float, ctx: TradeoffContext) -> TradeoffTerms:
    """Tangent construction at t; t must be in the curved branch."""
    if not 0.75 < t <= ctx.omega_max:
        raise ValueError(f"tangent point {t} must lie in (3/4, omega_max]")
    return TradeoffTerms(t=t, eta_t=eta(t), slope=eta_prime(t), gamma=ctx.gamma)


def theta_smooth(eps: float) -> float:
    """log2(1 / (1 - sqrt(1 - eps^2))), stable for tiny eps.

    Uses 1 - sqrt(1-eps^2) = eps^2 / (1 + sqrt(1-eps^2)) to avoid
    cancellation; bounded above by log2(2 / eps^2).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"smoothing parameter {eps} outside (0, 1)")
    s = math.sqrt(max(0.0, 1.0 - eps * eps))
    return math.log2(1.0 + s) - 2.0 * math.log2(eps)


@dataclass(frozen=True)
class SecurityParams:
    """Free analysis parameters behind a key-length evaluation.

    alpha1 in (1, 2) and alpha2 in (1, 1 + 1/log2(5)) are Renyi orders;
    the smoothing split must satisfy eps_s1 + 2 eps_s2 < eps_s.
    """

    t: float
    eps_h: float
    eps_pa: float
    eps_ea: float
    alpha1: float
    alpha2: float
    eps_s: float
    eps_s1: float
    eps_s2: float

    def __post_init__(self):
        if not 0.75 < self.t <= OMEGA_MAX:
            raise ValueError(f"t {self.t} outside (3/4, omega_max]")
        if not 1.0 < self.alpha1 < 2.0:
            raise ValueError(f"alpha1 {self.alpha1} outside (1, 2)")
        if not 1.0 < self.alpha2 < 1.0 + 1.0 / LOG2_5:
            raise ValueError(f"alpha2 {self.alpha2} outside (1, 1 + 1/log2 5)")
        for name in ("eps_h", "eps_pa", "eps_ea", "eps_s", "eps_s1", "eps_s2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} {v} outside (0, 1)")
        if self.eps_s1 + 2.0 * self.eps_s2 >= self.eps_s:
            raise ValueError("need eps_s1 + 2 eps_s2 < eps_s")

    @property
    def soundness(self) -> float:
        return max(self.eps_ea, self.eps_pa + 2.0 * self.eps_s) + 4.0 * self.eps_h


@dataclass(frozen=True)
class KeyLengthBreakdown:
    """Additive terms of the entropy budget, in bits."""

    entropy_rate: float
    eat_gap: float
    second_order: float
    hmax_cost: float
    renyi_costs: float
    chain_rule: float
    pa_cost: float
    leakage: float
    constant: float
    pre_upsilon: float
    ell: int
    soundness: float
    params: SecurityParams

    def terms(self) -> dict:
        return {
            "entropy_rate": self.entropy_rate,
            "eat_gap": self.eat_gap,
            "second_order": self.second_order,
            "hmax_cost": self.hmax_cost,
            "renyi_costs": self.renyi_costs,
            "chain_rule": self.chain_rule,
            "pa_cost": self.pa_cost,
            "leakage": self.leakage,
            "constant": self.constant,
        }


_GRID_POINTS = 10_001
_GRID = np.linspace(OMEGA_MIN, OMEGA_MAX, _GRID_POINTS)
_GRID_ETA = np.array(
    [0.0 if 0.25 <= w <= 0.75 else 1.0 - binary_entropy((1.0 + math.sqrt(max(16.0 * w * (w - 1.0) + 3.0, 0.0))) / 2.0) for w in _GRID]
)


def _variance_penalty(var) -> np.ndarray:
    return (math.log(2.0) / 2.0) * (LOG2_33 + np.sqrt(2.0 + np.maximum(var, 0.0))) ** 2


def _eat_infimum(tt: TradeoffTerms, alpha1: float) -> float:
    """inf over the quantum range of eta(w) - g_t(w) - (alpha1-1) V(q(w)).

    Dense grid plus golden-section refinement around the grid minimum;
    the minimum of all evaluations is returned, which errs on the
    conservative side.
    """
    a = alpha1 - 1.0
    gw = tt.eta_t + (_GRID - tt.t) * tt.slope
    objective = _GRID_ETA - gw - a * _variance_penalty(tt.f_variance(_GRID))
    i = int(np.argmin(objective))
    best = float(objective[i])

    def f(w: float) -> float:
        return (
            eta(w)
            - tt.g(w)
            - a * float(_variance_penalty(tt.f_variance(w)))
        )

    lo = float(_GRID[max(0, i - 1)])
    hi = float(_GRID[min(_GRID_POINTS - 1, i + 1)])
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - phi * (hi - lo), lo + phi * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(60):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - phi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + phi * (hi - lo)
            fd = f(d)
    return min(best, fc, fd)


def key_length(
    n: int, gamma: float, omega_thresh: float, m: int, sec: SecurityParams
) -> KeyLengthBreakdown:
    """Evaluate the certified key length for fixed protocol and analysis
    parameters. The output length is floor(Upsilon_b(budget)) when the
    budget reaches 1, else 0."""
    gamma = float(gamma)
    if m < 0:
        raise ValueError("syndrome length must be >= 0")
    if not 0.75 < omega_thresh <= OMEGA_MAX:
        raise ValueError(f"omega_thresh {omega_thresh} outside (3/4, omega_max]")
    ctx = TradeoffContext(gamma=gamma)
    tt = tradeoff_terms(sec.t, ctx)
    a1, a2 = sec.alpha1, sec.alpha2

    entropy_rate = n * tt.g(omega_thresh)
    eat_gap = n * _eat_infimum(tt, a1)

    span = 2.0 + tt.max_f - tt.min_f
    k_alpha = (
        1.0 / (6.0 * (2.0 - a1) ** 3 * math.log(2.0))
        * 2.0 ** ((a1 - 1.0) * span)
        * math.log(2.0**span + math.e**2) ** 3
    )
    second_order = -n * (a1 - 1.0) ** 2 * k_alpha

    hmax_cost = -n * gamma - n * (a2 - 1.0) * LOG2_5**2

    log_ea = math.log2(1.0 / sec.eps_ea)
    renyi_costs = -(
        (theta_smooth(sec.eps_s1) + a1 * log_ea) / (a1 - 1.0)
        + (theta_smooth(sec.eps_s2) + a2 * log_ea) / (a2 - 1.0)
    )
    chain_rule = -3.0 * theta_smooth(sec.eps_s - sec.eps_s1 - 2.0 * sec.eps_s2)
    pa_cost = -5.0 * math.log2(1.0 / sec.eps_pa)
    leakage = -float(m)
    constant = -264.0

    pre = (
        entropy_rate + eat_gap + second_order + hmax_cost
        + renyi_costs + chain_rule + pa_cost + leakage + constant
    )
    ell = math.floor(upsilon(pre)) if pre >= 1.0 else 0
    return KeyLengthBreakdown(
        entropy_rate=entropy_rate,
        eat_gap=eat_gap,
        second_order=second_order,
        hmax_cost=hmax_cost,
        renyi_costs=renyi_costs,
        chain_rule=chain_rule,
        pa_cost=pa_cost,
        leakage=leakage,
        constant=constant,
        pre_upsilon=pre,
        ell=ell,
        soundness=sec.soundness,
        params=sec,
    )


_ALPHA2_MAX = 1.0 + 1.0 / LOG2_5


def _params_from_vector(
    vec: np.ndarray, eps_budget: float, eps_h: float
) -> Optional[SecurityParams]:
    """Map an unconstrained search vector to feasible SecurityParams.

    Coordinates: tangent point t; log10(alpha1 - 1); log10(alpha2 - 1);
    the fraction of the secrecy budget given to eps_pa; and the two
    smoothing-split fractions. The soundness constraint is saturated by
    construction: eps_ea = eps_pa + 2 eps_s = budget.
    """
    t, la1, la2, rho, s1, s2 = (float(v) for v in vec)
    alpha1 = 1.0 + 10.0**la1
    alpha2 = 1.0 + 10.0**la2
    if not (1.0 < alpha1 < 2.0 and 1.0 < alpha2 < _ALPHA2_MAX):
        return None
    if not 0.75 < t < OMEGA_MAX:
        return None
    cap = min(eps_budget, 0.999)
    eps_ea = cap
    eps_pa = rho * cap
    eps_s = (1.0 - rho) * cap / 2.0
    eps_s1 = s1 * eps_s * 0.999
    eps_s2 = s2 * (eps_s - eps_s1) / 2.0 * 0.999
    try:
        return SecurityParams(
            t=t, eps_h=eps_h, eps_pa=eps_pa, eps_ea=eps_ea,
            alpha1=alpha1, alpha2=alpha2,
            eps_s=eps_s, eps_s1=eps_s1, eps_s2=eps_s2,
        )
    except ValueError:
        return None


_BOUNDS = (
    (0.7505, OMEGA_MAX - 1e-9),
    (-8.0, -0.35),
    (-6.0, math.log10(_ALPHA2_MAX - 1.0) - 1e-9),
    (0.001, 0.999),
    (0.05, 0.95),
    (0.05, 0.95),
)


def optimize(
    n: int,
    gamma: float,
    omega_thresh: float,
    m: int,
    eps_snd_target: float = 1e-10,
    eps_h: float = DEFAULT_EPS_HASH,
    seed: int = 1,
    starts: int = 12,
    sweeps: int = 6,
) -> Tuple[SecurityParams, KeyLengthBreakdown]:
    """Heuristic maximization of the key length over the free parameters.

    Multi-start coordinate descent with golden-section line searches;
    epsilon coordinates move on a log scale. Deterministic for a fixed
    seed; candidates are reduced sequentially so the result does not
    depend on any internal parallelism. Returns the best feasible
    breakdown; if no positive length exists the breakdown with the
    least-negative budget is returned (ell = 0).
    """
    eps_budget = eps_snd_target - 4.0 * eps_h
    if eps_budget <= 0.0:
        raise ValueError(
            f"soundness target {eps_snd_target} cannot cover the 4*eps_h floor"
        )
    gamma = float(gamma)

    def objective(vec: np.ndarray) -> Tuple[float, Optional[KeyLengthBreakdown]]:
        sec = _params_from_vector(vec, eps_budget, eps_h)
        if sec is None:
            return -math.inf, None
        bd = key_length(n, gamma, omega_thresh, m, sec)
        score = float(bd.ell) if bd.ell > 0 else min(bd.pre_upsilon, 0.0)
        return score, bd

    rng = np.random.default_rng(seed)
    warm = np.array([min(omega_thresh - 0.012, OMEGA_MAX - 0.02), -3.2, -2.4, 0.05, 0.85, 0.9])
    start_points = [warm]
    for _ in range(max(0, starts - 1)):
        start_points.append(
            np.array([rng.uniform(lo, hi) for lo, hi in _BOUNDS])
        )

    phi = (math.sqrt(5.0) - 1.0) / 2.0
    best_score, best_bd = -math.inf, None
    for x0 in start_points:
        x = x0.copy()
        fx, bd = objective(x)
        for _ in range(sweeps):
            improved = False
            for j in range(len(_BOUNDS)):
                lo, hi = _BOUNDS[j]
                a, b = lo, hi
                c, d = b - phi * (b - a), a + phi * (b - a)
                xc = x.copy()
                xc[j] = c
                fc, _ = objective(xc)
                xd = x.copy()
                xd[j] = d
                fd, _ = objective(xd)
                for _ in range(28):
                    if fc >= fd:
                        b, d, fd = d, c, fc
                        c = b - phi * (b - a)
                        xc[j] = c
                        fc, _ = objective(xc)
                    else:
                        a, c, fc = c, d, fd
                        d = a + phi * (b - a)
                        xd[j] = d
                        fd, _ = objective(xd)
                xn = x.copy()
                xn[j] = 0.5 * (a + b)
                fn, bdn = objective(xn)
                if fn > fx:
                    x, fx, bd = xn, fn, bdn
                    improved = True
            if not improved:
                break
        if fx > best_score and bd is not None:
            best_score, best_bd = fx, bd
    if best_bd is None:
        raise RuntimeError("no feasible parameter point found")
    return best_bd.params, best_bd
