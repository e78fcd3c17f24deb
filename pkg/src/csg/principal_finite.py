"""Learning principal for finite games: membership probing, robust optimisation, explore-then-commit."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from csg.environment import AgentEnvironment, BudgetError
from csg.games import FiniteGame
from csg.geometry import is_mixed_point, project_to_simplex, sample_simplex_uniform, sample_sphere_in_hyperplane


@dataclass(frozen=True)
class RateModel:
    """Calibration rate the principal assumes for the agent."""

    form: str = "sqrt"
    c: float = 1.0
    beta: float = 2.0
    k: int = 2
    m: int = 2

    def __post_init__(self):
        if self.form not in ("sqrt", "power"):
            raise ValueError(f"unknown rate form {self.form!r}")
        if self.c <= 0 or self.beta <= 0:
            raise ValueError("rate constants must be positive")

    def __call__(self, t: float) -> float:
        if self.form == "power":
            return self.c * t ** (-1.0 / self.beta)
        return self.c * math.sqrt(math.log(max(self.k * self.m * t, 2.0)) / t)

    def to_json(self) -> dict:
        return {"form": self.form, "c": self.c, "beta": self.beta}


def rate_inverse(rate: RateModel, target: float, l_max: int = 10**6) -> int:
    """Smallest l >= 1 with rate(l) <= target."""
    if target <= 0:
        raise ValueError("target must be positive")
    if rate(1) <= target:
        return 1
    hi = 2
    while rate(hi) > target:
        if hi > l_max:
            raise BudgetError(f"probe length exceeds l_max={l_max} for target {target:.3g}")
        hi *= 2
    lo = hi // 2  # rate(lo) > target
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rate(mid) <= target:
            hi = mid
        else:
            lo = mid
    if hi > l_max:
        raise BudgetError(f"probe length {hi} exceeds l_max={l_max}")
    return hi


@dataclass(frozen=True)
class ApproxMemParams:
    eps1: float
    eps2: float
    eps3: float
    phi: int
    radius: float
    eps_cal: float
    l: int
    case: str = "II"
    phi_condition: float = 0.0  # epochs required by the general sufficient condition

    def condition1(self) -> bool:
        return self.eps1 + self.eps2 - self.radius >= self.eps_cal - 1e-12


def phi_requirement(eps_cal: float, eps2: float, radius: float, eps3: float, delta: float, m: int) -> float:
    ratio = (eps_cal + eps2) / radius
    if ratio >= 1:
        return math.inf
    return 10 * math.sqrt(m) * (1 - ratio**2) ** (-(m - 1) / 2) * math.log(1.0 / (eps3 - delta))


def set_params_case(
    case: str,
    eps1: float,
    eps2: float,
    delta: float,
    T: int,
    m: int,
    k: int,
    rate: RateModel,
    l_max: int = 10**6,
    phi_cap: int = 10**5,
    strict: bool = False,
) -> ApproxMemParams:
    """Probe radius, epoch count and probe length for one of three eps1/eps2 regimes.

    strict=True also enforces the general epoch lower bound, which the closed-form epoch
    counts of all three regimes undershoot at desk-scale horizons.
    """
    eps3 = delta + T ** -2.0
    logT = math.log(T)
    if case == "I":
        if eps1 <= 4 * eps2:
            raise ValueError("case I needs eps1 > 4 * eps2")
        eps_cal, R = eps2, eps1 / 2
        phi = 10 * math.sqrt(m) * (1 - 4 * eps2 / eps1) ** ((m - 1) / 2) * logT
    elif case == "II":
        eps1 = eps2 if eps1 is None else eps1
        if not math.isclose(eps1, eps2):
            raise ValueError("case II needs eps1 == eps2")
        eps_cal, R = 0.1 * eps2, 1.9 * eps2
        phi = 1.25**m * logT
    elif case == "III":
        if eps1 > 2 * eps2:
            raise ValueError("case III needs eps1 <= 2 * eps2")
        eps_cal = eps1 / 6
        R = (eps2 + eps1 / 6) * (1 + eps1 / (2 * eps2))
        phi = 10 * math.sqrt(m) * (eps2 / eps1) ** (m / 2) * logT
    else:
        raise ValueError(f"unknown case {case!r}")
    phi = int(math.ceil(phi - 1e-9))
    if phi > phi_cap:
        raise BudgetError(f"case {case} needs {phi} epochs (cap {phi_cap})")
    l = rate_inverse(rate, eps_cal / (k * math.sqrt(m)), l_max)
    need = phi_requirement(eps_cal, eps2, R, eps3, delta, m)
    p = ApproxMemParams(eps1, eps2, eps3, max(phi, 1), R, eps_cal, l, case, need)
    if not p.condition1():
        raise ValueError("probe radius too large: eps1 + eps2 - R < eps_cal")
    if strict and p.phi < need:
        raise ValueError(f"{p.phi} epochs below the required {need:.1f}")
    return p


@dataclass(frozen=True)
class PrincipalView:
    """What the principal knows: its own utilities and the action counts."""

    u_principal: np.ndarray
    m: int
    k: int

    @classmethod
    def of(cls, game: FiniteGame) -> "PrincipalView":
        return cls(game.u_principal, game.m, game.k)

    def value(self, h: np.ndarray, y: int) -> float:
        return float(np.asarray(h) @ self.u_principal[:, y])


@dataclass
class ProbeRecord:
    h: np.ndarray
    modal: Optional[int]
    counts: Optional[np.ndarray]
    left_simplex: bool


def approx_mem(
    env: AgentEnvironment,
    view: PrincipalView,
    y: Optional[int],
    h: np.ndarray,
    params: ApproxMemParams,
    rng: np.random.Generator,
    log: Optional[list] = None,
) -> bool | Optional[int]:
    """Probe Φ random points at distance R around h for l rounds each.

    With a target y: True iff every probe stays in the simplex and elicits y as its modal
    response. With y=None: returns the common modal label, or None on exit or disagreement.
    """
    label: Optional[int] = y
    for _ in range(params.phi):
        hp = np.asarray(h, dtype=float) + sample_sphere_in_hyperplane(rng, view.m, params.radius)
        if np.any(hp < 0):
            if log is not None:
                log.append(ProbeRecord(hp, None, None, True))
            return False if y is not None else None
        hp = np.maximum(hp, 0.0)
        hp /= hp.sum()
        counts = np.zeros(view.k, dtype=int)
        for _ in range(params.l):
            counts[int(env.play(hp))] += 1
        modal = int(np.argmax(counts))
        if log is not None:
            log.append(ProbeRecord(hp, modal, counts, False))
        if label is None:
            label = modal
        elif modal != label:
            return False if y is not None else None
    return True if y is not None else label


MembershipOracle = Callable[[np.ndarray], bool]
SLIDE_LEAN = 0.2


def nearest_neighbour_order(points: list[np.ndarray]) -> list[np.ndarray]:
    left = list(points)
    if not left:
        return []
    tour = [left.pop(0)]
    while left:
        d = [float(np.linalg.norm(q - tour[-1])) for q in left]
        tour.append(left.pop(int(np.argmin(d))))
    return tour


def build_initialization_set(
    env: AgentEnvironment,
    view: PrincipalView,
    params: ApproxMemParams,
    count: int,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, int]]:
    """Uniform samples kept with their label when every probe agrees on the modal response.

    Samples are queried along a greedy nearest-neighbour tour so that a
    history-dependent agent crosses between best-response regions rarely.
    """
    pts = [sample_simplex_uniform(rng, view.m) for _ in range(count)]
    out = []
    for h in nearest_neighbour_order(pts):
        lab = approx_mem(env, view, None, h, params, rng)
        if lab is not None:
            out.append((h, int(lab)))
    return out


@dataclass
class OptimizeResult:
    point: np.ndarray
    value: float
    queries: int
    stagnated: bool


def _max_step(x: np.ndarray, d: np.ndarray) -> float:
    neg = d < -1e-15
    if not np.any(neg):
        return math.inf
    return float(np.min(-x[neg] / d[neg]))


def optimize_over_membership(
    objective: np.ndarray,
    membership: MembershipOracle,
    initial: np.ndarray,
    eps_prime: float,
    rng: np.random.Generator,
    n_dirs: int = 24,
    patience: int = 3,
) -> OptimizeResult:
    """Random-direction ascent of a linear objective over a set known only through membership.

    Each direction is a unit vector of the simplex's affine hull turned uphill; the largest
    feasible step along it is bisected to resolution eps_prime / 4 and kept when it improves
    the objective. After a failed direction the next one is the objective projected off the
    mean of the directions that failed since the last move (an outward-normal estimate), which
    slides along the active face without extra queries.
    """
    c = np.asarray(objective, dtype=float)
    x = np.asarray(initial, dtype=float).copy()
    cz = c - c.mean()
    queries = 0
    if np.linalg.norm(cz) <= 1e-12:
        return OptimizeResult(x, float(c @ x), 0, True)
    m = len(x)
    res = eps_prime / 4
    misses = 0
    failed: list[np.ndarray] = []
    slide = False
    for it in range(n_dirs):
        d = None
        if it == 0:
            d = cz / np.linalg.norm(cz)
        elif slide and failed:
            nrm = np.mean(failed, axis=0)
            nrm /= max(np.linalg.norm(nrm), 1e-15)
            t = cz - (cz @ nrm) * nrm
            if np.linalg.norm(t) > 1e-9 * np.linalg.norm(cz):
                # lean slightly inward so an imperfect normal estimate still leaves room to move
                tn = t / np.linalg.norm(t)
                lean = SLIDE_LEAN
                if nrm @ cz > 0:
                    lean = min(lean, 0.5 * (tn @ cz) / (nrm @ cz))
                d = tn - lean * nrm
                d /= np.linalg.norm(d)
        slide = False
        if d is None:
            d = sample_sphere_in_hyperplane(rng, m, 1.0)
            if d @ cz < 0:
                d = -d
        if d @ cz <= 1e-12:
            continue
        lo, hi = 0.0, _max_step(x, d)
        if hi > res:
            queries += 1
            if membership(project_to_simplex(x + hi * d)):
                lo = hi
            else:
                while hi - lo > res:
                    mid = (lo + hi) / 2
                    queries += 1
                    if membership(project_to_simplex(x + mid * d)):
                        lo = mid
                    else:
                        hi = mid
        if lo > 0:
            x = project_to_simplex(x + lo * d)
            misses = 0
            failed.clear()
            continue
        misses += 1
        failed.append(d)
        slide = True
        if misses >= patience:
            break
    return OptimizeResult(x, float(c @ x), queries, misses >= patience)


def rational_candidates(center: np.ndarray, radius: float, max_den: int, cap: int = 200_000) -> list[np.ndarray]:
    """Simplex points whose coordinates are fractions with denominator <= max_den,
    within l_inf distance radius of center, nearest first."""
    m = len(center)
    axes = []
    for j in range(m - 1):
        lo, hi = max(0.0, center[j] - radius), min(1.0, center[j] + radius)
        vals = set()
        for q in range(1, max_den + 1):
            for a in range(int(math.ceil(lo * q - 1e-12)), int(math.floor(hi * q + 1e-12)) + 1):
                vals.add(Fraction(a, q))
                if len(vals) > cap:
                    raise BudgetError(f"rational enumeration exceeds cap {cap}")
        axes.append(sorted(vals))
    out = []
    for combo in itertools.product(*axes):
        last = 1 - sum(combo)
        if last < 0 or last.denominator > max_den or abs(float(last) - center[-1]) > radius + 1e-12:
            continue
        out.append(np.array([float(v) for v in combo] + [float(last)]))
        if len(out) > cap:
            raise BudgetError(f"rational enumeration exceeds cap {cap}")
    out.sort(key=lambda v: (float(np.max(np.abs(v - center))), tuple(v)))
    return out


@dataclass
class PostProcessResult:
    point: np.ndarray
    ok: bool
    queries: int


def post_process(
    membership: Callable[[np.ndarray, float], bool],
    h_tilde: np.ndarray,
    lam: float,
    h0: np.ndarray,
    eta: float,
    max_den: int,
    radius: float,
    cap: int = 10_000,
) -> PostProcessResult:
    """Snap h_tilde to a low-denominator point, pull it toward the centre h0 twice.

    membership(h, tol) answers the approximate membership query at eps1 = eps2 = tol.
    """
    if lam < 0 or (lam > 0 and lam >= eta / 2):
        raise ValueError("need 0 <= lambda < eta / 2")
    a = 2 * lam / eta
    cands = rational_candidates(np.asarray(h_tilde, dtype=float), radius, max_den, cap)
    if len(cands) > cap:
        raise BudgetError(f"post-processing set of {len(cands)} points exceeds cap {cap}")
    for n, s in enumerate(cands, 1):
        hq = (1 - a) * s + a * np.asarray(h0)
        if membership(hq, lam / 2):
            return PostProcessResult((1 - a) * hq + a * np.asarray(h0), True, n)
    return PostProcessResult(np.asarray(h_tilde, dtype=float), False, len(cands))


@dataclass(frozen=True)
class ETCConfig:
    T: int
    case: str = "II"
    eps2: float = 0.05
    eps1: Optional[float] = None
    eps_prime: float = 0.05
    delta: float = 0.01
    eta: float = 0.25
    init_count: Optional[int] = None
    c_init: float = 2.0
    rate: RateModel = field(default_factory=lambda: RateModel("sqrt", 0.005))
    l_max: int = 10**6
    post_process: bool = False
    lam: float = 0.0
    max_den: int = 16
    c_const: float = 1.0
    n_dirs: int = 24

    def __post_init__(self):
        if self.eps_prime <= 0:
            raise ValueError("eps_prime must be positive")
        if self.post_process and not (0 <= self.lam < self.eta / 2):
            raise ValueError("post-processing needs lambda < eta / 2")

    def initial_count(self) -> int:
        return self.init_count if self.init_count is not None else int(math.ceil(self.c_init * math.log(self.T)))


@dataclass
class ETCResult:
    h_tilde: np.ndarray
    y_tilde: int
    value: float
    explore_rounds: int
    commit_rounds: int
    init_pairs: list
    candidates: dict


def explore_then_commit(
    env: AgentEnvironment, view: PrincipalView, config: ETCConfig, rng: np.random.Generator
) -> ETCResult:
    main = set_params_case(
        config.case, config.eps1 if config.eps1 is not None else config.eps2, config.eps2,
        config.delta, config.T, view.m, view.k, config.rate, config.l_max,
    )
    init = set_params_case(
        "II", config.eta / 4, config.eta / 4, config.delta, config.T, view.m, view.k, config.rate, config.l_max
    )
    env.epoch = 1
    pairs = build_initialization_set(env, view, init, config.initial_count(), rng)
    if not pairs:
        raise BudgetError("initialization produced no labelled strategy", env.transcript)
    starts: dict[int, np.ndarray] = {}
    for h, y in pairs:
        if y not in starts or view.value(h, y) > view.value(starts[y], y):
            starts[y] = h
    cands = {}
    for y, h0 in sorted(starts.items()):
        env.epoch += 1
        oracle = lambda h, y=y: approx_mem(env, view, y, h, main, rng)  # noqa: E731
        res = optimize_over_membership(view.u_principal[:, y], oracle, h0, config.eps_prime, rng, config.n_dirs)
        cands[y] = res
    y_t = max(cands, key=lambda y: cands[y].value)
    h_t = cands[y_t].point
    if config.post_process:
        env.epoch += 1
        pp = post_process(
            lambda h, tol: bool(approx_mem(env, view, y_t, h, _tol_params(main, tol, config, view), rng)),
            h_t, config.lam, starts[y_t], config.eta, config.max_den,
            config.c_const * config.eps_prime,
        )
        h_t = pp.point
    explore = env.rounds
    env.epoch = 0
    while env.remaining > 0:
        env.play(h_t)
    return ETCResult(h_t, int(y_t), view.value(h_t, y_t), explore, env.rounds - explore, pairs, cands)


def _tol_params(base: ApproxMemParams, tol: float, config: ETCConfig, view: PrincipalView) -> ApproxMemParams:
    if tol <= 0:
        return base
    return set_params_case("II", tol, tol, config.delta, config.T, view.m, view.k, config.rate, config.l_max)
