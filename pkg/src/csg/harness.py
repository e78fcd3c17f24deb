"""Experiment orchestration: config parsing, seeded runs, summaries, audits and solves."""
from __future__ import annotations

import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from csg.calibration import BinningSpec, WindowScheme, adaptive_cal_err, full_window_errors, standard_cal_score, swap_regret
from csg.environment import AgentEnvironment, BudgetError
from csg.forecaster import ExactBRAgent, ForecasterConfig, ScriptedAgent, build_calibrated_agent
from csg.games import TOYS, ContinuousGame, FiniteGame, chebyshev_radius, game_from_json, solve_stackelberg
from csg.geometry import Ball, Box, sample_simplex_uniform
from csg.principal_continuous import GDwoGConfig, build_tent_binning, continuous_v_star, lazy_gdwog
from csg.principal_finite import ETCConfig, PrincipalView, RateModel, explore_then_commit
from csg.transcript import Transcript

log = logging.getLogger("csg")


class ConfigError(ValueError):
    pass


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named consumer, derived from the root seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(name.encode()),)))


@dataclass
class ExperimentConfig:
    game: dict
    agent: dict
    principal: dict
    T: int
    seed: int = 0
    out: Optional[str] = None
    sampled_outcomes: bool = False
    base_dir: Path = field(default=Path("."), repr=False)

    @classmethod
    def from_json(cls, d: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        try:
            principal = dict(d["principal"])
            T = d.get("T", principal.get("T"))
            if T is None and principal.get("algo") == "gdwog":
                g = principal.get("gdwog", {})
                T = int(g.get("epochs", 500)) * int(g.get("epoch_length", 1))
            cfg = cls(
                game=dict(d["game"]),
                agent=dict(d.get("agent", {"kind": "calibrated"})),
                principal=principal,
                T=int(T),
                seed=int(d.get("seed", 0)),
                out=d.get("out"),
                sampled_outcomes=bool(d.get("sampled_outcomes", False)),
                base_dir=base_dir,
            )
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed experiment config: {e}") from e
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        return cls.from_json(d, path.parent)

    def validate(self) -> None:
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if "file" in self.game:
            p = self.resolve(self.game["file"])
            if not p.exists():
                raise ConfigError(f"game file {p} does not exist")
        elif self.game.get("toy") not in TOYS:
            raise ConfigError(f"unknown game {self.game}")
        kind = self.agent.get("kind")
        if kind not in ("calibrated", "exact_br", "scripted"):
            raise ConfigError(f"unknown agent kind {kind!r}")
        algo = self.principal.get("algo")
        if algo not in ("etc", "gdwog", "scripted", "uniform_random"):
            raise ConfigError(f"unknown principal {algo!r}")
        finite = self.is_finite()
        if algo == "etc" and not finite:
            raise ConfigError("explore-then-commit needs a finite game")
        if algo == "gdwog":
            if finite:
                raise ConfigError("gradient-free principal needs a continuous game")
            g = self.gdwog_config()
            if g.epochs * g.epoch_length != self.T:
                raise ConfigError("T must equal epochs * epoch_length")

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def is_finite(self) -> bool:
        return "file" in self.game or self.game.get("toy") == "G1"

    def build_game(self) -> FiniteGame | ContinuousGame:
        if "file" in self.game:
            try:
                d = json.loads(self.resolve(self.game["file"]).read_text())
                return game_from_json(d, self.game.get("normalize", True))
            except (OSError, json.JSONDecodeError, KeyError) as e:
                raise ConfigError(f"bad game file: {e}") from e
        g = TOYS[self.game["toy"]]()
        if isinstance(g, ContinuousGame) and "domain" in self.game:
            g = _with_domain(g, self.game["domain"])
        return g

    def forecaster_config(self) -> ForecasterConfig:
        f = self.agent.get("forecaster", {})
        return ForecasterConfig(
            grid_step=float(f.get("grid_step", 0.01 if self.is_finite() else self.tent_eps() / 2)),
            start_scheme=f.get("start_scheme", "every_round" if self.T <= 5000 else "dyadic"),
            horizon=self.T,
            eps_nrbr=f.get("eps_nrbr"),
        )

    def tent_eps(self) -> float:
        return float(self.agent.get("tent_eps", self.game.get("tent_eps", 0.05)))

    def gdwog_config(self) -> GDwoGConfig:
        g = self.principal.get("gdwog", {})
        return GDwoGConfig(
            gamma0=float(g.get("gamma0", 0.5)),
            delta0=float(g.get("delta0", 0.3)),
            epochs=int(g.get("epochs", 500)),
            epoch_length=int(g.get("epoch_length", 1)),
            m=1 if self.is_finite() else self.build_game().m,
        )

    def to_json(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d


def _with_domain(game: ContinuousGame, spec: dict) -> ContinuousGame:
    from dataclasses import replace

    if spec.get("kind") == "box":
        dom = Box(tuple(spec["lo"]), tuple(spec["hi"]))
    elif spec.get("kind") == "ball":
        dom = Ball(float(spec["radius"]), int(spec.get("m", game.m)))
    else:
        raise ConfigError(f"unknown domain {spec}")
    return replace(game, domain=dom)


def build_agent(cfg: ExperimentConfig, game, rng: np.random.Generator):
    kind = cfg.agent["kind"]
    tie = cfg.agent.get("tie_rule", "deterministic")
    if kind == "exact_br":
        return ExactBRAgent(game, tie, rng)
    if kind == "scripted":
        return ScriptedAgent(game, cfg.agent["forecasts"], tie, rng)
    return build_calibrated_agent(
        game, cfg.forecaster_config(), tie, rng, tent_eps=cfg.tent_eps(), track_regret=cfg.agent.get("track_regret", False)
    )


def etc_config(cfg: ExperimentConfig, game: FiniteGame) -> ETCConfig:
    p = cfg.principal
    rate = p.get("rate", {})
    pp = p.get("post_process")
    eta = p.get("eta")
    if eta is None:
        # offline helper: the largest best-response inradius
        eta = max(chebyshev_radius(game, y)[0] for y in range(game.k))
    kw: dict[str, Any] = dict(
        T=cfg.T,
        case=p.get("case", "II"),
        eps2=float(p.get("eps2", 0.05)),
        eps1=p.get("eps1"),
        eps_prime=float(p.get("eps_prime", 0.05)),
        delta=float(p.get("delta", 0.01)),
        eta=float(eta),
        init_count=p.get("init_count"),
        c_init=float(p.get("c_init", 2.0)),
        rate=RateModel(rate.get("form", "sqrt"), float(rate.get("c", 0.005)), float(rate.get("beta", 2.0)), game.k, game.m),
        l_max=int(p.get("l_max", 10**6)),
        post_process=pp is not None,
    )
    if pp is not None:
        kw.update(lam=float(pp.get("lambda", 0.0)), max_den=int(pp.get("max_den", 16)), c_const=float(pp.get("c", 1.0)))
    return ETCConfig(**kw)


@dataclass
class RunSummary:
    avg_principal_utility: float
    V_star: float
    gap: float
    max_adaptive_cal_err: float
    worst_window: dict
    full_window_cal_err: float
    l1_score: float
    swap_regret: Optional[float]
    scheme: str
    rounds: int
    phase_rounds: dict
    committed: Optional[dict]
    wall_clock_s: float
    seed: int

    def to_json(self) -> dict:
        return asdict(self)


def transcript_metrics(tr: Transcript, game, binning: BinningSpec, scheme: WindowScheme, V_star: float) -> dict:
    fin = isinstance(game, FiniteGame)
    g = game if fin else None
    res = adaptive_cal_err(tr, binning, g, scheme) if len(tr) >= 2 else None
    avg = float(tr.UP.mean())
    return {
        "avg_principal_utility": avg,
        "V_star": V_star,
        "gap": V_star - avg,
        "max_adaptive_cal_err": res.max_err if res else 0.0,
        "worst_window": {"s": res.worst.s, "t": res.worst.t, "bin": res.worst.bin} if res else {"s": 1, "t": 1, "bin": 0},
        "full_window_cal_err": float(full_window_errors(tr, binning, g).max()) if len(tr) >= 2 else 0.0,
        "l1_score": standard_cal_score(tr, binning, g) if len(tr) >= 2 else 0.0,
        "swap_regret": swap_regret(game, tr) if fin else None,
        "scheme": scheme.kind,
        "rounds": len(tr),
        "phase_rounds": {str(k): int(v) for k, v in zip(*np.unique(np.asarray(tr.epochs, dtype=int), return_counts=True))},
    }


def audit_binning(game, kind: str, tent_eps: float = 0.05) -> BinningSpec:
    if isinstance(game, FiniteGame):
        if kind == "tent":
            raise ConfigError("tent binning applies to continuous games")
        return BinningSpec.for_game(game, kind)
    return build_tent_binning(game.domain, tent_eps).spec


def v_star(game) -> float:
    if isinstance(game, FiniteGame):
        return solve_stackelberg(game).value
    return continuous_v_star(game)[0]


@dataclass
class RunOutput:
    transcript: Transcript
    summary: RunSummary
    extra: dict


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str | Path] = None) -> RunOutput:
    t0 = time.perf_counter()
    game = cfg.build_game()
    agent = build_agent(cfg, game, substream(cfg.seed, "agent"))
    env = AgentEnvironment(game, agent, cfg.T, cfg.sampled_outcomes, substream(cfg.seed, "env"))
    prng = substream(cfg.seed, "principal")
    algo = cfg.principal["algo"]
    committed = None
    extra: dict = {}
    error: Optional[BaseException] = None
    try:
        if algo == "etc":
            res = explore_then_commit(env, PrincipalView.of(game), etc_config(cfg, game), prng)
            committed = {"h": res.h_tilde.tolist(), "y": res.y_tilde, "value": res.value, "explore_rounds": res.explore_rounds}
        elif algo == "gdwog":
            res = lazy_gdwog(env, game, cfg.gdwog_config(), prng)
            extra["x"] = res.x
            extra["h"] = res.h
            extra["y_bar"] = res.y_bar
        elif algo == "scripted":
            seq = [np.atleast_1d(np.asarray(s, dtype=float)) for s in cfg.principal["strategies"]]
            for t in range(cfg.T):
                env.play(seq[t % len(seq)])
        else:
            for _ in range(cfg.T):
                env.play(_uniform(game, prng))
    except BudgetError as e:
        error = e
    tr = env.transcript
    if hasattr(agent, "forecaster"):
        extra["eps_nrbr"] = agent.forecaster.config.eps
        extra["max_certified"] = agent.forecaster.max_certified
        extra["max_regret_ratio"] = agent.forecaster.max_regret_ratio
    tie = cfg.agent.get("tie_rule", "deterministic")
    binning = audit_binning(game, tie, cfg.tent_eps())
    scheme = WindowScheme.default_for(len(tr))
    metrics = transcript_metrics(tr, game, binning, scheme, v_star(game))
    summary = RunSummary(**metrics, committed=committed, wall_clock_s=time.perf_counter() - t0, seed=cfg.seed)
    out = RunOutput(tr, summary, extra)
    if out_dir is not None:
        write_outputs(out, Path(out_dir), partial=error is not None)
    if error is not None:
        error.transcript = tr
        error.output = out  # type: ignore[attr-defined]
        raise error
    return out


def _uniform(game, rng: np.random.Generator) -> np.ndarray:
    if isinstance(game, FiniteGame):
        return sample_simplex_uniform(rng, game.m)
    dom = game.domain
    if isinstance(dom, Box):
        return rng.uniform(dom.lo, dom.hi)
    while True:
        x = rng.uniform(-dom.radius, dom.radius, dom.m)
        if np.linalg.norm(x) <= dom.radius:
            return x


def write_outputs(out: RunOutput, out_dir: Path, partial: bool = False) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    out.transcript.save(out_dir / "transcript.csv")
    d = out.summary.to_json()
    d["partial"] = partial
    _atomic_json(out_dir / "summary.json", d)


def _atomic_json(path: Path, d: dict) -> None:
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def load_game_any(spec: str, base: Path = Path(".")) -> FiniteGame | ContinuousGame:
    if spec in TOYS:
        return TOYS[spec]()
    p = Path(spec)
    try:
        return game_from_json(json.loads(p.read_text()))
    except (OSError, json.JSONDecodeError, KeyError) as e:
        raise ConfigError(f"cannot load game {spec}: {e}") from e


def audit_transcript(tr: Transcript, game, binning_kind: str, scheme: str, tent_eps: float = 0.05) -> dict:
    if tr.m != game.m:
        raise ConfigError(f"transcript has m={tr.m}, game has m={game.m}")
    kind = {"all": "all_pairs", "dyadic": "dyadic", "full": "full_only"}.get(scheme, scheme)
    binning = audit_binning(game, binning_kind, tent_eps)
    fin = isinstance(game, FiniteGame)
    g = game if fin else None
    res = adaptive_cal_err(tr, binning, g, WindowScheme(kind))
    return {
        "max_adaptive_cal_err": res.max_err,
        "worst_window": {"s": res.worst.s, "t": res.worst.t, "bin": res.worst.bin},
        "per_bin_full_window": [w.cal_err for w in res.table],
        "swap_regret": swap_regret(game, tr) if fin else None,
        "l1_score": standard_cal_score(tr, binning, g),
    }


def solve_game(game) -> dict:
    if isinstance(game, FiniteGame):
        sol = solve_stackelberg(game)
        d = sol.to_json()
        d["chebyshev_radii"] = [chebyshev_radius(game, y)[0] for y in range(game.k)]
        return d
    v, x = continuous_v_star(game)
    return {"V_star": v, "x_star": x.tolist() if len(x) > 1 else float(x[0])}
