"""Experiment configuration, dataset generation and the train/test protocol.

Random streams are derived from the config seed with ``SeedSequence`` keyed
by the role of the stream (generation, meta-training, evaluation) and the
indices of the work item, so results do not depend on how work is split
across processes.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import __version__
from .forecaster import ef_run_task, theory_step_size
from .io import DataError, digest, read_manifest, read_task, task_record, write_manifest, write_task
from .meta_step import MetaConfig, MetaState, meta_task
from .metrics import neg_log_overlap, task_similarity
from .piecewise import Density, Interval, PiecewiseConstant, pc_argmin, pc_sum
from .robust import PerturbedRound, dual_regret, halving_losses, robust_lb_sequence
from .tasks import (
    gaussian_mixture_gen,
    knapsack_gen,
    knapsack_loss,
    lloyd_seed_loss,
    mwis_gen,
    mwis_loss,
)

log = logging.getLogger(__name__)

KINDS = ("knapsack", "gaussian_cluster", "mwis", "robust", "halving")
TABLE_KINDS = ("knapsack", "gaussian_cluster", "mwis")
DEFAULT_DOMAINS = {"knapsack": (0.0, 10.0), "gaussian_cluster": (0.0, 10.0),
                   "mwis": (0.0, 10.0), "robust": (0.0, 1.0), "halving": (0.0, 1.0)}
STREAM_GEN, STREAM_META, STREAM_EVAL = 0, 1, 2
VARIANTS = ("single_task", "meta_initialized")

RESULT_COLUMNS = ["experiment_id", "dataset", "variant", "task_id", "replica", "shots",
                  "accuracy", "regret", "V2", "neg_log_overlap", "lambda"]
CURVE_COLUMNS = ["experiment_id", "dataset", "variant", "n_train_tasks", "shots", "mean_regret"]
TIMING_COLUMNS = ["task_id", "replica", "wallclock_ms"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    kind: str
    T_train: int = 10
    T_test: int = 5
    m_rounds: int = 30
    replicas: int = 100
    beta: float = 0.5
    gamma: float = 0.01
    eta: float = 0.01
    eps: float | None = None
    D: float | None = None
    step_variant: str = "ftl"
    lam_mode: str = "meta"
    shots: tuple = (1, 5)
    seed: int = 0
    domain: tuple | None = None
    sigma: float = 3.0
    n_vertices: int = 8
    edge_p: float = 0.3
    beta_a: float = 0.5
    table_mode: bool = True
    source_lines: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.domain is None:
            self.domain = DEFAULT_DOMAINS.get(self.kind, (0.0, 1.0))
        self.domain = tuple(float(x) for x in self.domain)
        self.shots = tuple(int(s) for s in self.shots)

    @property
    def interval(self) -> Interval:
        return Interval(*self.domain)

    def validate(self) -> "ExperimentConfig":
        def fail(key, msg):
            line = self.source_lines.get(key)
            where = f"line {line}: " if line else ""
            raise ConfigError(f"{where}{key}: {msg}")

        if self.kind not in KINDS:
            fail("kind", f"unknown kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        for key in ("T_test", "m_rounds", "replicas"):
            if getattr(self, key) < 1:
                fail(key, "must be at least 1")
        if self.T_train < 0:
            fail("T_train", "must be nonnegative")
        if not self.beta > 0:
            fail("beta", "must be positive")
        if not 0 <= self.gamma <= 1:
            fail("gamma", "must lie in [0, 1]")
        if self.lam_mode == "meta" and self.gamma == 0:
            fail("gamma", "must be positive when lam_mode = meta")
        if not self.eta > 0:
            fail("eta", "must be positive")
        if self.step_variant not in ("ftl", "ewoo"):
            fail("step_variant", "must be ftl or ewoo")
        if self.lam_mode not in ("meta", "theory-fixed"):
            fail("lam_mode", "must be meta or theory-fixed")
        if not self.shots or any(s < 1 for s in self.shots):
            fail("shots", "must be positive integers")
        if self.table_mode and any(s not in (1, 5) for s in self.shots):
            fail("shots", "must be 1 or 5 in table mode")
        if any(s > self.m_rounds for s in self.shots):
            fail("shots", "cannot exceed m_rounds")
        lo, hi = self.domain
        if not lo < hi:
            fail("domain", "needs lo < hi")
        if self.kind in TABLE_KINDS and (lo < 0 or hi > 10):
            fail("domain", "must lie within [0, 10]")
        if not self.sigma > 0:
            fail("sigma", "must be positive")
        if self.kind == "halving" and not self.m_rounds > 3.0 ** (1.0 / self.beta):
            fail("m_rounds", "too small for the halving construction")
        return self

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("source_lines")
        d["shots"] = list(self.shots)
        d["domain"] = list(self.domain)
        return d

    def config_hash(self) -> str:
        return digest({"config": self.canonical(), "code_version": __version__})

    def meta_config(self) -> MetaConfig:
        return MetaConfig(T=max(self.T_train, 1), m=self.m_rounds, beta=self.beta,
                          gamma=self.gamma, eta=self.eta, eps=self.eps, D=self.D,
                          step_variant=self.step_variant, lam_mode=self.lam_mode,
                          seed=self.seed)


_CASTS = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    kind = _CASTS[key]
    if key == "shots":
        return tuple(int(x) for x in raw.split(","))
    if key == "domain":
        parts = [float(x) for x in raw.split(",")]
        if len(parts) != 2:
            raise ValueError("expected lo,hi")
        return tuple(parts)
    if key == "table_mode":
        if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError("expected true or false")
        return raw.lower() in ("true", "1", "yes")
    if "None" in kind:
        return None if raw.lower() == "none" else float(raw)
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(text: str, seed: int | None = None) -> ExperimentConfig:
    """Flat ``key = value`` lines with ``#`` comments; errors name the line."""
    values, lines = {}, {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _CASTS or key == "source_lines":
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ConfigError(f"line {n}: {key}: cannot parse {raw!r} ({exc})") from None
        lines[key] = n
    if "kind" not in values:
        raise ConfigError("kind: required key missing")
    if seed is not None:
        values["seed"] = seed
    return ExperimentConfig(**values, source_lines=lines).validate()


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, seed)


def stream(cfg: ExperimentConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *key]))


# -- generation -------------------------------------------------------------

def _task_param(cfg: ExperimentConfig, rng: np.random.Generator) -> dict:
    if cfg.kind == "knapsack":
        return {"w_t": float(rng.uniform(0.0, 2.0))}
    if cfg.kind == "gaussian_cluster":
        return {"d": float(rng.uniform(2.0, 3.0)), "sigma": cfg.sigma}
    if cfg.kind == "mwis":
        return {"base_weights": rng.uniform(0.05, 1.0, cfg.n_vertices).tolist(),
                "edge_p": cfg.edge_p}
    return {}


def _gaussian_instance(param: dict, domain: Interval, rng: np.random.Generator):
    while True:
        data = gaussian_mixture_gen(param["d"], param["sigma"], rng)
        u = rng.random(data.k)
        try:
            return lloyd_seed_loss(data, domain, u)
        except ValueError:
            # coincident points left nothing to sample; draw fresh uniforms
            continue


def generate_task(cfg: ExperimentConfig, task_id: int, split: str) -> dict:
    rng = stream(cfg, STREAM_GEN, task_id)
    domain = cfg.interval
    param = _task_param(cfg, rng)
    m = cfg.m_rounds
    if cfg.kind == "knapsack":
        inst = [knapsack_gen(param["w_t"], rng) for _ in range(m)]
        losses = [knapsack_loss(i, domain) for i in inst]
        meta = {**param, "scales": [i.total_value for i in inst]}
    elif cfg.kind == "gaussian_cluster":
        losses = [_gaussian_instance(param, domain, rng) for _ in range(m)]
        meta = {**param, "scales": [1.0] * m}
    elif cfg.kind == "mwis":
        graphs = [mwis_gen(cfg.n_vertices, cfg.edge_p, np.array(param["base_weights"]), rng)
                  for _ in range(m)]
        losses = [mwis_loss(g, domain) for g in graphs]
        meta = {**param, "scales": [float(g.weights.sum()) for g in graphs]}
    elif cfg.kind == "halving":
        trace = halving_losses(m, cfg.beta, domain.width, domain.lo, domain, rng)
        losses = trace.losses
        meta = {"n_bulk": trace.n_bulk, "n_halving": trace.n_halving, "levels": trace.levels}
    else:
        trace = robust_lb_sequence(m, cfg.beta, cfg.beta_a, rng, domain)
        meta = {"phase_lengths": list(trace.phase_lengths), "clipped": trace.any_clipped,
                "beta_a": cfg.beta_a}
        return task_record(task_id, cfg.kind, split, trace.perturbed, meta,
                           true_losses=trace.true_losses, attacks=trace.attacks)
    return task_record(task_id, cfg.kind, split, losses, meta)


def cmd_gen(cfg: ExperimentConfig, data_dir) -> Path:
    data_dir = Path(data_dir)
    tasks_dir = data_dir / "tasks"
    try:
        tasks_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {tasks_dir}: {exc}") from exc
    entries = []
    n_tasks = cfg.T_train + cfg.T_test
    for task_id in range(n_tasks):
        split = "train" if task_id < cfg.T_train else "test"
        rec = generate_task(cfg, task_id, split)
        name = f"task_{task_id:04d}.jsonl"
        write_task(tasks_dir / name, rec)
        entries.append({"task_id": task_id, "split": split, "file": f"tasks/{name}"})
        log.info("generated %s task %d (%s)", cfg.kind, task_id, split)
    write_manifest(data_dir, {
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "config": cfg.canonical(),
        "tasks": entries,
        "test_task_policy": "test-task parameters resampled from the training range",
    })
    return data_dir


# -- evaluation -------------------------------------------------------------

@dataclass
class TestTask:
    task_id: int
    losses: list[PiecewiseConstant]
    value: PiecewiseConstant | None
    opt_rho: float
    true_losses: list[PiecewiseConstant] | None = None
    attacks: list | None = None

    @classmethod
    def from_record(cls, rec: dict) -> "TestTask":
        losses = rec["losses"]
        scales = rec["meta"].get("scales")
        value = None
        if scales is not None:
            value = pc_sum([(1.0 - f) * s for f, s in zip(losses, scales)])
        opt_source = rec.get("true_losses", losses)
        _, _, rho = pc_argmin(pc_sum(opt_source))
        return cls(rec["task_id"], losses, value, rho, rec.get("true_losses"), rec.get("attacks"))


@dataclass
class TrainedMeta:
    init: Density
    state: MetaState
    V2: float
    curve_states: list[MetaState]


def load_dataset(cfg: ExperimentConfig, data_dir) -> tuple[list[dict], list[dict]]:
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    if manifest.get("config_hash") != cfg.config_hash():
        raise DataError(
            f"dataset in {data_dir} was generated from a different config or code version "
            f"(hash {manifest.get('config_hash', '?')[:12]} vs {cfg.config_hash()[:12]}); "
            "rerun 'gen'"
        )
    train, test = [], []
    for entry in manifest["tasks"]:
        rec = read_task(data_dir / entry["file"])
        (train if entry["split"] == "train" else test).append(rec)
    if len(train) != cfg.T_train or len(test) != cfg.T_test:
        raise DataError("task counts in the manifest do not match the config")
    return train, test


def meta_train(cfg: ExperimentConfig, train: list[dict]) -> TrainedMeta:
    """Sequential meta-training; keeps the state after every task for the curve."""
    rng = stream(cfg, STREAM_META)
    state = MetaState.start(cfg.meta_config(), cfg.interval)
    states = [state]
    for rec in train:
        state, _, _, _ = meta_task(state, rec["losses"], rng)
        states.append(state)
    V2 = task_similarity(state.history.balls, cfg.interval).v_squared if train else math.nan
    return TrainedMeta(state.init, state, V2, states)


def _variant_setup(cfg, variant, meta_state: MetaState, losses, k):
    domain = cfg.interval
    if variant == "single_task":
        init = Density.uniform(domain)
        lam = theory_step_size(init, losses, cfg.beta, m=k, radius_m=cfg.m_rounds)
    else:
        init = meta_state.init
        if cfg.lam_mode == "meta":
            lam = meta_state.lambda_for(k)
        else:
            lam = theory_step_size(init, losses, cfg.beta, m=k, radius_m=cfg.m_rounds)
    return init, lam


def evaluate_item(cfg: ExperimentConfig, trained: TrainedMeta, task: TestTask, test_index: int,
                  replica: int) -> tuple[list[dict], float]:
    """All rows for one (test task, replica) pair, plus the wallclock spent."""
    t0 = time.perf_counter()
    rows = []
    radius = cfg.m_rounds ** (-cfg.beta)
    ball = Interval.ball(task.opt_rho, radius).clip(cfg.interval)
    shots = cfg.shots if cfg.kind in TABLE_KINDS else (cfg.m_rounds,)
    for s_idx, k in enumerate(shots):
        losses = task.losses[:k]
        for v_idx, variant in enumerate(VARIANTS):
            rng = stream(cfg, STREAM_EVAL, replica, test_index, s_idx, v_idx)
            init, lam = _variant_setup(cfg, variant, trained.state, losses, k)
            trace = ef_run_task(losses, init, lam, rng)
            if task.value is not None:
                play = trace.plays[k - 1]
                accuracy = task.value(play) / task.value.max()
            else:
                accuracy = math.nan
            regret = trace.regret
            if task.attacks is not None:
                rounds = [PerturbedRound(f, a) for f, a in zip(task.true_losses[:k],
                                                                task.attacks[:k])]
                regret, _ = dual_regret(trace.plays, rounds)
            rows.append({
                "dataset": cfg.kind,
                "variant": variant,
                "task_id": task.task_id,
                "replica": replica,
                "shots": k,
                "accuracy": float(accuracy),
                "regret": float(regret),
                "V2": float(trained.V2),
                "neg_log_overlap": neg_log_overlap(init, ball),
                "lambda": float(lam),
            })
    return rows, (time.perf_counter() - t0) * 1e3


_WORKER: dict = {}


def _worker_init(cfg, trained, tasks):
    _WORKER.update(cfg=cfg, trained=trained, tasks=tasks)


def _worker_run(item):
    test_index, replica = item
    w = _WORKER
    return evaluate_item(w["cfg"], w["trained"], w["tasks"][test_index], test_index, replica)


def regret_curve(cfg: ExperimentConfig, trained: TrainedMeta, tasks: list[TestTask]) -> list[dict]:
    """Mean expected test regret against the number of training tasks seen."""
    rows = []
    shots = cfg.shots if cfg.kind in TABLE_KINDS else (cfg.m_rounds,)
    for k in shots:
        for t, state in enumerate(trained.curve_states):
            for variant in VARIANTS:
                regs = []
                for task in tasks:
                    losses = task.losses[:k]
                    init, lam = _variant_setup(cfg, variant, state, losses, k)
                    rng = stream(cfg, STREAM_EVAL, 0, 0, 0, 0)
                    regs.append(ef_run_task(losses, init, lam, rng).expected_regret)
                rows.append({"dataset": cfg.kind, "variant": variant, "n_train_tasks": t,
                             "shots": k, "mean_regret": float(np.mean(regs))})
    return rows


def cmd_run(cfg: ExperimentConfig, data_dir, jobs: int = 1):
    """Meta-train once, then evaluate every (test task, replica) pair.

    Returns ``(rows, curve_rows, timings)`` with rows sorted by task, replica,
    shots and variant.
    """
    train, test = load_dataset(cfg, data_dir)
    trained = meta_train(cfg, train)
    tasks = [TestTask.from_record(r) for r in test]
    items = [(i, r) for i in range(len(tasks)) for r in range(cfg.replicas)]
    if jobs <= 1:
        _worker_init(cfg, trained, tasks)
        out = [_worker_run(it) for it in items]
    else:
        with get_context("spawn").Pool(jobs, _worker_init, (cfg, trained, tasks)) as pool:
            out = pool.map(_worker_run, items, chunksize=max(1, len(items) // (4 * jobs)))
    exp_id = cfg.config_hash()[:12]
    rows, timings = [], []
    for (i, r), (item_rows, ms) in zip(items, out):
        rows.extend(item_rows)
        timings.append({"task_id": tasks[i].task_id, "replica": r, "wallclock_ms": ms})
    order = {v: n for n, v in enumerate(VARIANTS)}
    rows.sort(key=lambda x: (x["task_id"], x["replica"], x["shots"], order[x["variant"]]))
    for row in rows:
        row["experiment_id"] = exp_id
    curve = regret_curve(cfg, trained, tasks)
    for row in curve:
        row["experiment_id"] = exp_id
    return rows, curve, timings
