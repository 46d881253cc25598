"""Multi-seed experiment orchestration, envelope aggregation and reports.

An experiment is a grid of cells, one per ``(seed, ref)`` pair. Every cell
is trained independently from its own seed, written to its own CSV, and
listed in ``manifest.json`` together with a hash of the exact cell config and
a git-style blob digest of the CSV bytes.
"""
from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .deep import DEEP_KINDS, DeepAgentConfig, train_deep
from .envs import make_env
from .errors import ContractError
from .records import RunRecord
from .solvers import average_reward, brute_force_gain_optimal, discounted_value_iteration
from .tabular import AGENT_KINDS, LearningConfig, train_tabular

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass
class ExperimentConfig:
    """One agent on one environment over a grid of seeds and references.

    ``refs`` is only used by reference-state agents. For ``rviq`` (and for
    ``ddrviq`` with ``ref_mode='state'``) each entry is a tabular state index.
    With ``ref_mode='subspace'`` entry ``i`` draws a ddrviq reference state
    whose AoI entries all lie in the ``i``-th of ``len(refs)`` disjoint ranges,
    sampled independently per seed.
    """

    env: str
    agent: str
    agent_config: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    refs: list | None = None
    ref_mode: str = "state"
    eval_horizon: int | None = None
    out_dir: str | None = None
    workers: int = 1

    def check(self):
        if not self.seeds:
            raise ContractError("an experiment needs at least one seed")
        if self.agent not in AGENT_KINDS and self.agent not in DEEP_KINDS:
            raise ContractError(f"unknown agent {self.agent!r}")
        if self.ref_mode not in ("state", "subspace"):
            raise ContractError("ref_mode must be 'state' or 'subspace'")
        if self.ref_mode == "subspace" and self.agent != "ddrviq":
            raise ContractError("subspace references only apply to ddrviq")

    @classmethod
    def from_json(cls, path):
        return cls(**json.loads(Path(path).read_text()))

    def to_dict(self):
        return asdict(self)


def config_hash(cell):
    blob = json.dumps(cell, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def git_blob_digest(data):
    """SHA-1 over ``b'blob <len>\\0' + data``, as ``git hash-object`` computes."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def cell_spec(config, seed, ref):
    """Fully resolved, JSON-serialisable description of one cell."""
    agent_config = dict(config.agent_config)
    agent_config["seed"] = int(seed)
    if config.eval_horizon is not None:
        agent_config["eval_horizon"] = int(config.eval_horizon)
    if ref is not None:
        if config.agent == "rviq":
            agent_config["ref_state"] = int(ref)
        elif config.agent == "ddrviq":
            agent_config["ref_features"] = _ref_features(config, seed, ref)
    return {"env": config.env, "agent": config.agent, "agent_config": agent_config,
            "seed": int(seed), "ref": None if ref is None else int(ref)}


def _ref_features(config, seed, ref):
    env = make_env(config.env)
    if config.ref_mode == "subspace":
        rng = np.random.default_rng([int(seed), int(ref)])
        feats = env.subspace_state_features(int(ref), len(config.refs), rng)
    else:
        _, indexer = env.to_tabular()
        feats = env.encode(indexer.state(int(ref)))
    return [float(x) for x in feats]


def run_cell(cell):
    env = make_env(cell["env"])
    if cell["agent"] in AGENT_KINDS:
        record = train_tabular(cell["agent"], env, LearningConfig(**cell["agent_config"]))
    else:
        record = train_deep(cell["agent"], env, DeepAgentConfig.from_dict(cell["agent_config"]))
    record.ref_id = cell["ref"]
    record.config_hash = config_hash(cell)
    return record


def _safe_run(cell):
    try:
        return run_cell(cell), None
    except Exception as exc:  # a failed cell must not abort its siblings
        log.exception("cell seed=%s ref=%s failed", cell["seed"], cell["ref"])
        return None, f"{type(exc).__name__}: {exc}"


def _cell_name(cell):
    name = f"{cell['agent']}-s{cell['seed']}"
    return name if cell["ref"] is None else f"{name}-r{cell['ref']}"


def run_experiment(config):
    """Run every ``(seed, ref)`` cell; returns records in grid order.

    Failed cells appear as empty records whose ``error`` is set. When
    ``config.out_dir`` is given, CSVs and the manifest are written there.
    """
    config.check()
    refs = config.refs if config.refs else [None]
    cells = [cell_spec(config, seed, ref) for seed in config.seeds for ref in refs]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_safe_run, cells))
    else:
        results = [_safe_run(c) for c in cells]
    records = []
    for cell, (record, error) in zip(cells, results):
        if record is None:
            record = RunRecord(agent=cell["agent"], seed=cell["seed"], ref_id=cell["ref"],
                               config_hash=config_hash(cell), error=error)
        records.append(record)
    if config.out_dir is not None:
        write_outputs(config, cells, records)
    return records


def write_outputs(config, cells, records):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for cell, record in zip(cells, records):
        entry = {"agent": cell["agent"], "seed": cell["seed"], "ref_id": cell["ref"],
                 "config_hash": record.config_hash, "cell": cell}
        if record.error is None:
            data = record.to_csv_text().encode()
            path = out / f"{_cell_name(cell)}.csv"
            path.write_bytes(data)
            entry.update(status="ok", csv=path.name, digest=git_blob_digest(data))
        else:
            entry.update(status="error", error=record.error)
        entries.append(entry)
    manifest = {"experiment": config.to_dict(), "records": entries}
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / MANIFEST


def load_records(directory):
    """Read back every successful record listed in a run directory's manifest."""
    directory = Path(directory)
    manifest = json.loads((directory / MANIFEST).read_text())
    records = []
    for entry in manifest["records"]:
        if entry.get("status") != "ok":
            continue
        rec = RunRecord.from_csv(directory / entry["csv"], agent=entry["agent"])
        rec.ref_id = entry["ref_id"]
        rec.config_hash = entry["config_hash"]
        records.append(rec)
    return records


@dataclass
class Envelope:
    steps: np.ndarray
    mean: np.ndarray
    min: np.ndarray
    max: np.ndarray

    @property
    def width(self):
        return self.max - self.min

    def rows(self):
        return list(zip(self.steps.tolist(), self.mean.tolist(),
                        self.min.tolist(), self.max.tolist()))


def aggregate_envelope(records):
    """Pointwise mean, min and max of evaluation scores across runs."""
    if not records:
        raise ContractError("no records to aggregate")
    grid = list(records[0].steps)
    for rec in records[1:]:
        if list(rec.steps) != grid:
            raise ContractError(
                f"evaluation grids differ (seed {records[0].seed} vs seed {rec.seed})")
    scores = np.array([rec.eval_avg_reward for rec in records], dtype=np.float64)
    scores = scores.reshape(len(records), len(grid))
    return Envelope(steps=np.asarray(grid), mean=scores.mean(axis=0),
                    min=scores.min(axis=0), max=scores.max(axis=0))


def summarize_tail(record, n=10):
    """Mean and population standard deviation of the last ``n`` evaluations."""
    scores = record.eval_avg_reward if isinstance(record, RunRecord) else list(record)
    if n < 1 or len(scores) < n:
        raise ContractError(f"need at least {n} evaluations, have {len(scores)}")
    tail = np.asarray(scores[-n:], dtype=np.float64)
    return float(tail.mean()), float(tail.std())


@dataclass(frozen=True)
class GapRow:
    gamma: float
    policy: str
    average_reward: float
    optimal_gain: float
    gap: float


def gap_report(mdp, gammas):
    """Average-reward shortfall of the discounted-optimal policy for each gamma."""
    _, optimal = brute_force_gain_optimal(mdp)
    rows = []
    for gamma in gammas:
        policy = discounted_value_iteration(mdp, gamma).policy
        avg = average_reward(mdp, policy)
        rows.append(GapRow(float(gamma), policy.key, avg, optimal, optimal - avg))
    return rows
