"""Run records: the evaluation time series emitted by every training run."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

BASE_COLUMNS = ("step", "eval_avg_reward", "u_tilde", "seed")
DEEP_COLUMNS = ("loss", "target_syncs")


@dataclass
class RunRecord:
    agent: str
    seed: int
    steps: list = field(default_factory=list)
    eval_avg_reward: list = field(default_factory=list)
    u_tilde: list | None = None
    loss: list | None = None
    target_syncs: list | None = None
    ref_id: int | None = None
    config_hash: str = ""
    error: str | None = None

    def append(self, step, score, u_tilde=None, loss=None, target_syncs=None):
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"evaluation steps must increase: {step} after {self.steps[-1]}")
        self.steps.append(int(step))
        self.eval_avg_reward.append(float(score))
        if self.u_tilde is not None:
            self.u_tilde.append(float(u_tilde))
        if self.loss is not None:
            self.loss.append(float(loss))
        if self.target_syncs is not None:
            self.target_syncs.append(int(target_syncs))

    def __len__(self):
        return len(self.steps)

    @property
    def is_deep(self):
        return self.loss is not None

    def to_csv_text(self):
        columns = BASE_COLUMNS + (DEEP_COLUMNS if self.is_deep else ())
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for i, step in enumerate(self.steps):
            row = [step, repr(self.eval_avg_reward[i]),
                   "" if self.u_tilde is None else repr(self.u_tilde[i]), self.seed]
            if self.is_deep:
                row += [repr(self.loss[i]), self.target_syncs[i]]
            writer.writerow(row)
        return buf.getvalue()

    def to_csv(self, path):
        Path(path).write_text(self.to_csv_text())

    @classmethod
    def from_csv(cls, path, agent=""):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        deep = bool(rows) and "loss" in rows[0]
        has_u = bool(rows) and rows[0]["u_tilde"] != ""
        rec = cls(agent=agent, seed=int(rows[0]["seed"]) if rows else 0,
                  u_tilde=[] if has_u else None,
                  loss=[] if deep else None, target_syncs=[] if deep else None)
        for row in rows:
            rec.append(int(row["step"]), float(row["eval_avg_reward"]),
                       u_tilde=float(row["u_tilde"]) if has_u else None,
                       loss=float(row["loss"]) if deep else None,
                       target_syncs=int(row["target_syncs"]) if deep else None)
        return rec
