"""On-disk chain storage.

A ChainStore directory holds ``meta.json`` (config echo, seed, burn-in
index, acceptance rates, beta trajectories), ``scalars.csv`` with one row
per particle per sweep (step, particle, g_value, accepted, beta) and one
``fields_<particle>.csv`` per particle with thinned coefficient rows
(step 0 holds the initial ensemble).  Floating-point numbers are written
with 17 significant digits so files are bit-reproducible from the seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def config_hash(config):
    """Stable hash of a configuration dictionary."""
    payload = json.dumps(config, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _fmt(x):
    return f"{x:.17g}"


@dataclass
class ChainStore:
    """Per-particle sample trajectories with the metadata to replay them."""

    config: dict
    sampler: object
    seed: int
    n_particles: int
    n_steps: int
    burn_in_idx: int
    thin: int
    scalar_steps: np.ndarray
    scalar_particles: np.ndarray
    g_values: np.ndarray
    accepted: np.ndarray
    betas: np.ndarray
    field_steps: np.ndarray
    fields: list
    acceptance_rates: np.ndarray
    beta_history: list
    n_phi_evals: int
    rank_reductions: int = 0
    extra_meta: dict = field(default_factory=dict)

    @property
    def hash(self):
        return config_hash(self.config)

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def g_series(self, post_burn_in=False):
        """Scalar series per particle, shape (n_particles, n_steps)."""
        series = self.g_values.reshape(self.n_steps, self.n_particles).T
        if post_burn_in:
            series = series[:, self.burn_in_idx:]
        return series

    def initial_ensemble(self):
        return np.stack([f[0] for f in self.fields])

    def field_chains(self, post_burn_in=True):
        """Thinned field samples per particle, shape (n_particles, n_kept, dim)."""
        keep = self.field_steps > self.burn_in_idx if post_burn_in else slice(None)
        return np.stack([f[keep] for f in self.fields])

    def pooled_fields(self, post_burn_in=True):
        chains = self.field_chains(post_burn_in)
        return chains.reshape(-1, chains.shape[-1])

    # ------------------------------------------------------------------
    # persistence
    # ------------------------------------------------------------------

    def save(self, directory):
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "config": self.config,
            "config_hash": self.hash,
            "seed": int(self.seed),
            "n_particles": int(self.n_particles),
            "n_steps": int(self.n_steps),
            "burn_in_index": int(self.burn_in_idx),
            "thin": int(self.thin),
            "acceptance_rates": [float(a) for a in self.acceptance_rates],
            "beta_history": [[float(b) for b in h] for h in self.beta_history],
            "n_phi_evals": int(self.n_phi_evals),
            "rank_reductions": int(self.rank_reductions),
        }
        meta.update(self.extra_meta)
        with open(out / "meta.json", "w") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
            fh.write("\n")
        lines = ["step,particle,g_value,accepted,beta"]
        for s, p, g, a, b in zip(
            self.scalar_steps, self.scalar_particles, self.g_values, self.accepted, self.betas
        ):
            lines.append(f"{s},{p},{_fmt(g)},{a},{_fmt(b)}")
        (out / "scalars.csv").write_text("\n".join(lines) + "\n")
        dim = self.fields[0].shape[1] if self.fields else 0
        header = "step," + ",".join(f"c{i}" for i in range(dim))
        for j, rows in enumerate(self.fields):
            lines = [header]
            for step, coeffs in zip(self.field_steps, rows):
                lines.append(f"{step}," + ",".join(_fmt(c) for c in coeffs))
            (out / f"fields_{j}.csv").write_text("\n".join(lines) + "\n")
        return out

    @classmethod
    def load(cls, directory):
        src = Path(directory)
        with open(src / "meta.json") as fh:
            meta = json.load(fh)
        scal = np.loadtxt(src / "scalars.csv", delimiter=",", skiprows=1, ndmin=2)
        n = meta["n_particles"]
        fields = []
        field_steps = None
        for j in range(n):
            raw = np.loadtxt(src / f"fields_{j}.csv", delimiter=",", skiprows=1, ndmin=2)
            field_steps = raw[:, 0].astype(np.int64)
            fields.append(raw[:, 1:])
        known = {
            "config", "config_hash", "seed", "n_particles", "n_steps",
            "burn_in_index", "thin", "acceptance_rates", "beta_history",
            "n_phi_evals", "rank_reductions",
        }
        if scal.shape[0]:
            steps_col = scal[:, 0].astype(np.int64)
            part_col = scal[:, 1].astype(np.int64)
            g_col, acc_col, beta_col = scal[:, 2], scal[:, 3].astype(np.int64), scal[:, 4]
        else:
            steps_col = part_col = acc_col = np.zeros(0, dtype=np.int64)
            g_col = beta_col = np.zeros(0)
        return cls(
            config=meta["config"],
            sampler=None,
            seed=meta["seed"],
            n_particles=n,
            n_steps=meta["n_steps"],
            burn_in_idx=meta["burn_in_index"],
            thin=meta["thin"],
            scalar_steps=steps_col,
            scalar_particles=part_col,
            g_values=g_col,
            accepted=acc_col,
            betas=beta_col,
            field_steps=field_steps,
            fields=fields,
            acceptance_rates=np.asarray(meta["acceptance_rates"]),
            beta_history=meta["beta_history"],
            n_phi_evals=meta["n_phi_evals"],
            rank_reductions=meta.get("rank_reductions", 0),
            extra_meta={k: v for k, v in meta.items() if k not in known},
        )
