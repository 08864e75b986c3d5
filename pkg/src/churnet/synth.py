"""Seeded agent-based labor market with planted threshold contagion.

Each month every employed agent departs with probability
base_hazard * firm_factor * (1 + boost), where the boost equals the
configured multiplier exactly when the departure fraction among the
agent's window-start co-workers exceeds the threshold.  Departed agents
re-enter a uniformly size-weighted firm after a geometric delay.  All
dates land on month boundaries and the whole simulation is deterministic
for a fixed seed.
"""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .months import first_day, format_month, month_index
from .registry import EmploymentRecord, Gender, RecordSet, RegistryError, Role

SIM_EPOCH = month_index(2010, 1)


@dataclass(frozen=True)
class MarketConfig:
    n_agents: int = 20_000
    n_firms: int = 200
    months: int = 120
    base_hazard: float = 0.023
    firm_stability_spread: float = 0.0  # log-normal sigma on per-firm hazard factor
    contagion_threshold: float = 0.30
    contagion_boost: float = 0.23
    window_months: int = 6
    rehire_delay_mean: float = 2.0  # months, geometric
    firm_size_skew: float = 1.5  # log-normal sigma of initial firm weights
    seed: int = 2

    def validate(self) -> None:
        if min(self.n_agents, self.n_firms, self.months) <= 0:
            raise RegistryError("counts must be positive")
        if not (0 < self.base_hazard < 1):
            raise RegistryError("base_hazard must be in (0, 1)")
        if self.base_hazard * (1 + self.contagion_boost) >= 1:
            raise RegistryError("base_hazard * (1 + boost) must be < 1")
        if self.contagion_boost < 0 or not (0 <= self.contagion_threshold < 1):
            raise RegistryError("bad contagion parameters")
        if self.window_months < 1 or self.rehire_delay_mean < 1:
            raise RegistryError("window_months and rehire_delay_mean must be >= 1")
        if self.firm_stability_spread < 0 or self.firm_size_skew < 0:
            raise RegistryError("spreads must be non-negative")


def generate_market(cfg: MarketConfig) -> RecordSet:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, nf, T, w = cfg.n_agents, cfg.n_firms, cfg.months, cfg.window_months

    weights = rng.lognormal(0.0, cfg.firm_size_skew, nf) if cfg.firm_size_skew > 0 else np.ones(nf)
    probs = weights / weights.sum()
    firm_factor = (
        rng.lognormal(0.0, cfg.firm_stability_spread, nf)
        if cfg.firm_stability_spread > 0
        else np.ones(nf)
    )
    roles = rng.random(n) < 0.1  # responsible officers
    genders = rng.random(n) < 0.5

    firm_of = rng.choice(nf, size=n, p=probs).astype(np.int16)
    spell_start = np.zeros(n, dtype=np.int32)
    rejoin_at = np.full(n, -1, dtype=np.int32)
    F = np.full((n, T), -1, dtype=np.int16)  # firm history
    D = np.zeros((n, T), dtype=bool)  # departure decisions

    spells: list[tuple[int, int, int, Optional[int]]] = []  # agent, firm, start, end decision

    for t in range(T):
        # re-entries decided earlier land before the snapshot of month t
        back = np.flatnonzero(rejoin_at == t)
        if len(back):
            firm_of[back] = rng.choice(nf, size=len(back), p=probs).astype(np.int16)
            spell_start[back] = t
            rejoin_at[back] = -1
        F[:, t] = firm_of

        employed = firm_of >= 0
        boost = np.zeros(n, dtype=bool)
        if t >= w:
            s = t - w
            f_s = F[:, s]
            was_employed = f_s >= 0
            departed_in = D[:, s:t].any(axis=1)
            cnt = np.bincount(f_s[was_employed], minlength=nf)
            dep = np.bincount(f_s[was_employed & departed_in], minlength=nf)
            elig = employed & was_employed
            f0 = f_s[elig]
            n_peers = cnt[f0] - 1
            n_dep = dep[f0] - departed_in[elig]
            frac = np.where(n_peers > 0, n_dep / np.maximum(n_peers, 1), 0.0)
            boost[elig] = (n_peers > 0) & (frac > cfg.contagion_threshold)

        hazard = np.zeros(n)
        hazard[employed] = (
            cfg.base_hazard
            * firm_factor[firm_of[employed]]
            * (1 + cfg.contagion_boost * boost[employed])
        )
        np.clip(hazard, 0.0, 0.99, out=hazard)

        u = rng.random(n)
        leaving = employed & (u < hazard)
        leavers = np.flatnonzero(leaving)
        if len(leavers):
            D[leavers, t] = True
            for a in leavers:
                spells.append((int(a), int(firm_of[a]), int(spell_start[a]), t))
            delays = rng.geometric(1.0 / cfg.rehire_delay_mean, size=len(leavers))
            rejoin_at[leavers] = t + 1 + delays
            firm_of[leavers] = -1

    still = np.flatnonzero(firm_of >= 0)
    for a in still:
        spells.append((int(a), int(firm_of[a]), int(spell_start[a]), None))

    # canonical order: by agent then start month, so downstream row order
    # carries no information about departure timing
    spells.sort(key=lambda t: (t[0], t[2]))
    records = []
    for a, f, s0, end_t in spells:
        records.append(
            EmploymentRecord(
                person_id=f"P{a:06d}",
                firm_id=f"F{f:04d}",
                role=Role.RESPONSIBLE_OFFICER if roles[a] else Role.REPRESENTATIVE,
                start_date=first_day(SIM_EPOCH + s0),
                end_date=None if end_t is None else first_day(SIM_EPOCH + end_t + 1),
                gender=Gender.F if genders[a] else Gender.M,
                region=None,
            )
        )
    return RecordSet(records=tuple(records), provenance=f"synthetic(seed={cfg.seed})")


def market_grid_range(cfg: MarketConfig) -> tuple[int, int]:
    """Month-index range covered by a generated market."""
    return SIM_EPOCH, SIM_EPOCH + cfg.months - 1


def describe_ground_truth(cfg: MarketConfig) -> dict:
    """JSON-ready manifest of the planted parameters."""
    manifest = {
        "generator": "churnet.synth",
        "epoch_month": format_month(SIM_EPOCH),
        "config": asdict(cfg),
        "planted": {
            "contagion_threshold": cfg.contagion_threshold,
            "contagion_boost": cfg.contagion_boost,
            "base_hazard": cfg.base_hazard,
            "window_months": cfg.window_months,
            "seed": cfg.seed,
        },
    }
    return manifest


def manifest_hash(manifest: dict) -> str:
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
