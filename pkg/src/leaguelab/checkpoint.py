"""Versioned JSON checkpoints of a league run.

Every source of randomness is derived from ``(seed, stream, clock)``, so the
clock plus the stored league is the complete generator state: a loaded
checkpoint continues exactly where the saved run stopped.
"""

from __future__ import annotations

import hashlib
import json
import os
from collections import deque
from pathlib import Path

import numpy as np

from . import qd
from .config import ExperimentConfig, from_dict
from .errors import CheckpointError, MigrationError
from .league import PayoffTable
from .population import Agent, HyperparamVector, League, LineageRecord
from .runtime import LeagueState, build_game

SCHEMA_VERSION = 1
FORMAT = "leaguelab-checkpoint"


def _agent_to_dict(a: Agent) -> dict:
    return {
        "id": a.id,
        "logits": a.logits.tolist(),
        "hypers": a.hypers.as_dict() if a.hypers is not None else None,
        "rating": a.rating,
        "criterion": qd.criterion_to_dict(a.criterion),
        "bd": a.bd.tolist() if a.bd is not None else None,
        "born_at": a.born_at,
        "matches_played": a.matches_played,
        "last_exploit_at": a.last_exploit_at,
        "matches_at_exploit": a.matches_at_exploit,
        "active": a.active,
        "slot": a.slot,
    }


def _agent_from_dict(d: dict) -> Agent:
    hypers = HyperparamVector(**d["hypers"]) if d["hypers"] is not None else None
    return Agent(
        id=d["id"], logits=np.array(d["logits"], dtype=float), hypers=hypers, rating=d["rating"],
        criterion=qd.criterion_from_dict(d["criterion"]), bd=d["bd"], born_at=d["born_at"],
        matches_played=d["matches_played"], last_exploit_at=d["last_exploit_at"],
        matches_at_exploit=d["matches_at_exploit"], active=d["active"], slot=d["slot"],
    )


def state_to_dict(state: LeagueState) -> dict:
    lg = state.league
    return {
        "format": FORMAT,
        "schema_version": SCHEMA_VERSION,
        "config": state.config.to_dict(),
        "clock": state.clock,
        "league": {
            "capacity": lg.capacity,
            "hall_cap": lg.hall_cap,
            "hall_seen": lg.hall_seen,
            "next_id": lg.next_id,
            "frozen_charge": lg.frozen_charge,
            "active": [_agent_to_dict(a) for a in lg.active],
            "hall": [_agent_to_dict(a) for a in lg.hall],
            "fixed": [_agent_to_dict(a) for a in lg.fixed],
            "lineage": [[r.child, r.parent, r.event, r.time, r.detail] for r in lg.lineage],
        },
        "payoffs": state.table.to_list(),
        "archive": {"dim": state.archive.dim, "R": state.archive.R, "cells": state.archive.records()},
        "units": list(state.units),
        "bd_windows": [[list(bd) for bd in w] for w in state.bd_windows],
        "sat_history": [list(h) for h in state.sat_history],
        "counters": dict(state.counters),
    }


def state_from_dict(doc: dict) -> LeagueState:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError("not a league checkpoint (missing or wrong 'format' field)")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise MigrationError(f"checkpoint schema_version {version!r} is not supported "
                             f"(this build reads version {SCHEMA_VERSION}); no migration path")
    try:
        config: ExperimentConfig = from_dict(doc["config"])
        lg = doc["league"]
        league = League(
            capacity=lg["capacity"],
            active=[_agent_from_dict(a) for a in lg["active"]],
            hall=[_agent_from_dict(a) for a in lg["hall"]],
            hall_cap=lg["hall_cap"],
            hall_seen=lg["hall_seen"],
            fixed=[_agent_from_dict(a) for a in lg["fixed"]],
            lineage=[LineageRecord(*r) for r in lg["lineage"]],
            next_id=lg["next_id"],
            frozen_charge=lg["frozen_charge"],
        )
        arc = doc["archive"]
        q = config.qd
        return LeagueState(
            config=config,
            game=build_game(config),
            league=league,
            table=PayoffTable.from_list(doc["payoffs"]),
            archive=qd.Archive.from_records(arc["dim"], arc["R"], arc["cells"]),
            clock=doc["clock"],
            units=list(doc["units"]),
            bd_windows=[deque((tuple(bd) for bd in w), maxlen=q.bd_window) for w in doc["bd_windows"]],
            sat_history=[deque(h, maxlen=q.window) for h in doc["sat_history"]],
            counters=dict(doc["counters"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {type(exc).__name__}: {exc}") from exc


def dumps(state: LeagueState) -> str:
    # repr-exact floats and sorted keys make the bytes a function of the state alone
    return json.dumps(state_to_dict(state), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def loads(text: str) -> LeagueState:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[:exc.pos].encode("utf-8"))
        raise CheckpointError(f"corrupt checkpoint at byte offset {offset}: {exc.msg}") from exc
    return state_from_dict(doc)


def save_checkpoint(state: LeagueState, path) -> str:
    """Write atomically (temp file + rename); returns the sha256 digest of the bytes written."""
    path = Path(path)
    data = dumps(state).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path) -> LeagueState:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint at byte offset {exc.start}: invalid UTF-8") from exc
    return loads(text)


def digest(state: LeagueState) -> str:
    return hashlib.sha256(dumps(state).encode("utf-8")).hexdigest()
