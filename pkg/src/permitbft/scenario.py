"""Scenario files: TOML documents validated against ``scenario.schema.json``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import adversary as adv
from .messages import OutputRef, Transaction, TxOutput
from .node import BROADCAST, TimerConfig
from .simnet import Partition, SynchronyPhase, TxInjection


class ParseError(ValueError):
    """Malformed scenario document; the message names the line or field."""


class ConstraintError(ValueError):
    """Well-formed scenario whose parameters cannot work (e.g. n < 3f + 1)."""


@dataclass(frozen=True)
class Checks:
    safety: bool = True
    liveness: bool = False
    latency: bool = False
    msg_complexity: bool = False


@dataclass(frozen=True, eq=False)
class Scenario:
    n: int
    f: int
    timers: TimerConfig = TimerConfig()
    phases: tuple = ()
    partitions: tuple = ()
    byzantine: dict = field(default_factory=dict)  # NodeId -> strategy
    tx_schedule: tuple = ()
    horizon: int = 60_000
    seed: int = 0
    checks: Checks = Checks()
    mints: tuple = ()  # genesis mint transactions
    delay_mode: str = "uniform"
    name: str = ""
    tx_names: dict = field(default_factory=dict)  # name -> tx_id

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)


def schema() -> dict:
    text = resources.files("permitbft").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def validate(sc: Scenario) -> Scenario:
    if sc.n < 3 * sc.f + 1:
        raise ConstraintError(f"n={sc.n} is below 3f+1 for f={sc.f}")
    if len(sc.byzantine) > sc.f:
        raise ConstraintError(f"{len(sc.byzantine)} byzantine nodes exceed f={sc.f}")
    for node in sc.byzantine:
        if not 0 <= node < sc.n:
            raise ConstraintError(f"byzantine node {node} outside [0, {sc.n})")
    for inj in sc.tx_schedule:
        if not 0 <= inj.target < sc.n:
            raise ConstraintError(f"tx target {inj.target} outside [0, {sc.n})")
    if sc.checks.liveness and not sc.timers.satisfies_timing_bounds():
        t = sc.timers
        raise ConstraintError(
            f"timers violate 2Δ < creator < 3Δ, 5Δ < round: Δ={t.delta}, "
            f"creator={t.creator_timeout}, round={t.round_timeout}")
    return sc


def make_mints(spec) -> tuple:
    """One genesis mint per ``(owner, amount)``; the nonce keeps ids distinct."""
    return tuple(Transaction(frozenset(), (TxOutput(owner, amount),), nonce=i)
                 for i, (owner, amount) in enumerate(spec))


def _strategy(entry: dict, where: str):
    kind = entry["strategy"]
    if kind == "silent":
        return adv.Silent()
    if kind == "crash_at":
        if "round" not in entry:
            raise ParseError(f"{where}.round: required for crash_at")
        return adv.CrashAt(entry["round"])
    if kind == "equivocate":
        return adv.EquivocateBlocks(entry.get("k", 2), entry.get("abstain", True))
    if kind == "withhold":
        return adv.WithholdFrom(frozenset(entry.get("targets", ())))
    if kind == "stale_permit":
        return adv.StalePermit(entry.get("lag", 1))
    if kind == "spam_timeouts":
        return adv.SpamTimeouts(entry.get("ahead", 2))
    steps = tuple(adv.ScriptStep(s["time"], s["kind"], s["round"], s.get("to", BROADCAST),
                                 s.get("position", "current")) for s in entry.get("steps", ()))
    return adv.Custom(steps)


def scenario_from_dict(doc: dict) -> Scenario:
    """Build and validate a scenario from a parsed document."""
    errors = sorted(jsonschema.Draft202012Validator(schema()).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ParseError(f"field {path}: {err.message}")
    timers = TimerConfig(**doc.get("timers", {}))
    phases = tuple(SynchronyPhase(p["start"], p.get("end"), p["mode"]) for p in doc.get("phases", ()))
    partitions = tuple(Partition(p["start"], p["end"], tuple(frozenset(g) for g in p["groups"]))
                       for p in doc.get("partitions", ()))
    byz = {}
    for i, entry in enumerate(doc.get("byzantine", ())):
        if entry["node"] in byz:
            raise ParseError(f"field byzantine.{i}.node: node {entry['node']} listed twice")
        byz[entry["node"]] = _strategy(entry, f"byzantine.{i}")
    mints = make_mints((m["owner"], m["amount"]) for m in doc.get("mints", ()))

    named: dict = {}
    schedule = []
    last_time = -1
    for i, t in enumerate(doc.get("txs", ())):
        refs = set()
        for j, inp in enumerate(t["inputs"]):
            where = f"field txs.{i}.inputs.{j}"
            if ("mint" in inp) == ("tx" in inp):
                raise ParseError(f"{where}: give exactly one of 'mint' or 'tx'")
            if "mint" in inp:
                if inp["mint"] >= len(mints):
                    raise ConstraintError(f"{where}: no genesis mint {inp['mint']}")
                src = mints[inp["mint"]]
            else:
                if inp["tx"] not in named:
                    raise ConstraintError(f"{where}: tx {inp['tx']!r} is not scheduled earlier")
                src = named[inp["tx"]]
            index = inp.get("index", 0)
            if index >= len(src.outputs):
                raise ConstraintError(f"{where}: output index {index} out of range")
            refs.add(OutputRef(src.tx_id, index))
        tx = Transaction(frozenset(refs), tuple(TxOutput(o["owner"], o["amount"])
                                                for o in t["outputs"]))
        if t["time"] < last_time:
            raise ConstraintError(f"field txs.{i}.time: schedule must be in time order")
        last_time = t["time"]
        if "name" in t:
            named[t["name"]] = tx
        schedule.append(TxInjection(t["time"], t["target"], tx))

    sc = Scenario(
        n=doc["n"], f=doc["f"], timers=timers, phases=phases, partitions=partitions,
        byzantine=byz, tx_schedule=tuple(schedule), horizon=doc.get("horizon", 60_000),
        seed=doc.get("seed", 0), checks=Checks(**doc.get("checks", {})), mints=mints,
        delay_mode=doc.get("delay_mode", "uniform"), name=doc.get("name", ""),
        tx_names={k: v.tx_id for k, v in named.items()},
    )
    return validate(sc)


def loads(text: str) -> Scenario:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(str(exc)) from None
    return scenario_from_dict(doc)


def load_scenario(path: str | Path) -> Scenario:
    return loads(Path(path).read_text())


def scenario_digest(path_or_text: str | Path) -> str:
    data = Path(path_or_text).read_bytes() if isinstance(path_or_text, Path) else path_or_text.encode()
    return hashlib.sha256(data).hexdigest()[:16]
