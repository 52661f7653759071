"""Scripted multi-site editing sessions and their file format.

A scenario names an engine, a shared base document, the participating
sites, a per-site ordered list of user actions (insert, delete, barrier),
optional per-site digit sources for the identifier-based engine, and a
delivery policy.  Scenario files are plain JSON with exactly these fields.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import SiteId
from .logoot import DEFAULT_BASE, LogootId, RngScript

ENGINES = (
    "ot-seq",
    "ot-arbitrary",
    "woot",
    "logoot-strict",
    "logoot-patched",
    "serialization",
)

SEQUENCED_ENGINES = ("ot-seq", "serialization")


class ScenarioInvalid(Exception):
    """The scenario file cannot describe a runnable session."""


class TooLarge(Exception):
    """Exhaustive enumeration was requested beyond the configured cap."""


@dataclass(frozen=True)
class Action:
    kind: str  # "insert" | "delete" | "barrier"
    pos: int = 0
    text: str = ""
    count: int = 1

    def to_json(self) -> dict:
        if self.kind == "insert":
            return {"op": "insert", "pos": self.pos, "text": self.text}
        if self.kind == "delete":
            return {"op": "delete", "pos": self.pos, "count": self.count}
        return {"op": "barrier", "count": self.count}

    @classmethod
    def from_json(cls, data: dict) -> "Action":
        op = data["op"]
        if op == "insert":
            return cls("insert", pos=data["pos"], text=data["text"])
        if op == "delete":
            return cls("delete", pos=data["pos"], count=data.get("count", 1))
        if op == "barrier":
            return cls("barrier", count=data["count"])
        raise ScenarioInvalid(f"unknown action {op!r}")


@dataclass
class DeliverySpec:
    mode: str = "seeded"  # "enumerate" | "seeded" | "explicit"
    seed: int = 0
    schedule: list | None = None
    causal: bool = True  # False: identifier-engine preconditions only

    def to_json(self) -> dict:
        out = {"mode": self.mode, "seed": self.seed, "causal": self.causal}
        if self.schedule is not None:
            out["schedule"] = self.schedule
        return out

    @classmethod
    def from_json(cls, data: dict) -> "DeliverySpec":
        return cls(
            mode=data.get("mode", "seeded"),
            seed=data.get("seed", 0),
            schedule=data.get("schedule"),
            causal=data.get("causal", True),
        )


@dataclass
class LogootSpec:
    base: int = DEFAULT_BASE
    init_ids: list[LogootId] | None = None
    init_counters: dict[SiteId, int] = field(default_factory=dict)

    def to_json(self) -> dict:
        out: dict = {"base": self.base}
        if self.init_ids is not None:
            out["init_ids"] = [i.to_json() for i in self.init_ids]
        if self.init_counters:
            out["init_counters"] = {str(s): c for s, c in self.init_counters.items()}
        return out

    @classmethod
    def from_json(cls, data: dict) -> "LogootSpec":
        ids = data.get("init_ids")
        return cls(
            base=data.get("base", DEFAULT_BASE),
            init_ids=[LogootId.from_json(i) for i in ids] if ids is not None else None,
            init_counters={int(s): c for s, c in data.get("init_counters", {}).items()},
        )


@dataclass
class Scenario:
    engine: str
    base_doc: str = ""
    sites: list[SiteId] = field(default_factory=list)
    script: dict[SiteId, list[Action]] = field(default_factory=dict)
    rng: dict[SiteId, RngScript] = field(default_factory=dict)
    delivery: DeliverySpec = field(default_factory=DeliverySpec)
    logoot: LogootSpec = field(default_factory=LogootSpec)
    cap: int = 8
    name: str = ""

    def with_engine(self, engine: str) -> "Scenario":
        out = Scenario(
            engine=engine,
            base_doc=self.base_doc,
            sites=list(self.sites),
            script={s: list(a) for s, a in self.script.items()},
            rng={s: r.clone() for s, r in self.rng.items()},
            delivery=DeliverySpec(**vars(self.delivery)),
            logoot=self.logoot,
            cap=self.cap,
            name=self.name,
        )
        return out

    def total_ops(self) -> int:
        total = 0
        for actions in self.script.values():
            for a in actions:
                if a.kind == "insert":
                    total += len(a.text)
                elif a.kind == "delete":
                    total += a.count
        return total

    def has_barriers(self) -> bool:
        return any(a.kind == "barrier" for acts in self.script.values() for a in acts)

    def insert_runs(self) -> list[tuple[SiteId, int, str]]:
        """(site, action index, text) for every multi-character insert."""
        runs = []
        for site, actions in self.script.items():
            for idx, a in enumerate(actions):
                if a.kind == "insert" and len(a.text) > 1:
                    runs.append((site, idx, a.text))
        return runs

    def validate(self) -> None:
        if self.engine not in ENGINES:
            raise ScenarioInvalid(f"unknown engine {self.engine!r}")
        if not self.sites:
            raise ScenarioInvalid("a scenario needs at least one site")
        if len(set(self.sites)) != len(self.sites):
            raise ScenarioInvalid("site ids must be unique")
        if any(s <= 0 for s in self.sites):
            raise ScenarioInvalid("site ids must be positive")
        for site in self.script:
            if site not in self.sites:
                raise ScenarioInvalid(f"script for unknown site {site}")
        if not self.has_barriers():
            # local validity of positions is schedule-independent here
            for site, actions in self.script.items():
                length = len(self.base_doc)
                for a in actions:
                    if a.kind == "insert":
                        if not 0 <= a.pos <= length:
                            raise ScenarioInvalid(f"site {site}: insert at {a.pos} of doc length {length}")
                        length += len(a.text)
                    elif a.kind == "delete":
                        for _ in range(a.count):
                            if length <= 0 or not 0 <= a.pos < length:
                                raise ScenarioInvalid(f"site {site}: delete at {a.pos} of doc length {length}")
                            length -= 1

    def to_json(self) -> dict:
        out = {
            "engine": self.engine,
            "base_doc": self.base_doc,
            "sites": list(self.sites),
            "script": {str(s): [a.to_json() for a in acts] for s, acts in self.script.items()},
            "delivery": self.delivery.to_json(),
            "cap": self.cap,
        }
        if self.name:
            out["name"] = self.name
        if self.rng:
            out["rng"] = {
                str(s): (
                    {"mode": "scripted", "script": list(r.script)}
                    if r.mode == "scripted"
                    else {"mode": "seeded", "seed": r.seed}
                )
                for s, r in self.rng.items()
            }
        if self.engine.startswith("logoot"):
            out["logoot"] = self.logoot.to_json()
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        rng = {}
        for s, spec in data.get("rng", {}).items():
            mode = spec.get("mode", "seeded")
            if mode in ("scripted",):
                rng[int(s)] = RngScript("scripted", list(spec.get("script", [])))
            elif mode in ("seeded", "seeded-uniform"):
                rng[int(s)] = RngScript("seeded", seed=spec.get("seed", 0))
            else:
                raise ScenarioInvalid(f"unknown rng mode {mode!r}")
        scenario = cls(
            engine=data["engine"],
            base_doc=data.get("base_doc", ""),
            sites=[int(s) for s in data.get("sites", [])],
            script={
                int(s): [Action.from_json(a) for a in acts]
                for s, acts in data.get("script", {}).items()
            },
            rng=rng,
            delivery=DeliverySpec.from_json(data.get("delivery", {})),
            logoot=LogootSpec.from_json(data.get("logoot", {})),
            cap=data.get("cap", 8),
            name=data.get("name", ""),
        )
        scenario.validate()
        return scenario

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioInvalid(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_json(data)
