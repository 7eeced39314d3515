"""Hotel workload: population setup and seeded request generation."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Protocol

from ..compiler import compile_files, program_path
from ..frontend.diagnostics import CompileError
from ..ir import DataflowIR
from ..values import EntityRef

DEFAULT_MIX = {"search": 0.60, "recommend": 0.39, "login": 0.005, "reserve": 0.005}
ENDPOINTS = ("search", "recommend", "login", "reserve")
CELL_SIZE = 20  # map units per cell side; cells are laid out in a row


class Invoker(Protocol):
    def client_invoke(self, cls: str, key: Any, method: str, args: list, timeout: float | None = ...) -> Any: ...


@dataclass
class WorkloadSpec:
    mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    rate: float = 100.0  # requests per second; 0 means as fast as the window allows
    duration: float = 10.0  # seconds
    seed: int = 0
    hotels: int = 100
    users: int = 500
    cells: int = 10
    requests: int | None = None  # overrides rate * duration when set

    def __post_init__(self) -> None:
        unknown = set(self.mix) - set(ENDPOINTS)
        if unknown:
            raise ValueError(f"unknown endpoints in mix: {sorted(unknown)}")
        total = sum(self.mix.values())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"endpoint probabilities sum to {total}, not 1")
        if self.rate < 0:
            raise ValueError("rate must be positive")
        if self.hotels < 5 * self.cells:
            raise ValueError("need at least 5 hotels per cell")

    @property
    def total_requests(self) -> int:
        if self.requests is not None:
            return self.requests
        return int(round(self.rate * self.duration))


def parse_mix(text: str) -> dict[str, float]:
    """``search=0.6,recommend=0.4`` → dict."""
    out: dict[str, float] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, value = part.partition("=")
        out[name.strip()] = float(value)
    return out


def hotel_ir() -> DataflowIR:
    result = compile_files([program_path("hotel")])
    if not result.ok:
        raise CompileError(result.diagnostics)
    return result.ir


@dataclass
class Population:
    geo: list[EntityRef]
    rate: list[EntityRef]
    profile: list[EntityRef]
    hotels: list[EntityRef]
    users: list[str]


def populate(client: Invoker, spec: WorkloadSpec) -> Population:
    """Create hotels, per-cell services and users; deterministic in ``spec.seed``."""
    rng = random.Random(spec.seed * 7919 + 1)
    hotels: list[EntityRef] = []
    by_cell: list[list[EntityRef]] = [[] for _ in range(spec.cells)]
    for i in range(spec.hotels):
        cell = i % spec.cells
        lat = cell * CELL_SIZE + rng.randrange(CELL_SIZE)
        lon = rng.randrange(CELL_SIZE)
        ref = client.client_invoke(
            "Hotel", f"h{i}", "__init__", [f"h{i}", f"Hotel {i}", lat, lon, 50 + rng.randrange(250), 10**9]
        )
        hotels.append(ref)
        by_cell[cell].append(ref)
    geo, rate, profile = [], [], []
    for c in range(spec.cells):
        geo.append(client.client_invoke("Geo", f"g{c}", "__init__", [f"g{c}", by_cell[c]]))
        rate.append(client.client_invoke("Rate", f"r{c}", "__init__", [f"r{c}", rng.randrange(20)]))
        ratings = [1 + rng.randrange(5) for _ in by_cell[c]]
        profile.append(client.client_invoke("Profile", f"p{c}", "__init__", [f"p{c}", by_cell[c], ratings]))
    users = [f"u{i}" for i in range(spec.users)]
    for u in users:
        client.client_invoke("User", u, "__init__", [u, f"pw-{u}"])
    return Population(geo, rate, profile, hotels, users)


@dataclass(frozen=True)
class Request:
    index: int
    at: float  # seconds after start
    endpoint: str
    key: str
    args: tuple


def generate_requests(spec: WorkloadSpec, pop: Population) -> list[Request]:
    """The request sequence: a pure function of the spec and population."""
    rng = random.Random(spec.seed)
    names = list(spec.mix)
    weights = [spec.mix[n] for n in names]
    n = spec.total_requests
    out: list[Request] = []
    for i in range(n):
        endpoint = rng.choices(names, weights)[0]
        user = rng.choice(pop.users)
        cell = rng.randrange(len(pop.geo))
        lat = cell * CELL_SIZE + rng.randrange(CELL_SIZE)
        lon = rng.randrange(CELL_SIZE)
        in_date = rng.randrange(1, 30)
        out_date = in_date + rng.randint(1, 3)
        if endpoint == "search":
            args = (pop.geo[cell], pop.rate[cell], pop.profile[cell], lat, lon, in_date, out_date)
        elif endpoint == "recommend":
            args = (pop.geo[cell], pop.profile[cell], lat, lon, rng.choice(["price", "rate"]))
        elif endpoint == "login":
            args = (f"pw-{user}" if rng.random() < 0.9 else "wrong",)
        else:
            args = (rng.choice(pop.hotels), in_date, out_date, 1)
        at = i / spec.rate if spec.rate > 0 else 0.0
        out.append(Request(i, at, endpoint, user, args))
    return out
