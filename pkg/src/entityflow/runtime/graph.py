"""Execution-graph traversal (paper §2.3).

Visit-log entries and method arguments are kept in their wire encoding:
values are encoded once when a node completes and decoded only when a later
block actually demands them, so forwarding an event never re-walks them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from ..ir import ExecutionGraphInstance
from ..splitter import Branch, FallThrough, InvokeRemote, LoopIterate, Return, SplitBlock, StateMachine
from ..values import decode, encode


class ResolutionError(Exception):
    """A block parameter has no value in the visit log or method arguments."""


@dataclass
class Next:
    node: str
    args: dict[str, Any]


@dataclass
class AwaitCall:
    node: str  # RemoteCall node the machine now waits on


@dataclass
class Completed:
    payload: Any


def new_execution_graph(machine: StateMachine, owner: tuple[str, Any], args: dict[str, Any]) -> tuple[ExecutionGraphInstance, dict]:
    """Start a traversal at the machine's entry; returns the instance and the entry block's args."""
    eg = ExecutionGraphInstance(machine.method, owner, machine.entry, [], {k: encode(v) for k, v in args.items()})
    return eg, resolve_params(eg, machine.block(machine.entry))


def resolve_params(eg: ExecutionGraphInstance, block: SplitBlock) -> dict[str, Any]:
    """Find each parameter by scanning the visit log newest-first, then the method arguments.

    Decoded values are memoized per log entry: values are immutable, so a
    slot read by several blocks is decoded once per process.
    """
    out: dict[str, Any] = {}
    log = eg.visit_log
    memo = eg.memo
    for p in block.param_names:
        if p == "self":
            continue
        for i in range(len(log) - 1, -1, -1):
            stored = log[i][1]
            if p in stored:
                slot = (i, p)
                if slot not in memo:
                    memo[slot] = decode(stored[p])
                out[p] = memo[slot]
                break
        else:
            if p not in eg.args:
                raise ResolutionError(f"cannot resolve parameter {p!r} of block {block.id}")
            slot = (-1, p)
            if slot not in memo:
                memo[slot] = decode(eg.args[p])
            out[p] = memo[slot]
    return out


def advance_execution_graph(
    eg: ExecutionGraphInstance,
    machine: StateMachine,
    completed: str,
    results: dict[str, Any],
    outcome: bool | None = None,
    payload: Any = None,
) -> Next | AwaitCall | Completed:
    """Record ``completed``'s results and move to the next node.

    ``outcome`` is the branch/loop decision for Branch and LoopIterate
    terminators; ``payload`` is the return value for Return terminators.
    """
    if completed != eg.current:
        raise ResolutionError(f"completed node {completed} is not the current node {eg.current}")
    idx = len(eg.visit_log)
    eg.visit_log.append((completed, {k: encode(v) for k, v in results.items()}))
    for k, v in results.items():
        eg.memo[(idx, k)] = v
    block = machine.block(completed)
    if block is None:
        nxt = machine.edge(completed, "return-to")
    else:
        term = block.terminator
        if isinstance(term, Return):
            return Completed(payload)
        if isinstance(term, InvokeRemote):
            eg.current = term.node
            return AwaitCall(term.node)
        if isinstance(term, Branch):
            nxt = machine.edge(completed, "true" if outcome else "false")
        elif isinstance(term, LoopIterate):
            nxt = machine.edge(completed, "iterate" if outcome else "done")
        else:
            assert isinstance(term, FallThrough)
            nxt = term.next
    eg.current = nxt
    return Next(nxt, resolve_params(eg, machine.block(nxt)))


def block_visits(eg: ExecutionGraphInstance, machine: StateMachine) -> int:
    """Number of block (not remote-call) entries in the visit log."""
    return sum(1 for node, _ in eg.visit_log if machine.block(node) is not None)
