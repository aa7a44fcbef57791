"""Static computation graphs with reverse-mode differentiation.

A :class:`Graph` is an append-only list of nodes, so storage order is a
topological order. Evaluation binds a :class:`ParamStore` and named input
arrays; :func:`backward` walks the recorded trace in reverse.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ContractError, NumericalError, ShapeError
from .ops import OPS
from .params import ParamStore


@dataclass(frozen=True)
class Node:
    kind: str
    inputs: tuple[int, ...] = ()
    params: tuple[str, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)


class Graph:
    def __init__(self):
        self.nodes: list[Node] = []
        self.input_ids: dict[str, int] = {}
        self.outputs: dict[str, int] = {}
        self._needs_grad: list[bool] | None = None

    def input(self, name: str, shape: tuple) -> int:
        """Declare a named input. ``None`` entries in ``shape`` match any size."""
        if name in self.input_ids:
            raise ContractError(f"duplicate input {name!r}")
        nid = self._append(Node("input", (), (), {"name": name, "shape": tuple(shape)}))
        self.input_ids[name] = nid
        return nid

    def add(self, kind: str, *inputs: int, params: tuple[str, ...] = (), **attrs) -> int:
        if kind not in OPS:
            raise ContractError(f"unknown node kind {kind!r}")
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise ContractError(f"node input {i} does not exist yet")
        return self._append(Node(kind, tuple(inputs), tuple(params), dict(attrs)))

    def set_output(self, name: str, node: int) -> None:
        self.outputs[name] = node

    def param_names(self) -> list[str]:
        seen: dict[str, None] = {}
        for node in self.nodes:
            for p in node.params:
                seen.setdefault(p)
        return list(seen)

    def resolve(self, node: int | str) -> int:
        if isinstance(node, str):
            if node in self.outputs:
                return self.outputs[node]
            raise ContractError(f"no output named {node!r}")
        return int(node)

    def _append(self, node: Node) -> int:
        self.nodes.append(node)
        self._needs_grad = None
        return len(self.nodes) - 1

    def needs_grad(self) -> list[bool]:
        if self._needs_grad is None:
            flags = []
            for node in self.nodes:
                flags.append(bool(node.params) or any(flags[i] for i in node.inputs))
            self._needs_grad = flags
        return self._needs_grad


class _Context:
    __slots__ = ("_rng", "node", "seed", "training")

    def __init__(self, training: bool, seed: int, node: int):
        self.training = training
        self.seed = seed
        self.node = node
        self._rng = None

    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng([self.seed, self.node])
        return self._rng


@dataclass
class Trace:
    """Activations and backward caches from one forward evaluation."""

    graph: Graph
    values: list
    caches: list

    def __getitem__(self, node: int | str) -> np.ndarray:
        return self.values[self.graph.resolve(node)]


def _check_input(graph: Graph, nid: int, node: Node, arr) -> np.ndarray:
    name = node.attrs["name"]
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        arr = arr.astype(np.float64, copy=False)
    shape = node.attrs["shape"]
    if arr.ndim != len(shape) or any(s is not None and s != a for s, a in zip(shape, arr.shape)):
        raise ShapeError(f"input {name!r} has shape {arr.shape}, expected {shape}", nid, "input")
    return arr


def run(graph: Graph, params: ParamStore, inputs: Mapping[str, Any], training: bool = False,
        rng_seed: int = 0) -> Trace:
    """Evaluate every node and keep what backward needs."""
    missing = [n for n in graph.input_ids if n not in inputs]
    if missing:
        raise ContractError(f"missing graph inputs: {missing}")
    values: list = [None] * len(graph.nodes)
    caches: list = [None] * len(graph.nodes)
    for nid, node in enumerate(graph.nodes):
        if node.kind == "input":
            values[nid] = _check_input(graph, nid, node, inputs[node.attrs["name"]])
            continue
        try:
            ps = [params.params[p] for p in node.params]
        except KeyError as exc:
            raise ContractError(f"node {nid} ({node.kind}): parameter {exc.args[0]!r} not in store") from None
        xs = [values[i] for i in node.inputs]
        ctx = _Context(training, rng_seed, nid)
        try:
            out, cache = OPS[node.kind].forward(xs, ps, node.attrs, ctx)
        except ShapeError as exc:
            if exc.node is not None:
                raise
            raise ShapeError(str(exc), nid, node.kind) from None
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite value in output", nid, node.kind)
        values[nid] = out
        caches[nid] = cache
    return Trace(graph, values, caches)


def forward(graph: Graph, params: ParamStore, inputs: Mapping[str, Any], training: bool = False,
            rng_seed: int = 0) -> dict[str, np.ndarray]:
    trace = run(graph, params, inputs, training, rng_seed)
    return {name: trace.values[nid] for name, nid in graph.outputs.items()}


def backward(graph: Graph, params: ParamStore, inputs: Mapping[str, Any] | Trace, loss_node: int | str,
             training: bool = False, rng_seed: int = 0) -> dict[str, np.ndarray]:
    """Gradients of a scalar node with respect to every parameter in ``params``.

    ``inputs`` may be a :class:`Trace` from :func:`run`; otherwise the forward
    pass is evaluated here with the given ``training``/``rng_seed``.
    """
    trace = inputs if isinstance(inputs, Trace) else run(graph, params, inputs, training, rng_seed)
    loss = graph.resolve(loss_node)
    if np.ndim(trace.values[loss]) != 0:
        raise ContractError(f"loss node {loss} is not scalar: shape {np.shape(trace.values[loss])}")
    grads = {name: np.zeros_like(p) for name, p in params.params.items()}
    needs = graph.needs_grad()
    adj: list = [None] * len(graph.nodes)
    adj[loss] = np.array(1.0)
    for nid in range(loss, -1, -1):
        d = adj[nid]
        node = graph.nodes[nid]
        if d is None or node.kind == "input" or not needs[nid]:
            continue
        want = [needs[i] for i in node.inputs]
        dxs, dps = OPS[node.kind].backward(d, trace.caches[nid], want)
        for name, g in zip(node.params, dps):
            grads[name] += g
        for i, dx in zip(node.inputs, dxs):
            if dx is None or not needs[i]:
                continue
            adj[i] = dx if adj[i] is None else adj[i] + dx
        adj[nid] = None
    return grads


def gradient_check(graph: Graph, params: ParamStore, inputs: Mapping[str, Any], perturbation: float = 1e-5,
                   loss_node: int | str = "loss", max_entries: int | None = None, seed: int = 0,
                   names: Sequence[str] | None = None) -> float:
    """Largest relative error between backward() and central differences.

    Dropout is disabled. ``max_entries`` caps the number of coordinates
    probed per parameter tensor (sampled with ``seed``); ``None`` probes all.
    ``names`` restricts the check to some parameters.
    """
    loss = graph.resolve(loss_node)
    grads = backward(graph, params, inputs, loss, training=False)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.params.items():
        if names is not None and name not in names:
            continue
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        g = grads[name].reshape(-1)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + perturbation
            up = float(run(graph, params, inputs).values[loss])
            flat[j] = orig - perturbation
            down = float(run(graph, params, inputs).values[loss])
            flat[j] = orig
            num = (up - down) / (2.0 * perturbation)
            ana = g[j]
            err = abs(num - ana) / max(abs(num), abs(ana), 1e-8)
            worst = max(worst, err)
    return worst
