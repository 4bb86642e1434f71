"""Synthetic floorplans and dataflows for experiments and tests."""
from __future__ import annotations

import numpy as np

from .runtime import DataflowGraph, Edge, Node


def _tile_slots(rows, cols, rng=None):
    slots = [(x, y) for y in range(rows) for x in range(cols)]
    if rng is not None:
        rng.shuffle(slots)
    return slots


def floorplan(accels: list[dict], rows: int, cols: int, rng=None, **soc) -> dict:
    """SoC dict with one processor, one memory tile and ``accels`` placed on
    the remaining grid cells (shuffled by ``rng`` when given)."""
    slots = _tile_slots(rows, cols, rng)
    if len(accels) + 2 > len(slots):
        raise ValueError(f"{len(accels)} accelerators do not fit a {cols}x{rows} mesh")
    tiles = [{"coord": list(slots[0]), "kind": "processor", "name": "cpu0"},
             {"coord": list(slots[1]), "kind": "memory", "name": "mem"}]
    for a, c in zip(accels, slots[2:]):
        tiles.append({"coord": list(c), "kind": "accelerator", **a})
    return {"mesh_rows": rows, "mesh_cols": cols, "tiles": tiles, **soc}


def chain(n_stages: int, cycles, words: int = 1024, mode: str = "DMA", instances=None,
          rows: int = 3, cols: int = 3, **soc):
    """Linear chain of identity kernels with per-stage compute ``cycles``.

    Returns ``(soc_dict, graph)``. ``instances`` optionally replicates stages.
    """
    if isinstance(cycles, int):
        cycles = [cycles] * n_stages
    instances = instances or [1] * n_stages
    accels, nodes = [], []
    for i in range(n_stages):
        name = f"s{i}"
        for k in range(instances[i]):
            dev = name if instances[i] == 1 else f"{name}.{k}"
            accels.append({"name": dev, "accel_kind": "identity",
                           "accel_params": {"words": words, "cycles": cycles[i]}})
        nodes.append(Node(name, "identity", {}, instances[i]))
    edges = [Edge(f"s{i}", f"s{i + 1}", mode) for i in range(n_stages - 1)]
    g = DataflowGraph(nodes, edges, {"input": {"generator": "random_words"}}, f"chain{n_stages}")
    return floorplan(accels, rows, cols, **soc), g


def random_dataflow(rng: np.random.Generator, max_nodes: int = 8, max_mesh: int = 4,
                    max_words: int = 24):
    """A random valid dataflow of ``scramble`` kernels and a floorplan to host it.

    Nodes are numbered in topological order; every node picks up to three
    predecessors, and all inputs of a node share one edge mode. Spare tiles
    go to replicated instances while p2p fan-in stays within four source
    tiles. Returns ``(soc_dict, graph)``.
    """
    rows = int(rng.integers(2, max_mesh + 1))
    cols = int(rng.integers(2, max_mesh + 1))
    n = int(rng.integers(1, min(max_nodes, rows * cols - 2) + 1))
    out_words = [int(rng.integers(1, max_words + 1)) for _ in range(n)]
    input_words = int(rng.integers(1, max_words + 1))
    preds: list[list[int]] = []
    for i in range(n):
        k = int(rng.integers(0, min(i, 3) + 1)) if i else 0
        preds.append(sorted(rng.choice(i, size=k, replace=False).tolist()) if k else [])
    modes = ["P2P" if rng.random() < 0.5 else "DMA" for _ in range(n)]
    inst = [1] * n
    spare = rows * cols - 2 - n
    for i in rng.permutation(n):
        if spare and rng.random() < 0.3:
            inst[i] = 2
            fan_in = [sum(inst[p] for p in preds[j]) for j in range(n)
                      if modes[j] == "P2P" and i in preds[j]]
            if any(f > 4 for f in fan_in):
                inst[i] = 1
            else:
                spare -= 1
    accels, nodes, edges = [], [], []
    for i in range(n):
        in_words = sum(out_words[p] for p in preds[i]) if preds[i] else input_words
        for p in preds[i]:
            edges.append(Edge(f"n{p}", f"n{i}", modes[i]))
        params = {"in_words": in_words, "out_words": out_words[i],
                  "salt": int(rng.integers(1, 1 << 16))}
        for k in range(inst[i]):
            dev = f"n{i}" if inst[i] == 1 else f"n{i}.{k}"
            accels.append({"name": dev, "accel_kind": "scramble",
                           "accel_params": {**params, "cycles": int(rng.integers(1, 64))}})
        nodes.append(Node(f"n{i}", "scramble", {}, inst[i]))
    g = DataflowGraph(nodes, edges, {"input": {"generator": "random_words"}}, "random")
    return floorplan(accels, rows, cols, rng=rng), g
