"""Directed interconnection topology and its control matrices.

A topology is a directed graph over agents 1..n plus a set of reference
agents.  Three matrices drive the cooperative controller:

* incidence (n x L): column e has +1 at the head agent and -1 at the tail
  agent of edge e.  Its transpose maps stacked agent outputs to per-edge
  differences head - tail.
* consensus actuation (n x L): column e has -1 at the tail agent only.  Only
  the tail of an edge steers to close that edge's error, so information flows
  head -> tail.
* reference injection (n x 1): 1 at each reference agent.

`kron_expand` lifts the stacked [incidence | reference] and
[consensus | reference] blocks to m coordinates per agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NetworkTopology:
    """Validated directed topology with its derived control matrices."""

    n_agents: int
    edges: tuple[tuple[int, int], ...]      # (head, tail), 1-based agent ids
    reference_agents: tuple[int, ...]
    incidence: np.ndarray
    consensus: np.ndarray
    reference: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_topology(n_agents: int, edges, reference_agents) -> NetworkTopology:
    """Construct and validate the topology matrices.

    Edges are (head, tail) pairs of 1-based agent ids; the tail follows the
    head.  Reference agents receive the external reference injection.
    """
    if n_agents < 1:
        raise ValueError("topology needs at least one agent")
    edge_list: list[tuple[int, int]] = []
    seen: set[frozenset[int]] = set()
    for k, edge in enumerate(edges):
        head, tail = (int(edge[0]), int(edge[1]))
        if head == tail:
            raise ValueError(f"edge {k} is a self-loop on agent {head}")
        for agent in (head, tail):
            if not 1 <= agent <= n_agents:
                raise ValueError(f"edge {k} references agent {agent}, "
                                 f"valid ids are 1..{n_agents}")
        key = frozenset((head, tail))
        if key in seen:
            raise ValueError(f"edge {k} duplicates the pair {head}-{tail}")
        seen.add(key)
        edge_list.append((head, tail))

    refs = tuple(sorted({int(r) for r in reference_agents}))
    if not refs:
        raise ValueError("at least one reference agent is required")
    for agent in refs:
        if not 1 <= agent <= n_agents:
            raise ValueError(f"reference agent {agent} out of range 1..{n_agents}")

    n_edges = len(edge_list)
    incidence = np.zeros((n_agents, n_edges))
    consensus = np.zeros((n_agents, n_edges))
    for col, (head, tail) in enumerate(edge_list):
        incidence[head - 1, col] = 1.0
        incidence[tail - 1, col] = -1.0
        consensus[tail - 1, col] = -1.0
    reference = np.zeros((n_agents, 1))
    for agent in refs:
        reference[agent - 1, 0] = 1.0

    return NetworkTopology(n_agents=n_agents, edges=tuple(edge_list),
                           reference_agents=refs, incidence=incidence,
                           consensus=consensus, reference=reference)


def laplacian(topology: NetworkTopology) -> np.ndarray:
    """Graph Laplacian of the underlying undirected graph."""
    q = topology.incidence
    return q @ q.T


def kron_expand(topology: NetworkTopology, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Lift the stacked topology blocks to m coordinates per agent.

    Returns (sensing, actuation): sensing = [incidence | reference] (x) I_m,
    actuation = [consensus | reference] (x) I_m.  The transpose of `sensing`
    maps the stacked n*m agent vector to per-edge differences followed by the
    reference-agent rows; `actuation` maps gained errors back to agents.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    eye = np.eye(m)
    sensing = np.kron(np.hstack([topology.incidence, topology.reference]), eye)
    actuation = np.kron(np.hstack([topology.consensus, topology.reference]), eye)
    return sensing, actuation
