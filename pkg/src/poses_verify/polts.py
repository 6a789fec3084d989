"""Payoff / partially-ordered labelled transition systems over tracker states.

A state is a filter estimate; from each state there is one transition per
detection inside the tracker's gate plus one for "no observation".  The
transitions out of a state are ordered by how close their detection lies to
the predicted measurement: to make the tracker take the ``r``-th nearest
detection the adversary has to suppress the ``r`` nearer ones, and the sum of
their payoffs is the combined payoff of that transition.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import numpy as np

from . import estimator as est
from .estimator import FilterState, ModelParams, TrackSet
from .world import Detection, Scenario

DEFAULT_PATH_CAP = 10**6
THREADS_ENV = "POSES_VERIFY_THREADS"


class Explosion(RuntimeError):
    """The unfolding would produce more paths than the configured cap."""


@dataclass(frozen=True, eq=False)
class Transition:
    child_state: FilterState
    chosen: Optional[Detection]
    payoff: float
    combined_payoff: float
    rank: int
    # what the primary filter actually associated; differs from ``chosen``
    # only under joint tracking, where a refining track may claim it
    observed: Optional[Detection] = None
    child_tracks: Optional[TrackSet] = None


@dataclass(eq=False)
class PathNode:
    state: FilterState
    parent: Optional["PathNode"] = None
    incoming: Optional[Transition] = None
    depth: int = 0
    observation: Optional[Detection] = None
    tracks: Optional[TrackSet] = None

    @property
    def label(self) -> str:
        obs = "None" if self.observation is None else str(self.observation.id)
        return f"{self.depth}-{obs}"


@dataclass(eq=False)
class Path:
    nodes: list
    window: tuple  # (l, u)
    is_original: bool = False
    measures: object = None

    @property
    def observations(self) -> list:
        return [n.observation for n in self.nodes]

    @property
    def transitions(self) -> list:
        return [n.incoming for n in self.nodes if n.incoming is not None]

    @property
    def phi(self) -> float:
        return float(sum(t.combined_payoff for t in self.transitions))

    @property
    def mean_payoff(self) -> float:
        l, u = self.window
        return self.phi / max(u - l, 1)

    @property
    def label(self) -> str:
        l, u = self.window
        return ",".join(n.label for n in self.nodes[l:u + 1])

    def sort_key(self) -> tuple:
        ids = tuple(-1 if d is None else d.id for d in self.observations)
        return ids, tuple(t.rank for t in self.transitions)


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            threads = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


# --- tracking -----------------------------------------------------------------


def _advance(node: PathNode, Z: Sequence, params: ModelParams) -> PathNode:
    """Unattacked tracker step from ``node``."""
    if node.tracks is not None:
        tracks = est.joint_track_step(node.tracks, Z, params)
        return PathNode(tracks.primary, node, None, node.depth + 1, tracks.primary_detection, tracks)
    state, det = est.gnn_step(node.state, Z, params)
    return PathNode(state, node, None, node.depth + 1, det)


def track(scenario: Scenario, params: ModelParams, init: FilterState,
          joint: bool = False) -> list:
    """Run the unattacked tracker over the whole scenario; one node per step.

    ``init`` is the estimate at step 0; filtering starts with step 1.
    """
    tracks = est.joint_init(init, scenario.detections[0]) if joint else None
    node = PathNode(init, None, None, 0, None, tracks)
    nodes = [node]
    for k in range(1, scenario.n_steps):
        node = _advance(node, scenario.detections[k], params)
        nodes.append(node)
    return nodes


def _ordered_gate(pred: FilterState, Z: Sequence, params: ModelParams, halted: bool) -> list:
    if halted:
        return []
    innov = est.innovation(pred, params)
    cands = est.gated(Z, pred, innov, params)
    z_pred = innov.z_pred
    return sorted(
        (d for _, d in cands),
        key=lambda d: (float(np.hypot(d.z[0] - z_pred[0], d.z[1] - z_pred[1])), d.id),
    )


def build_transitions(node: PathNode, Z_k: Sequence, params: ModelParams) -> list:
    """All attacked transitions out of ``node`` into the next step.

    Ordered by rank: the nearest gated detection first, the no-observation
    transition (every gated detection suppressed) last.
    """
    halted = est.uncertainty_trace(node.state) > params.trace_halt
    pred = est.predict(node.state, params)
    order = _ordered_gate(pred, Z_k, params, halted)
    joint = node.tracks is not None
    predicted_tracks = est.predict_tracks(node.tracks, params) if joint else None

    out = []
    suppressed = 0.0
    for rank in range(len(order) + 1):
        chosen = order[rank] if rank < len(order) else None
        if joint:
            hidden = {d.id for d in order[:rank]}
            visible = [d for d in Z_k if d.id not in hidden]
            child_tracks = est.joint_step(predicted_tracks, visible, params,
                                          primary_active=not halted)
            child, observed = child_tracks.primary, child_tracks.primary_detection
        else:
            child_tracks = None
            child = pred if chosen is None else est.update(pred, chosen.z, params)[0]
            observed = chosen
        out.append(Transition(
            child_state=child,
            chosen=chosen,
            payoff=0.0 if chosen is None else float(chosen.payoff),
            combined_payoff=suppressed,
            rank=rank,
            observed=observed,
            child_tracks=child_tracks,
        ))
        if chosen is not None:
            suppressed += float(chosen.payoff)
    return out


def _path_from_leaf(leaf: PathNode, window: tuple) -> Path:
    nodes = []
    node = leaf
    while node is not None:
        nodes.append(node)
        node = node.parent
    nodes.reverse()
    is_original = all(t.rank == 0 for t in (n.incoming for n in nodes) if t is not None)
    return Path(nodes, window, is_original)


def unfold(scenario: Scenario, params: ModelParams, init: FilterState, l: int, u: int,
           joint: bool = False, cap: int = DEFAULT_PATH_CAP,
           threads: Optional[int] = None, original: Optional[list] = None) -> list:
    """Enumerate every attacked track for attacks on steps ``l..u``.

    The tree is rooted at the unattacked state at ``l - 1``; after ``u`` each
    branch is continued to the last step with the ordinary tracker.  Paths
    come back sorted by their observation-id sequences; exactly one of them
    has ``is_original`` set.
    """
    e = scenario.end
    if not (0 < l <= u <= e):
        raise ValueError(f"attack window must satisfy 0 < l <= u <= {e}, got ({l}, {u})")
    if original is None:
        original = track(scenario, params, init, joint)

    frontier = [original[l - 1]]
    for k in range(l, u + 1):
        children = []
        for node in frontier:
            for t in build_transitions(node, scenario.detections[k], params):
                children.append(PathNode(t.child_state, node, t, k, t.observed, t.child_tracks))
                if len(children) > cap:
                    raise Explosion(f"more than {cap} paths at step {k}")
        frontier = children

    def finish(leaf: PathNode) -> Path:
        node = leaf
        for k in range(u + 1, e + 1):
            node = _advance(node, scenario.detections[k], params)
        return _path_from_leaf(node, (l, u))

    workers = thread_count(threads)
    if workers == 1 or len(frontier) < 2:
        paths = [finish(leaf) for leaf in frontier]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(finish, frontier))
    paths.sort(key=Path.sort_key)
    return paths


def tree_nodes(paths: Sequence[Path]) -> list:
    """Distinct nodes of the unfolding tree (from the root at ``l - 1``), parents first.

    Returns ``(node, parent_index)`` pairs; the root has parent index ``-1``.
    """
    index: dict[int, int] = {}
    out = []
    for p in paths:
        l, _ = p.window
        for i, node in enumerate(p.nodes[l - 1:]):
            if id(node) in index:
                continue
            parent = -1 if i == 0 else index[id(node.parent)]
            index[id(node)] = len(out)
            out.append((node, parent))
    return out


# --- generic models and the knapsack reduction ---------------------------------


@dataclass
class PoLts:
    """Explicit finite {PO}^2-LTS.

    ``successors[q]`` lists ``(target, payoff)`` pairs sorted by the partial
    order (a linear extension of it): earlier entries precede later ones.
    ``dist[q]`` is the per-step deviation charged on entering ``q``.
    """

    initial: object
    successors: dict
    dist: dict = field(default_factory=dict)

    def combined_payoffs(self, q) -> list:
        out, acc = [], 0.0
        for _, payoff in self.successors.get(q, ()):
            out.append(acc)
            acc += payoff
        return out

    def paths(self):
        """Yield ``(states, phi, dist_total)`` for every maximal path."""
        stack = [((self.initial,), 0.0, 0.0)]
        while stack:
            states, phi, dist = stack.pop()
            q = states[-1]
            succ = self.successors.get(q, ())
            if not succ:
                yield states, phi, dist
                continue
            for (target, _), combined in reversed(list(zip(succ, self.combined_payoffs(q)))):
                stack.append((states + (target,), phi + combined, dist + self.dist.get(target, 0.0)))


@dataclass(frozen=True)
class KnapsackInstance:
    items: tuple  # ((value, weight), ...)
    W: float

    def __post_init__(self):
        for v, g in self.items:
            if not (np.isfinite(v) and np.isfinite(g) and v > 0 and g > 0):
                raise ValueError(f"item values and weights must be finite and positive: {(v, g)}")
        if not self.W >= 0:
            raise ValueError(f"capacity must be non-negative, got {self.W}")


def knapsack_lts(inst: KnapsackInstance):
    """Chain model whose robustness problem solves the covering form of 0-1 knapsack.

    States ``("q", i, 0)`` / ``("q", i, 1)`` mean item ``i`` left out / taken.
    Leaving an item out precedes taking it; its payoff is the item value, so
    taking item ``i`` has combined payoff ``v_i`` and leaving it out costs 0.
    Entering a taken-item state deviates by ``g_i``.  The returned problem is
    to minimise the accumulated combined payoff subject to the accumulated
    deviation exceeding ``W``.
    """
    from .verify import Kind, VerificationProblem

    n = len(inst.items)
    initial = ("q", 0)
    successors: dict = {}
    dist: dict = {}
    sources = [initial]
    for i, (v, g) in enumerate(inst.items, start=1):
        off, on = ("q", i, 0), ("q", i, 1)
        dist[off], dist[on] = 0.0, float(g)
        for q in sources:
            successors[q] = [(off, float(v)), (on, 0.0)]
        sources = [off, on]
    model = PoLts(initial, successors, dist)
    problem = VerificationProblem(Kind.ROBUSTNESS, epsilon=float(inst.W), window=(1, n, n))
    return model, problem


def knapsack_rows(model: PoLts) -> list:
    """Measure rows for every path of a chain model (see :func:`knapsack_lts`)."""
    from .verify import Row, TrackMeasures

    rows = []
    for states, phi, dist in model.paths():
        label = "".join(str(q[2]) for q in states[1:])
        rows.append(Row(label, TrackMeasures(phi=phi, dist_acc=dist, dist_max=0.0, dist_end=0.0)))
    return rows


def knapsack_brute_force(inst: KnapsackInstance) -> Optional[float]:
    """``min sum(v) over subsets with sum(g) > W``, or ``None`` when none exists."""
    best = None
    for mask in product((0, 1), repeat=len(inst.items)):
        weight = sum(g for (v, g), c in zip(inst.items, mask) if c)
        if weight > inst.W:
            value = sum(v for (v, g), c in zip(inst.items, mask) if c)
            if best is None or value < best:
                best = value
    return best


def random_knapsack(rng: np.random.Generator, n: int) -> KnapsackInstance:
    values = rng.integers(1, 20, n).astype(float)
    weights = rng.integers(1, 20, n).astype(float)
    W = float(rng.integers(0, int(weights.sum()) + 2))
    return KnapsackInstance(tuple(zip(values.tolist(), weights.tolist())), W)
