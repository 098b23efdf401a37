"""Round-based upload simulation for distributed retrieval galleries.

Each camera keeps its gallery on the edge and uploads along a per-strategy
sequence, `budget` items per round; the cloud merges arrivals in (round,
camera index, sequence position) order. A query's quality of service is the
arrival round of the items that match it (transmission number) and the merged
position of the item closest to the requested target time.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import enum
from typing import Sequence

import numpy as np

from . import strategy as strat
from .errors import ConfigError, DataError, InputError, ShapeError
from .nn import as_f64, softmax
from .scene import Observation, Scene
from .transition import TransitionNet


class Strategy(enum.Enum):
    """Upload sequencing/bandwidth policies.

    centralized: timestamp-order upload, uniform bandwidth (rank in the cloud
        after everything arrives).
    visual: per-camera visual-similarity order, uniform bandwidth.
    bandwidth: visual order plus learned per-camera budgets for the target
        time.
    rerank: joint spatio-temporal/visual order, uniform bandwidth.
    combined: joint order plus learned budgets.
    """

    CENTRALIZED = "centralized"
    VISUAL = "visual"
    BANDWIDTH = "bandwidth"
    RERANK = "rerank"
    COMBINED = "combined"

    @staticmethod
    def parse(name: str) -> "Strategy":
        try:
            return Strategy(name)
        except ValueError:
            valid = ", ".join(s.value for s in Strategy)
            raise ConfigError(f"unknown strategy {name!r}; valid: {valid}") from None


SEQUENCE_STRATEGIES = {Strategy.VISUAL: "visual", Strategy.BANDWIDTH: "visual",
                       Strategy.RERANK: "joint", Strategy.COMBINED: "joint",
                       Strategy.CENTRALIZED: "time"}
LEARNED_BUDGETS = {Strategy.BANDWIDTH, Strategy.COMBINED}


@dataclasses.dataclass(frozen=True)
class InferenceParams:
    """Knobs for scoring and allocation at inference time."""

    alpha: float = 0.1
    beta: float = 0.1
    gamma0: float = 0.01
    gamma1: float = 0.01
    mu: float = 0.5
    orientation: str = "consistent"
    time_targeted: bool = False

    def __post_init__(self):
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise ConfigError("alpha and beta must be positive")
        if self.gamma0 <= 0.0 or self.gamma1 <= 0.0:
            raise ConfigError("gamma0 and gamma1 must be positive")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError(f"mu must be in [0, 1], got {self.mu}")
        if self.orientation not in strat.ORIENTATION_MODES:
            raise ConfigError(
                f"orientation must be one of {strat.ORIENTATION_MODES}")


@dataclasses.dataclass(frozen=True)
class Models:
    """Learned inputs to the strategies; either may be absent."""

    transition: object | None = None
    frequency: strat.FrequencyModel | None = None


class TransitionTable:
    """Eval-mode logits of a TransitionNet memoised over integer tick deltas.

    Exposes the same forward/distribution interface as the network for
    integer timestamps within [dt_min, dt_max]; used to avoid re-running the
    network on repeated (camera, delta) pairs during large benchmarks.
    """

    def __init__(self, model: TransitionNet, dt_min: int, dt_max: int,
                 chunk: int = 16384):
        if dt_max < dt_min:
            raise InputError(f"empty delta range [{dt_min}, {dt_max}]")
        self.config = model.config
        self.dt_min = int(dt_min)
        self.dt_max = int(dt_max)
        c = model.config.num_cameras
        span = self.dt_max - self.dt_min + 1
        self.logits = np.empty((c, span, c))
        deltas = np.arange(self.dt_min, self.dt_max + 1, dtype=np.float64)
        for cam in range(c):
            for start in range(0, span, chunk):
                sl = slice(start, min(start + chunk, span))
                self.logits[cam, sl] = model.forward(
                    np.full(sl.stop - sl.start, cam, dtype=np.int64),
                    np.zeros(sl.stop - sl.start), deltas[sl], train=False)
        self.probs = softmax(self.logits, axis=2)

    def _lookup(self, cameras, t_query, t_target) -> np.ndarray:
        cams = np.atleast_1d(np.asarray(cameras, dtype=np.int64))
        tq = np.atleast_1d(as_f64(t_query))
        td = np.atleast_1d(as_f64(t_target))
        cams, tq, td = np.broadcast_arrays(cams, tq, td)
        deltas = td - tq
        idx = np.rint(deltas).astype(np.int64)
        if np.max(np.abs(deltas - idx)) > 1e-9:
            raise InputError("transition table requires integer tick deltas")
        if idx.min() < self.dt_min or idx.max() > self.dt_max:
            raise InputError(
                f"delta range [{idx.min()}, {idx.max()}] outside the table's "
                f"[{self.dt_min}, {self.dt_max}]")
        return cams.astype(np.int64), idx - self.dt_min

    def forward(self, cameras, t_query, t_target, train: bool = False) -> np.ndarray:
        cams, offsets = self._lookup(cameras, t_query, t_target)
        return self.logits[cams, offsets]

    def distribution(self, cameras, t_query, t_target) -> np.ndarray:
        cams, offsets = self._lookup(cameras, t_query, t_target)
        return self.probs[cams, offsets]


@dataclasses.dataclass(frozen=True)
class Gallery:
    """Flat arrays of the distributed gallery plus per-camera index lists."""

    identities: np.ndarray
    cameras: np.ndarray
    timestamps: np.ndarray
    features: np.ndarray | None
    device_items: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return self.identities.size

    @property
    def num_cameras(self) -> int:
        return len(self.device_items)


def build_gallery(observations: Sequence[Observation], num_cameras: int) -> Gallery:
    if not observations:
        raise DataError("empty gallery")
    identities = np.array([o.identity for o in observations], dtype=np.int64)
    cameras = np.array([o.camera for o in observations], dtype=np.int64)
    timestamps = np.array([o.timestamp for o in observations], dtype=np.int64)
    features = None
    if observations[0].feature is not None:
        if any(o.feature is None for o in observations):
            raise DataError("mixed featured and featureless observations")
        features = np.stack([o.feature for o in observations])
    device_items = tuple(np.flatnonzero(cameras == c) for c in range(num_cameras))
    return Gallery(identities=identities, cameras=cameras, timestamps=timestamps,
                   features=features, device_items=device_items)


@dataclasses.dataclass(frozen=True)
class QueryTask:
    """One retrieval request against the distributed gallery.

    device_items excludes the query's own observation; target_time is the
    tick the requester cares about.
    """

    gallery: Gallery
    query_identity: int
    query_camera: int
    query_time: int
    query_feature: np.ndarray | None
    target_time: int
    device_items: tuple[np.ndarray, ...]


def make_task(gallery: Gallery, query_index: int, target_time: int) -> QueryTask:
    """Build the task for gallery item query_index, excluding it from upload."""
    if not 0 <= query_index < gallery.size:
        raise InputError(f"query index {query_index} outside the gallery")
    cam = int(gallery.cameras[query_index])
    items = list(gallery.device_items)
    items[cam] = items[cam][items[cam] != query_index]
    feature = None if gallery.features is None else gallery.features[query_index]
    return QueryTask(
        gallery=gallery,
        query_identity=int(gallery.identities[query_index]),
        query_camera=cam,
        query_time=int(gallery.timestamps[query_index]),
        query_feature=feature,
        target_time=int(target_time),
        device_items=tuple(items))


@dataclasses.dataclass(frozen=True)
class UploadPlan:
    """Per-camera upload sequences (flat gallery indices) and round budgets."""

    strategy: Strategy
    sequences: tuple[np.ndarray, ...]
    budgets: np.ndarray

    def __post_init__(self):
        if len(self.sequences) != self.budgets.size:
            raise ShapeError("one budget per camera sequence required")
        if np.any(self.budgets < 1):
            raise InputError("every camera needs a budget of at least 1")


@dataclasses.dataclass(frozen=True)
class ArrivalLog:
    """Merged arrival order and per-item round/position lookups.

    order lists flat gallery indices as the cloud receives them; round_of and
    position_of are gallery-sized arrays with -1 where an item was not part
    of the plan (the query's own observation).
    """

    order: np.ndarray
    round_of: np.ndarray
    position_of: np.ndarray


def _visual_scores(task: QueryTask) -> np.ndarray:
    if task.gallery.features is None or task.query_feature is None:
        raise ConfigError("this strategy needs appearance features")
    return task.gallery.features @ task.query_feature


def _st_scores(models: Models, params: InferenceParams, task: QueryTask,
               items: np.ndarray) -> np.ndarray:
    cams = task.gallery.cameras[items]
    ts = task.gallery.timestamps[items]
    model_part = freq_part = None
    if models.transition is not None:
        rows = models.transition.distribution(
            np.full(items.size, task.query_camera, dtype=np.int64),
            np.full(items.size, float(task.query_time)), as_f64(ts))
        model_part = rows[np.arange(items.size), cams]
    if models.frequency is not None:
        freq_part = strat.frequency_scores(
            models.frequency, task.query_camera, task.query_time, cams, ts)
    if model_part is not None and freq_part is not None:
        return strat.fuse_scores(model_part, freq_part, params.mu)
    if model_part is not None:
        return model_part
    if freq_part is not None:
        return freq_part
    raise ConfigError("this strategy needs a transition or frequency model")


def _bank(models: Models, task: QueryTask, items: np.ndarray) -> strat.PatternBank:
    if models.transition is None:
        raise ConfigError("time-targeted scoring needs a transition model")
    rows = models.transition.distribution(
        np.full(items.size, task.query_camera, dtype=np.int64),
        np.full(items.size, float(task.query_time)),
        as_f64(task.gallery.timestamps[items]))
    target = models.transition.distribution(
        task.query_camera, float(task.query_time), float(task.target_time))[0]
    return strat.PatternBank(rows=rows, target=target)


def _order(keys: np.ndarray, items: np.ndarray) -> np.ndarray:
    """items sorted by key ascending, original order on ties."""
    return items[np.lexsort((items, keys))]


def plan(task: QueryTask, strategy: Strategy, total_bandwidth: int,
         params: InferenceParams, models: Models) -> UploadPlan:
    """Build each camera's upload sequence and round budget for a strategy."""
    c = task.gallery.num_cameras
    if total_bandwidth < c:
        raise ConfigError(
            f"total bandwidth {total_bandwidth} cannot give {c} cameras one "
            f"slot each")
    kind = SEQUENCE_STRATEGIES[strategy]
    visual = _visual_scores(task) if kind in ("visual", "joint") else None
    sequences = []
    for device in range(c):
        items = task.device_items[device]
        if kind == "time":
            sequences.append(_order(task.gallery.timestamps[items].astype(np.float64),
                                    items))
        elif kind == "visual":
            sequences.append(_order(-visual[items], items))
        elif items.size == 0:
            sequences.append(items)
        else:
            o = _st_scores(models, params, task, items)
            s = strat.joint_similarity(o, visual[items], params.alpha, params.beta,
                                       params.orientation)
            if params.time_targeted:
                s = strat.time_targeted_scores(s, _bank(models, task, items),
                                               params.orientation)
            sequences.append(_order(s, items))
    if strategy in LEARNED_BUDGETS:
        if models.transition is None:
            raise ConfigError("learned budgets need a transition model")
        logits = models.transition.forward(
            task.query_camera, float(task.query_time), float(task.target_time),
            train=False)[0]
        sizes = np.array([len(s) for s in sequences], dtype=np.float64)
        allocation = strat.allocate_bandwidth(logits, sizes, total_bandwidth,
                                              params.gamma0, params.gamma1)
    else:
        allocation = strat.uniform_allocation(c, total_bandwidth)
    return UploadPlan(strategy=strategy, sequences=tuple(sequences),
                      budgets=allocation.budgets)


def run_rounds(plan_: UploadPlan, gallery_size: int) -> ArrivalLog:
    """Deliver every sequence budget-by-budget and merge the arrivals."""
    items_parts, round_parts, device_parts, pos_parts = [], [], [], []
    for device, seq in enumerate(plan_.sequences):
        if seq.size == 0:
            continue
        pos = np.arange(seq.size, dtype=np.int64)
        items_parts.append(seq)
        round_parts.append(pos // int(plan_.budgets[device]) + 1)
        device_parts.append(np.full(seq.size, device, dtype=np.int64))
        pos_parts.append(pos)
    round_of = np.full(gallery_size, -1, dtype=np.int64)
    position_of = np.full(gallery_size, -1, dtype=np.int64)
    if not items_parts:
        return ArrivalLog(order=np.empty(0, dtype=np.int64),
                          round_of=round_of, position_of=position_of)
    items = np.concatenate(items_parts)
    rounds = np.concatenate(round_parts)
    devices = np.concatenate(device_parts)
    positions = np.concatenate(pos_parts)
    merge = np.lexsort((positions, devices, rounds))
    order = items[merge]
    round_of[items] = rounds
    position_of[order] = np.arange(1, order.size + 1)
    return ArrivalLog(order=order, round_of=round_of, position_of=position_of)


def transmission_number(log: ArrivalLog, item: int) -> int:
    """Arrival round of a gallery item; the requester waits this many rounds."""
    tn = int(log.round_of[item])
    if tn < 0:
        raise InputError(f"item {item} was not delivered by this plan")
    return tn


# -- benchmark ------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class PairRecord:
    """One same-identity cross-camera (query, target) pair outcome."""

    query_index: int
    target_index: int
    device: int
    rank: int
    budget: int
    tn: int


@dataclasses.dataclass(frozen=True)
class QueryRecord:
    """Arrival of the item whose timestamp is closest to the target time."""

    query_index: int
    target_time: int
    desired_index: int
    device: int
    position: int
    round: int


@dataclasses.dataclass
class RunReport:
    """Everything the metrics need about one strategy's benchmark run."""

    strategy: str
    total_bandwidth: int
    num_cameras: int
    gallery_size: int
    num_queries: int
    num_skipped: int
    pairs: list[PairRecord]
    queries: list[QueryRecord]


@dataclasses.dataclass(frozen=True)
class QuerySpec:
    """Which queries to run: all eligible test observations, capped."""

    max_queries: int | None = None

    def __post_init__(self):
        if self.max_queries is not None and self.max_queries < 1:
            raise ConfigError("max_queries must be >= 1 when given")


def eligible_queries(gallery: Gallery) -> tuple[np.ndarray, int]:
    """Indices with a same-identity cross-camera partner, plus skip count."""
    eligible = []
    skipped = 0
    for idx in range(gallery.size):
        same = gallery.identities == gallery.identities[idx]
        same[idx] = False
        if np.any(same & (gallery.cameras != gallery.cameras[idx])):
            eligible.append(idx)
        else:
            skipped += 1
    return np.asarray(eligible, dtype=np.int64), skipped


def _partners(gallery: Gallery, query_index: int) -> np.ndarray:
    same = gallery.identities == gallery.identities[query_index]
    same[query_index] = False
    return np.flatnonzero(same & (gallery.cameras != gallery.cameras[query_index]))


def _desired_index(gallery: Gallery, query_index: int, target_time: int) -> int:
    same = gallery.identities == gallery.identities[query_index]
    same[query_index] = False
    candidates = np.flatnonzero(same)
    dist = np.abs(gallery.timestamps[candidates] - target_time)
    keys = np.lexsort((candidates, gallery.timestamps[candidates], dist))
    return int(candidates[keys[0]])


def build_transition_table(model: TransitionNet, timestamps: np.ndarray,
                           max_cells: int = 4_000_000) -> object:
    """Memoise the model over the scene's delta range when affordable."""
    span = int(timestamps.max() - timestamps.min())
    cells = model.config.num_cameras * (2 * span + 1)
    if cells > max_cells:
        return model
    return TransitionTable(model, -span, span)


def _query_outcome(gallery: Gallery, task: QueryTask, strategy: Strategy,
                   total_bandwidth: int, params: InferenceParams, models: Models,
                   partners: np.ndarray, desired: int):
    plan_ = plan(task, strategy, total_bandwidth, params, models)
    log = run_rounds(plan_, gallery.size)
    rank_of = np.full(gallery.size, -1, dtype=np.int64)
    for seq in plan_.sequences:
        rank_of[seq] = np.arange(1, seq.size + 1)
    pair_records = []
    for target in partners:
        device = int(gallery.cameras[target])
        rank = int(rank_of[target])
        if strategy in LEARNED_BUDGETS:
            logits = models.transition.forward(
                task.query_camera, float(task.query_time),
                float(gallery.timestamps[target]), train=False)[0]
            sizes = np.array([len(s) for s in plan_.sequences], dtype=np.float64)
            budgets = strat.allocate_bandwidth(
                logits, sizes, total_bandwidth, params.gamma0,
                params.gamma1).budgets
        else:
            budgets = plan_.budgets
        budget = int(budgets[device])
        tn = -(-rank // budget)
        pair_records.append(PairRecord(
            query_index=-1, target_index=int(target), device=device,
            rank=rank, budget=budget, tn=tn))
    query_record = QueryRecord(
        query_index=-1, target_time=task.target_time, desired_index=desired,
        device=int(gallery.cameras[desired]),
        position=int(log.position_of[desired]),
        round=int(log.round_of[desired]))
    return pair_records, query_record


def run_benchmark(scene: Scene, strategies: Sequence[Strategy], models: Models,
                  total_bandwidth: int, params: InferenceParams,
                  query_spec: QuerySpec, rng: np.random.Generator,
                  threads: int = 1) -> dict[str, RunReport]:
    """Run every strategy over the scene's eligible test queries.

    Each query's target time is the timestamp of a seeded-random same-identity
    cross-camera partner. Per-pair transmission numbers use a pair-specific
    allocation for the learned-budget strategies; everything else reuses the
    query-level plan.
    """
    if scene.test_identities is None:
        raise DataError("scene has no train/test split")
    if models.transition is not None and hasattr(models.transition, "config"):
        if models.transition.config.num_cameras != scene.num_cameras:
            raise ConfigError(
                f"model covers {models.transition.config.num_cameras} cameras "
                f"but the scene has {scene.num_cameras}")
    strategies = [Strategy.parse(s) if isinstance(s, str) else s for s in strategies]
    gallery = build_gallery(scene.test_observations(), scene.num_cameras)
    all_eligible, skipped = eligible_queries(gallery)
    if all_eligible.size == 0:
        raise DataError("no eligible queries in the test split")
    chosen = all_eligible
    if query_spec.max_queries is not None and all_eligible.size > query_spec.max_queries:
        keep = rng.choice(all_eligible.size, size=query_spec.max_queries,
                          replace=False)
        chosen = all_eligible[np.sort(keep)]
    partner_lists = [_partners(gallery, int(q)) for q in chosen]
    target_times = [int(gallery.timestamps[p[rng.integers(0, p.size)]])
                    for p in partner_lists]
    desired = [_desired_index(gallery, int(q), t)
               for q, t in zip(chosen, target_times)]
    tasks = [make_task(gallery, int(q), t) for q, t in zip(chosen, target_times)]

    reports: dict[str, RunReport] = {}
    for strategy in strategies:
        def one(i: int):
            return _query_outcome(gallery, tasks[i], strategy, total_bandwidth,
                                  params, models, partner_lists[i], desired[i])
        if threads > 1:
            with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(one, range(len(tasks))))
        else:
            outcomes = [one(i) for i in range(len(tasks))]
        pairs: list[PairRecord] = []
        queries: list[QueryRecord] = []
        for i, (pair_records, query_record) in enumerate(outcomes):
            q = int(chosen[i])
            pairs.extend(dataclasses.replace(r, query_index=q) for r in pair_records)
            queries.append(dataclasses.replace(query_record, query_index=q))
        reports[strategy.value] = RunReport(
            strategy=strategy.value, total_bandwidth=total_bandwidth,
            num_cameras=scene.num_cameras, gallery_size=gallery.size,
            num_queries=len(tasks), num_skipped=skipped,
            pairs=pairs, queries=queries)
    return reports


# -- centralized evaluation ------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class RankedQuery:
    """A query with its gallery labels in ranked order (best first)."""

    query_identity: int
    query_camera: int
    gallery_identities: np.ndarray
    gallery_cameras: np.ndarray


def central_rankings(scene: Scene, models: Models, params: InferenceParams,
                     max_queries: int | None, rng: np.random.Generator):
    """Rank the merged test gallery per query, visually and jointly.

    Returns (visual, joint): two lists of RankedQuery over the same queries,
    the first ordered by cosine similarity alone, the second by the joint
    spatio-temporal/visual similarity.
    """
    if scene.test_identities is None:
        raise DataError("scene has no train/test split")
    gallery = build_gallery(scene.test_observations(), scene.num_cameras)
    if gallery.features is None:
        raise ConfigError("centralized evaluation needs appearance features")
    eligible, _ = eligible_queries(gallery)
    if eligible.size == 0:
        raise DataError("no eligible queries in the test split")
    chosen = eligible
    if max_queries is not None and eligible.size > max_queries:
        keep = rng.choice(eligible.size, size=max_queries, replace=False)
        chosen = eligible[np.sort(keep)]
    visual_lists: list[RankedQuery] = []
    joint_lists: list[RankedQuery] = []
    for q in chosen:
        q = int(q)
        others = np.flatnonzero(np.arange(gallery.size) != q)
        task = make_task(gallery, q, int(gallery.timestamps[q]))
        v = (gallery.features @ gallery.features[q])[others]
        order_v = others[np.lexsort((others, -v))]
        o = _st_scores(models, params, task, others)
        s = strat.joint_similarity(o, v, params.alpha, params.beta,
                                   params.orientation)
        order_s = others[np.lexsort((others, s))]
        for order, out in ((order_v, visual_lists), (order_s, joint_lists)):
            out.append(RankedQuery(
                query_identity=int(gallery.identities[q]),
                query_camera=int(gallery.cameras[q]),
                gallery_identities=gallery.identities[order],
                gallery_cameras=gallery.cameras[order]))
    return visual_lists, joint_lists
