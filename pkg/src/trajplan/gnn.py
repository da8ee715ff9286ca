"""Learned stage-1 planner: task vectorization, subgraph fusion, trajectory heads.

The task is encoded start-relative: the start pose becomes the origin, so the
network never sees absolute coordinates and predictions are rigid-motion
equivariant by construction.  Each obstacle forms a subgraph of edge vectors;
start and goal form the state subgraph.  Subgraphs are fused by repeated
(shared MLP, aggregate, concatenate) rounds, pooled, fused again globally, and
five parallel heads emit the 30-point trajectory variables x, y, theta, v, phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, WeightFormatError
from .geometry import Pose2, from_frame_xy, normalize_angle, to_frame_xy
from .trajectory import TimedTrajectory
from .vehicle import VehicleParams
from .world import PlanningTask, TaskMap

WEIGHT_KIND = "trajplan-gnn"


@dataclass(frozen=True)
class GnnConfig:
    n_points: int = 30
    hidden: int = 128
    fuse_width: int = 64  # MLP output; concat with the aggregate doubles it
    fusion_rounds: int = 3
    agg: str = "max"  # max | mean
    map_scale: float = 40.0  # meters; normalizes coordinate features and targets

    def __post_init__(self):
        if self.agg not in ("max", "mean"):
            raise ConfigError(f"unknown aggregation {self.agg!r}")
        if min(self.n_points, self.hidden, self.fuse_width, self.fusion_rounds) < 1:
            raise ConfigError("network dimensions must be positive")
        if self.map_scale <= 0:
            raise ConfigError("map_scale must be positive")

    @property
    def node_width(self) -> int:
        return 2 * self.fuse_width


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    warmup_epochs: int = 50
    lr: float = 0.001
    batch_size: int = 32
    seed: int = 0
    split_ratio: float = 0.9


N_VECTOR_FIELDS = 7  # x_a, y_a, x_b, y_b, theta_a, theta_b, subgraph flag
VARIABLE_NAMES = ("x", "y", "theta", "v", "phi")


@dataclass
class TaskGraph:
    """Vectorized task in the start-relative frame.

    state_vectors is (2, 7): the (all-zero) start vector and the goal vector.
    Each obstacle contributes an (n_i, 7) closed loop of edge vectors ordered
    CCW from its lowest-angle vertex.
    """

    state_vectors: np.ndarray
    obstacle_vectors: list[np.ndarray]


@dataclass
class PredictedTrajectory:
    """(n, 5) world-frame points [x, y, theta, v, phi]."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 5:
            raise ValueError(f"predicted points must be (n, 5), got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("predicted trajectory has non-finite values")


def vectorize(task: PlanningTask, task_map: TaskMap) -> TaskGraph:
    """Build the start-relative task graph.

    Deterministic: obstacle subgraphs are sorted by relative centroid and each
    vertex loop starts at its lowest-angle vertex, so any rigid transform of
    the whole task yields an identical graph.
    """
    start = task.start
    goal_xy = to_frame_xy(np.array([[task.goal.x, task.goal.y]]), start)[0]
    goal_th = task.goal.theta - start.theta
    state = np.zeros((2, N_VECTOR_FIELDS))
    state[1, 2] = goal_xy[0]
    state[1, 3] = goal_xy[1]
    state[1, 5] = goal_th

    entries = []
    for poly in task_map.obstacles:
        rel = to_frame_xy(poly.vertices, start)
        c = rel.mean(axis=0)
        ang = np.arctan2(rel[:, 1] - c[1], rel[:, 0] - c[0])
        order = np.lexsort((rel[:, 1], rel[:, 0], ang))
        rel = np.roll(rel, -int(order[0]), axis=0)
        nxt = np.roll(rel, -1, axis=0)
        vecs = np.zeros((len(rel), N_VECTOR_FIELDS))
        vecs[:, 0] = rel[:, 0]
        vecs[:, 1] = rel[:, 1]
        vecs[:, 2] = nxt[:, 0]
        vecs[:, 3] = nxt[:, 1]
        vecs[:, 6] = 1.0
        entries.append((round(float(c[0]), 9), round(float(c[1]), 9), vecs))
    entries.sort(key=lambda e: (e[0], e[1]))
    return TaskGraph(state, [e[2] for e in entries])


class TrajectoryNet:
    """Subgraph encoder, global fusion, and five parallel output heads."""

    def __init__(self, cfg: GnnConfig, seed: int = 0, params_v: VehicleParams | None = None):
        self.cfg = cfg
        self.limits = params_v or VehicleParams()
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        w = cfg.node_width
        self.sub_mlps = [
            ad.Mlp3(N_VECTOR_FIELDS if r == 0 else w, cfg.fuse_width, rng, hidden=cfg.hidden)
            for r in range(cfg.fusion_rounds)
        ]
        self.global_mlps = [
            ad.Mlp3(w, cfg.fuse_width, rng, hidden=cfg.hidden) for _ in range(cfg.fusion_rounds)
        ]
        self.heads = [ad.Mlp3(w, cfg.n_points, rng, hidden=cfg.hidden) for _ in VARIABLE_NAMES]

    # -- parameters ----------------------------------------------------------

    def parameters(self) -> dict[str, ad.Tensor]:
        out: dict[str, ad.Tensor] = {}
        for i, m in enumerate(self.sub_mlps):
            out.update(m.parameters(f"sub{i}"))
        for i, m in enumerate(self.global_mlps):
            out.update(m.parameters(f"glob{i}"))
        for name, m in zip(VARIABLE_NAMES, self.heads):
            out.update(m.parameters(f"head_{name}"))
        return out

    def zero_grad(self) -> None:
        for t in self.parameters().values():
            t.zero_grad()

    # -- forward -------------------------------------------------------------

    def _agg(self, x: ad.Tensor) -> ad.Tensor:
        return ad.max_over_rows(x) if self.cfg.agg == "max" else ad.mean_over_rows(x)

    def _fuse(self, x: ad.Tensor, mlps: list[ad.Mlp3]) -> ad.Tensor:
        for mlp in mlps:
            m = mlp(x)
            pooled = self._agg(m)
            x = ad.concat([m, ad.tile_rows(pooled, m.data.shape[0])], axis=1)
        return ad.max_over_rows(x)

    def _normalize_features(self, vecs: np.ndarray) -> np.ndarray:
        out = vecs.copy()
        out[:, 0:4] /= self.cfg.map_scale
        out[:, 4:6] /= math.pi
        return out

    def encode_subgraph(self, vectors: np.ndarray) -> ad.Tensor:
        """Width-128 descriptor of one subgraph; permutation-invariant in row order."""
        return self._fuse(ad.Tensor(self._normalize_features(vectors)), self.sub_mlps)

    def forward(self, graph: TaskGraph) -> list[ad.Tensor]:
        """Head outputs in normalized relative units, each (1, n_points)."""
        descriptors = [self.encode_subgraph(graph.state_vectors)]
        descriptors += [self.encode_subgraph(v) for v in graph.obstacle_vectors]
        nodes = ad.concat(descriptors, axis=0) if len(descriptors) > 1 else descriptors[0]
        emb = self._fuse(nodes, self.global_mlps)
        return [head(emb) for head in self.heads]

    def predict(self, task: PlanningTask, task_map: TaskMap) -> PredictedTrajectory:
        """World-frame prediction with v and phi clamped to their physical boxes."""
        graph = vectorize(task, task_map)
        heads = self.forward(graph)
        norm = np.stack([h.data[0] for h in heads], axis=1)  # (n_points, 5)
        return PredictedTrajectory(self._denormalize(norm, task.start))

    def _denormalize(self, norm: np.ndarray, start: Pose2) -> np.ndarray:
        cfg = self.cfg
        pts = np.empty_like(norm)
        rel_xy = norm[:, 0:2] * cfg.map_scale
        pts[:, 0:2] = from_frame_xy(rel_xy, start)
        pts[:, 2] = norm[:, 2] * math.pi + start.theta
        pts[:, 3] = np.clip(norm[:, 3] * self.limits.v_max, -self.limits.v_max, self.limits.v_max)
        pts[:, 4] = np.clip(norm[:, 4] * self.limits.phi_max, -self.limits.phi_max, self.limits.phi_max)
        return pts

    def normalize_label(self, states: np.ndarray, start: Pose2) -> np.ndarray:
        """Inverse of _denormalize for supervision targets: (n, 5) -> (n, 5) normalized."""
        cfg = self.cfg
        out = np.empty_like(states)
        out[:, 0:2] = to_frame_xy(states[:, 0:2], start) / cfg.map_scale
        out[:, 2] = (states[:, 2] - start.theta) / math.pi
        out[:, 3] = states[:, 3] / self.limits.v_max
        out[:, 4] = states[:, 4] / self.limits.phi_max
        return out

    # -- weights ---------------------------------------------------------------

    def save(self, path) -> None:
        meta = {"kind": WEIGHT_KIND, "config": asdict(self.cfg)}
        ad.save_tensors(path, meta, {k: t.data for k, t in self.parameters().items()})

    @staticmethod
    def load(path, expected: GnnConfig | None = None, params_v: VehicleParams | None = None) -> "TrajectoryNet":
        meta, tensors = ad.load_tensors(path)
        if meta.get("kind") != WEIGHT_KIND:
            raise WeightFormatError(f"weight file holds {meta.get('kind')!r}, not a trajectory net")
        cfg = GnnConfig(**meta["config"])
        if expected is not None and cfg != expected:
            raise WeightFormatError(f"weight architecture {cfg} does not match expected {expected}")
        net = TrajectoryNet(cfg, seed=0, params_v=params_v)
        params = net.parameters()
        if set(params) != set(tensors):
            raise WeightFormatError("weight file tensor names do not match the architecture")
        for name, t in params.items():
            if tensors[name].shape != t.data.shape:
                raise WeightFormatError(
                    f"tensor {name} has shape {tensors[name].shape}, expected {t.data.shape}"
                )
            t.data = tensors[name]
        return net


# ---------------------------------------------------------------------------
# Label subsampling and grid interpolation
# ---------------------------------------------------------------------------

def subsample_stride(n_nodes: int, n_points: int) -> int:
    return max(1, (n_nodes - 1) // (n_points - 1))


def subsample_label(states: np.ndarray, n_points: int) -> np.ndarray:
    """Pick n_points supervision rows from a dense label: every stride-th node."""
    r = subsample_stride(len(states), n_points)
    idx = np.arange(n_points) * r
    idx = np.minimum(idx, len(states) - 1)
    return states[idx]


def interpolate_to_grid(pred: PredictedTrajectory, n_nodes: int, t_final: float) -> TimedTrajectory:
    """Resample the n predicted points onto the optimization grid.

    Inserts (stride - 1) linearly interpolated points between consecutive
    predictions (theta on the circle) and holds the final point for the few
    remaining nodes, mirroring how dense labels are subsampled.  Accelerations
    and steering rates come from finite differences of v and phi.
    """
    pts = pred.points
    n = len(pts)
    if n_nodes < n:
        raise ValueError(f"n_nodes {n_nodes} must be >= the {n} predicted points")
    r = subsample_stride(n_nodes, n)
    n_interp = r * (n - 1) + 1
    dt = t_final / (n_nodes - 1)

    u = np.arange(n_interp) / r
    j = np.minimum(u.astype(int), n - 2)
    frac = (u - j)[:, None]
    states = np.empty((n_nodes, 5))
    base, nxt = pts[j], pts[j + 1]
    states[:n_interp] = base + frac * (nxt - base)
    dth = np.array([normalize_angle(d) for d in (nxt[:, 2] - base[:, 2])])
    states[:n_interp, 2] = base[:, 2] + frac[:, 0] * dth
    states[n_interp:] = pts[-1]

    controls = np.zeros((n_nodes, 2))
    controls[:-1, 0] = np.diff(states[:, 3]) / dt
    controls[:-1, 1] = np.diff(states[:, 4]) / dt
    return TimedTrajectory(dt, states, controls)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def sample_loss(net: TrajectoryNet, graph: TaskGraph, target_norm: np.ndarray) -> ad.Tensor:
    """Summed per-variable MSE between head outputs and the normalized label."""
    heads = net.forward(graph)
    total = None
    for i, h in enumerate(heads):
        term = ad.mse(h, target_norm[:, i][None, :])
        total = term if total is None else ad.add(total, term)
    return total


def train(
    samples: list,
    model_cfg: GnnConfig,
    train_cfg: TrainConfig,
    params_v: VehicleParams | None = None,
    test_samples: list | None = None,
    log_fn=None,
) -> tuple[TrajectoryNet, list[dict]]:
    """Train on labeled samples; returns the net and a per-epoch loss history.

    When test_samples is None the input is split 90/10 (deterministic in
    train_cfg.seed).  Each sample needs .task, .task_map and .label
    attributes.  Training is deterministic for a fixed seed.
    """
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    if test_samples is None:
        from .dataset import split_samples

        train_set, test_set = split_samples(samples, train_cfg.split_ratio, train_cfg.seed)
        if not train_set:  # tiny datasets: train on everything
            train_set = list(samples)
    else:
        train_set, test_set = list(samples), list(test_samples)

    ss = np.random.SeedSequence(train_cfg.seed)
    init_seed, shuffle_seed = ss.spawn(2)
    net = TrajectoryNet(model_cfg, seed=int(init_seed.generate_state(1)[0]), params_v=params_v)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    prepared_train = _prepare(net, train_set, model_cfg)
    prepared_test = _prepare(net, test_set, model_cfg)

    params = net.parameters()
    adam = ad.AdamState(lr=train_cfg.lr, warmup_epochs=train_cfg.warmup_epochs)
    history: list[dict] = []

    for epoch in range(1, train_cfg.epochs + 1):
        order = shuffle_rng.permutation(len(prepared_train))
        epoch_loss = 0.0
        for b0 in range(0, len(order), train_cfg.batch_size):
            batch = order[b0 : b0 + train_cfg.batch_size]
            net.zero_grad()
            batch_loss = 0.0
            for idx in batch:
                graph, target = prepared_train[idx]
                loss = ad.scale(sample_loss(net, graph, target), 1.0 / len(batch))
                loss.backward()
                batch_loss += float(loss.data) * len(batch)
            grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}
            ad.adam_step(params, grads, adam, epoch=epoch)
            epoch_loss += batch_loss
        train_loss = epoch_loss / max(1, len(prepared_train))
        test_loss = evaluate_loss(net, prepared_test) if prepared_test else float("nan")
        lr_eff = train_cfg.lr * min(1.0, epoch / adam.warmup_epochs) if adam.warmup_epochs else train_cfg.lr
        history.append({"epoch": epoch, "train_loss": train_loss, "test_loss": test_loss, "lr": lr_eff})
        if log_fn is not None:
            log_fn(history[-1])
    return net, history


def _prepare(net: TrajectoryNet, samples: list, cfg: GnnConfig) -> list[tuple[TaskGraph, np.ndarray]]:
    out = []
    for s in samples:
        graph = vectorize(s.task, s.task_map)
        label = subsample_label(s.label.states, cfg.n_points)
        out.append((graph, net.normalize_label(label, s.task.start)))
    return out


def evaluate_loss(net: TrajectoryNet, prepared: list[tuple[TaskGraph, np.ndarray]]) -> float:
    if not prepared:
        return float("nan")
    total = 0.0
    for graph, target in prepared:
        total += float(sample_loss(net, graph, target).data)
    return total / len(prepared)


def position_error_curve(net: TrajectoryNet, samples: list) -> np.ndarray:
    """Mean position error (meters) per predicted point index across samples."""
    cfg = net.cfg
    errors = np.zeros(cfg.n_points)
    if not samples:
        return errors
    for s in samples:
        pred = net.predict(s.task, s.task_map)
        label = subsample_label(s.label.states, cfg.n_points)
        errors += np.hypot(*(pred.points[:, :2] - label[:, :2]).T)
    return errors / len(samples)
