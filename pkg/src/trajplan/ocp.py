"""Direct transcription of the trajectory-planning optimal control problem.

Decision vector: 7 variables per node, node-major: [x, y, theta, v, phi, a, w].
Cost combines control-smoothness and obstacle-clearance terms; constraints are
forward-Euler dynamics defects, start/goal boundary rows, and fan-triangle
containment gaps between the footprint corners and every convex obstacle
piece (both directions).  All gradients are analytic and sparse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import sparse

from .errors import ConfigError, InvalidSteeringError
from .geometry import Polygon, Pose2, normalize_angle, polygon_area
from .trajectory import TimedTrajectory
from .vehicle import VehicleParams
from .world import PlanningTask, TaskMap

N_STATE = 5
N_CONTROL = 2
N_PER_NODE = N_STATE + N_CONTROL


@dataclass(frozen=True)
class OcpConfig:
    """Transcription knobs.

    gamma is the base of the clearance cost gamma^(-d^2); the default e makes
    it a plain Gaussian bump.  eps_clearance converts the strict "outside"
    condition into a closed inequality with a small area margin.
    """

    n_nodes: int = 120
    lambda1: float = 1.0
    lambda2: float = 1.0
    gamma: float = math.e
    eps_clearance: float = 0.01
    t_final: float = 47.6

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ConfigError("n_nodes must be at least 2")
        if self.gamma <= 1.0:
            raise ConfigError("gamma must exceed 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("cost weights must be non-negative")
        if self.t_final <= 0:
            raise ConfigError("t_final must be positive")

    @property
    def dt(self) -> float:
        return self.t_final / (self.n_nodes - 1)

    @property
    def n_vars(self) -> int:
        return N_PER_NODE * self.n_nodes


@dataclass
class NlpProblem:
    """Flattened nonlinear program.

    objective(z) -> (f, grad); eq(z) -> (c, J) with c(z*) = 0 wanted;
    ineq(z) -> (g, J) with g(z*) >= 0 wanted.  lo/hi are per-variable box
    bounds (inf allowed); None means unbounded.  eq/ineq may be None when the
    problem has no constraints of that kind.
    """

    n: int
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    eq: Callable[[np.ndarray], tuple[np.ndarray, sparse.csr_matrix]] | None = None
    ineq: Callable[[np.ndarray], tuple[np.ndarray, sparse.csr_matrix]] | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None


class SparsePattern:
    """Fixed sparsity template so Jacobians rebuild without re-sorting indices."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        nnz = len(rows)
        template = sparse.coo_matrix((np.arange(1, nnz + 1, dtype=float), (rows, cols)), shape=shape).tocsr()
        if template.nnz != nnz:
            raise ValueError("duplicate (row, col) entries in sparsity pattern")
        self.perm = template.data.astype(int) - 1
        self.indices = template.indices
        self.indptr = template.indptr
        self.shape = shape

    def build(self, data: np.ndarray) -> sparse.csr_matrix:
        return sparse.csr_matrix((data[self.perm], self.indices, self.indptr), shape=self.shape)


# ---------------------------------------------------------------------------
# Layout
# ---------------------------------------------------------------------------

def layout(traj: TimedTrajectory, cfg: OcpConfig) -> np.ndarray:
    """Flatten a trajectory with exactly cfg.n_nodes samples into z."""
    if len(traj) != cfg.n_nodes:
        raise ValueError(f"trajectory has {len(traj)} samples, transcription wants {cfg.n_nodes}")
    return np.concatenate([traj.states, traj.controls], axis=1).ravel()


def unlayout(z: np.ndarray, cfg: OcpConfig) -> TimedTrajectory:
    zz = np.asarray(z, dtype=float).reshape(cfg.n_nodes, N_PER_NODE)
    return TimedTrajectory(cfg.dt, zz[:, :N_STATE].copy(), zz[:, N_STATE:].copy())


def _split(z: np.ndarray, cfg: OcpConfig) -> tuple[np.ndarray, np.ndarray]:
    zz = z.reshape(cfg.n_nodes, N_PER_NODE)
    return zz[:, :N_STATE], zz[:, N_STATE:]


# ---------------------------------------------------------------------------
# Cost
# ---------------------------------------------------------------------------

def cost(z: np.ndarray, cfg: OcpConfig, task_map: TaskMap) -> tuple[float, np.ndarray]:
    """J = lambda1 * sum_k (w^2 + a^2) dt + lambda2 * sum_j sum_k gamma^(-d_jk^2) dt."""
    return _cost_impl(np.asarray(z, dtype=float), cfg, task_map.centroids())


def _cost_impl(z: np.ndarray, cfg: OcpConfig, centroids: np.ndarray) -> tuple[float, np.ndarray]:
    states, controls = _split(z, cfg)
    dt = cfg.dt
    grad = np.zeros_like(z).reshape(cfg.n_nodes, N_PER_NODE)

    a, w = controls[:, 0], controls[:, 1]
    j1 = cfg.lambda1 * dt * float(np.sum(a * a + w * w))
    grad[:, 5] = 2.0 * cfg.lambda1 * dt * a
    grad[:, 6] = 2.0 * cfg.lambda1 * dt * w

    j2 = 0.0
    if len(centroids) and cfg.lambda2 > 0.0:
        ln_g = math.log(cfg.gamma)
        dx = states[:, 0][:, None] - centroids[None, :, 0]  # (P, M)
        dy = states[:, 1][:, None] - centroids[None, :, 1]
        e = np.exp(-ln_g * (dx * dx + dy * dy))
        j2 = cfg.lambda2 * dt * float(np.sum(e))
        coef = -2.0 * cfg.lambda2 * dt * ln_g
        grad[:, 0] += coef * np.sum(e * dx, axis=1)
        grad[:, 1] += coef * np.sum(e * dy, axis=1)

    return j1 + j2, grad.ravel()


# ---------------------------------------------------------------------------
# Dynamics defects (forward Euler)
# ---------------------------------------------------------------------------

class _DefectPattern:
    """Static index arrays for the 18 nonzeros of each interval's 5 defect rows."""

    def __init__(self, cfg: OcpConfig):
        p = cfg.n_nodes
        rows, cols = [], []
        for k in range(p - 1):
            r0 = 5 * k
            b0, b1 = N_PER_NODE * k, N_PER_NODE * (k + 1)
            for i in range(5):
                rows.append(r0 + i)
                cols.append(b1 + i)  # +I on node k+1
                rows.append(r0 + i)
                cols.append(b0 + i)  # -I on node k
            rows += [r0 + 0, r0 + 0, r0 + 1, r0 + 1, r0 + 2, r0 + 2, r0 + 3, r0 + 4]
            cols += [b0 + 2, b0 + 3, b0 + 2, b0 + 3, b0 + 3, b0 + 4, b0 + 5, b0 + 6]
        self.pattern = SparsePattern(np.array(rows), np.array(cols), (5 * (p - 1), cfg.n_vars))


def dynamics_defects(
    z: np.ndarray, cfg: OcpConfig, params: VehicleParams, _pattern: _DefectPattern | None = None
) -> tuple[np.ndarray, sparse.csr_matrix]:
    """state_{k+1} - state_k - dt * f(state_k, u_k) for every interval, with Jacobian.

    Matches vehicle.integrate_euler exactly, so a chained Euler rollout has
    zero defect.  Raises InvalidSteeringError at the tan singularity.
    """
    z = np.asarray(z, dtype=float)
    states, controls = _split(z, cfg)
    phi = states[:, 4]
    if np.any(np.abs(phi) >= math.pi / 2):
        raise InvalidSteeringError("steering angle reached the tan() singularity")
    dt = cfg.dt
    th, v = states[:-1, 2], states[:-1, 3]
    tan_phi = np.tan(phi[:-1])
    cos_th, sin_th = np.cos(th), np.sin(th)
    lw = params.wheelbase

    f = np.empty((cfg.n_nodes - 1, 5))
    f[:, 0] = v * cos_th
    f[:, 1] = v * sin_th
    f[:, 2] = v * tan_phi / lw
    f[:, 3] = controls[:-1, 0]
    f[:, 4] = controls[:-1, 1]
    defects = states[1:] - states[:-1] - dt * f

    if _pattern is None:
        _pattern = _DefectPattern(cfg)
    p1 = cfg.n_nodes - 1
    data = np.empty(18 * p1)
    block = data.reshape(p1, 18)
    block[:, 0:10:2] = 1.0  # +I entries
    block[:, 1:11:2] = -1.0  # -I entries
    block[:, 10] = dt * v * sin_th  # d defect0 / d theta_k
    block[:, 11] = -dt * cos_th  # d defect0 / d v_k
    block[:, 12] = -dt * v * cos_th  # d defect1 / d theta_k
    block[:, 13] = -dt * sin_th  # d defect1 / d v_k
    block[:, 14] = -dt * tan_phi / lw  # d defect2 / d v_k
    block[:, 15] = -dt * v / (np.cos(phi[:-1]) ** 2 * lw)  # d defect2 / d phi_k
    block[:, 16] = -dt  # d defect3 / d a_k
    block[:, 17] = -dt  # d defect4 / d w_k
    return defects.ravel(), _pattern.pattern.build(data)


# ---------------------------------------------------------------------------
# Boundary conditions
# ---------------------------------------------------------------------------

N_BOUNDARY_ROWS = 14


def boundary_constraints(
    z: np.ndarray, task: PlanningTask, cfg: OcpConfig
) -> tuple[np.ndarray, sparse.csr_matrix]:
    """14 equality rows: full start/goal states (v = phi = 0) and zero end controls.

    Heading rows compare on the circle, so an initial guess that winds a full
    turn is not forced to unwind; the Jacobian is unaffected (slope 1).
    """
    z = np.asarray(z, dtype=float)
    states, controls = _split(z, cfg)
    s, g = task.start, task.goal
    vals = np.concatenate([
        states[0] - np.array([s.x, s.y, s.theta, 0.0, 0.0]),
        states[-1] - np.array([g.x, g.y, g.theta, 0.0, 0.0]),
        controls[0],
        controls[-1],
    ])
    vals[2] = normalize_angle(vals[2])
    vals[7] = normalize_angle(vals[7])
    last = N_PER_NODE * (cfg.n_nodes - 1)
    cols = np.array(
        [0, 1, 2, 3, 4, last, last + 1, last + 2, last + 3, last + 4, 5, 6, last + 5, last + 6]
    )
    jac = sparse.csr_matrix(
        (np.ones(N_BOUNDARY_ROWS), (np.arange(N_BOUNDARY_ROWS), cols)),
        shape=(N_BOUNDARY_ROWS, cfg.n_vars),
    )
    return vals, jac


# ---------------------------------------------------------------------------
# Obstacle constraints (fan-triangle containment gaps)
# ---------------------------------------------------------------------------

class ObstacleGeometry:
    """Flattened convex pieces of all obstacles for vectorized constraint rows."""

    def __init__(self, pieces: list[Polygon]):
        self.n_pieces = len(pieces)
        if self.n_pieces == 0:
            self.edge_a = np.zeros((0, 2))
            self.edge_b = np.zeros((0, 2))
            self.edge_offsets = np.zeros(0, dtype=int)
            self.areas = np.zeros(0)
            self.verts = np.zeros((0, 2))
            return
        ea, eb, offsets, verts = [], [], [0], []
        for piece in pieces:
            v = piece.vertices
            ea.append(v)
            eb.append(np.roll(v, -1, axis=0))
            offsets.append(offsets[-1] + len(v))
            verts.append(v)
        self.edge_a = np.concatenate(ea)
        self.edge_b = np.concatenate(eb)
        self.edge_offsets = np.array(offsets[:-1])
        self.areas = np.array([polygon_area(p) for p in pieces])
        self.verts = np.concatenate(verts)

    @property
    def n_vertices(self) -> int:
        return len(self.verts)


def rows_per_node(geom: ObstacleGeometry) -> int:
    return 4 * geom.n_pieces + geom.n_vertices


def _argmin_per_piece(cross: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Global edge index of the per-piece minimum cross: (P, 4, E) -> (P, 4, n_pieces)."""
    ends = np.append(offsets[1:], cross.shape[2])
    out = np.empty(cross.shape[:2] + (len(offsets),), dtype=int)
    for i, (a, b) in enumerate(zip(offsets, ends)):
        out[:, :, i] = a + np.argmin(cross[:, :, a:b], axis=2)
    return out


def _obstacle_pattern(geom: ObstacleGeometry, cfg: OcpConfig) -> SparsePattern:
    p = cfg.n_nodes
    rows_a = np.arange(p * 4 * geom.n_pieces)
    rows_b = p * 4 * geom.n_pieces + np.arange(p * geom.n_vertices)
    node_a = np.repeat(np.arange(p), 4 * geom.n_pieces)
    node_b = np.repeat(np.arange(p), geom.n_vertices)
    rows = np.concatenate([
        np.repeat(rows_a, 3),
        np.repeat(rows_b, 3),
    ])
    cols = np.concatenate([
        np.stack([7 * node_a, 7 * node_a + 1, 7 * node_a + 2], axis=1).ravel(),
        np.stack([7 * node_b, 7 * node_b + 1, 7 * node_b + 2], axis=1).ravel(),
    ])
    return SparsePattern(rows, cols, (p * rows_per_node(geom), cfg.n_vars))


def obstacle_constraints(
    z: np.ndarray,
    task_map: TaskMap,
    params: VehicleParams,
    cfg: OcpConfig,
    _geom: ObstacleGeometry | None = None,
    _pattern: SparsePattern | None = None,
) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Inequalities g(z) >= 0 keeping the vehicle outside every convex piece.

    Per node: each of the 4 footprint corners must have a positive fan-area
    gap to each piece, and each piece vertex a positive gap to the footprint;
    both sides carry the eps_clearance margin.  Jacobian rows touch only the
    node's (x, y, theta).
    """
    geom = _geom if _geom is not None else ObstacleGeometry(task_map.convex_pieces())
    return _obstacle_impl(np.asarray(z, dtype=float), geom, params, cfg, _pattern)


def _obstacle_impl(
    z: np.ndarray, geom: ObstacleGeometry, params: VehicleParams, cfg: OcpConfig,
    pattern: SparsePattern | None = None,
) -> tuple[np.ndarray, sparse.csr_matrix]:
    p = cfg.n_nodes
    if geom.n_pieces == 0:
        return np.zeros(0), sparse.csr_matrix((0, cfg.n_vars))

    states, _ = _split(z, cfg)
    x, y, th = states[:, 0], states[:, 1], states[:, 2]
    cos_t, sin_t = np.cos(th), np.sin(th)
    body = params.body_corners()  # (4, 2)

    # world corners (P, 4, 2) and their theta derivative
    cx = x[:, None] + body[None, :, 0] * cos_t[:, None] - body[None, :, 1] * sin_t[:, None]
    cy = y[:, None] + body[None, :, 0] * sin_t[:, None] + body[None, :, 1] * cos_t[:, None]
    dcx_dth = -body[None, :, 0] * sin_t[:, None] - body[None, :, 1] * cos_t[:, None]
    dcy_dth = body[None, :, 0] * cos_t[:, None] - body[None, :, 1] * sin_t[:, None]

    eps = cfg.eps_clearance

    # The fan gap is identically zero inside a convex piece, which would leave
    # the solver without any recovery gradient once an iterate penetrates an
    # obstacle.  On that interior plateau (gap == 0, all crosses >= 0) the
    # value is extended smoothly downward with the deepest edge's scaled
    # penetration, -min_e cross_e < 0; everywhere the gap is positive the
    # value and gradient are exactly the fan gap.

    # ---- (A) footprint corners vs obstacle pieces: (P, 4, n_pieces) --------
    eax, eay = geom.edge_a[:, 0], geom.edge_a[:, 1]
    ebx, eby = geom.edge_b[:, 0], geom.edge_b[:, 1]
    ux = eax[None, None, :] - cx[:, :, None]  # (P, 4, E)
    uy = eay[None, None, :] - cy[:, :, None]
    wx = ebx[None, None, :] - cx[:, :, None]
    wy = eby[None, None, :] - cy[:, :, None]
    cross = ux * wy - uy * wx
    sign = np.sign(cross)
    fan = np.add.reduceat(np.abs(cross), geom.edge_offsets, axis=2) * 0.5
    gap_a = fan - geom.areas[None, None, :]

    # d|cross|/dcx = sign * (eay - eby); d|cross|/dcy = sign * (ebx - eax)
    dgx_a = 0.5 * np.add.reduceat(sign * (eay - eby)[None, None, :], geom.edge_offsets, axis=2)
    dgy_a = 0.5 * np.add.reduceat(sign * (ebx - eax)[None, None, :], geom.edge_offsets, axis=2)

    # interior branch: -cross at the shallowest edge of each piece.  The
    # inside test is the sign of the crosses, not of the gap: the gap is zero
    # up to rounding everywhere inside.
    min_cross = np.minimum.reduceat(cross, geom.edge_offsets, axis=2)
    outside_a = min_cross < 0.0
    arg_local = _argmin_per_piece(cross, geom.edge_offsets)
    vals_a = np.where(outside_a, gap_a, -min_cross)
    dgx_a = np.where(outside_a, dgx_a, (eby - eay)[arg_local])
    dgy_a = np.where(outside_a, dgy_a, (eax - ebx)[arg_local])
    dth_a = dgx_a * dcx_dth[:, :, None] + dgy_a * dcy_dth[:, :, None]
    vals_a = (vals_a - eps).ravel()

    # ---- (B) obstacle-piece vertices vs footprint: (P, V) -------------------
    qx, qy = geom.verts[:, 0], geom.verts[:, 1]
    rx = cx[:, :, None] - qx[None, None, :]  # (P, 4, V) corner minus vertex
    ry = cy[:, :, None] - qy[None, None, :]
    nxt = [1, 2, 3, 0]
    cross_b = rx * ry[:, nxt, :] - ry * rx[:, nxt, :]  # term i: corner i x corner i+1
    sign_b = np.sign(cross_b)
    area_f = params.length * params.width
    gap_b = 0.5 * np.sum(np.abs(cross_b), axis=1) - area_f  # (P, V)
    outside_b = np.min(cross_b, axis=1) < 0.0

    # per-corner gradient of the fan sum (before chaining to x, y, theta)
    prv = [3, 0, 1, 2]
    gcx = 0.5 * (sign_b * ry[:, nxt, :] - sign_b[:, prv, :] * ry[:, prv, :])
    gcy = 0.5 * (-sign_b * rx[:, nxt, :] + sign_b[:, prv, :] * rx[:, prv, :])

    # interior branch: -cross at the shallowest footprint edge
    arg_b = np.argmin(cross_b, axis=1)  # (P, V)
    min_cross_b = np.take_along_axis(cross_b, arg_b[:, None, :], axis=1)[:, 0, :]
    one_hot = (arg_b[:, None, :] == np.arange(4)[None, :, None]).astype(float)  # (P, 4, V)
    in_gcx = -(one_hot * ry[:, nxt, :] - np.take(one_hot, prv, axis=1) * ry[:, prv, :])
    in_gcy = -(-one_hot * rx[:, nxt, :] + np.take(one_hot, prv, axis=1) * rx[:, prv, :])

    vals_b = (np.where(outside_b, gap_b, -min_cross_b) - eps).ravel()
    gcx = np.where(outside_b[:, None, :], gcx, in_gcx)
    gcy = np.where(outside_b[:, None, :], gcy, in_gcy)
    dgx_b = np.sum(gcx, axis=1)  # (P, V)
    dgy_b = np.sum(gcy, axis=1)
    dth_b = np.sum(gcx * dcx_dth[:, :, None] + gcy * dcy_dth[:, :, None], axis=1)

    values = np.concatenate([vals_a, vals_b])
    data = np.concatenate([
        np.stack([dgx_a.ravel(), dgy_a.ravel(), dth_a.ravel()], axis=1).ravel(),
        np.stack([dgx_b.ravel(), dgy_b.ravel(), dth_b.ravel()], axis=1).ravel(),
    ])
    if pattern is None:
        pattern = _obstacle_pattern(geom, cfg)
    return values, pattern.build(data)


# ---------------------------------------------------------------------------
# Assembled problem
# ---------------------------------------------------------------------------

def box_bounds(cfg: OcpConfig, params: VehicleParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-variable limits: x, y, theta free; v, phi, a, w at the physical boxes."""
    lo_node = np.array([-np.inf, -np.inf, -np.inf, -params.v_max, -params.phi_max, -params.a_max, -params.w_max])
    hi_node = -lo_node
    return np.tile(lo_node, cfg.n_nodes), np.tile(hi_node, cfg.n_nodes)


def build_nlp(task_map: TaskMap, task: PlanningTask, cfg: OcpConfig, params: VehicleParams) -> NlpProblem:
    """Assemble the full NLP for one planning task."""
    centroids = task_map.centroids()
    geom = ObstacleGeometry(task_map.convex_pieces())
    defect_pattern = _DefectPattern(cfg)
    obstacle_pattern = _obstacle_pattern(geom, cfg) if geom.n_pieces else None
    lo, hi = box_bounds(cfg, params)

    def objective(z: np.ndarray) -> tuple[float, np.ndarray]:
        return _cost_impl(np.asarray(z, dtype=float), cfg, centroids)

    def eq(z: np.ndarray) -> tuple[np.ndarray, sparse.csr_matrix]:
        d_vals, d_jac = dynamics_defects(np.asarray(z, dtype=float), cfg, params, defect_pattern)
        b_vals, b_jac = boundary_constraints(z, task, cfg)
        return np.concatenate([d_vals, b_vals]), sparse.vstack([d_jac, b_jac], format="csr")

    def ineq(z: np.ndarray) -> tuple[np.ndarray, sparse.csr_matrix]:
        return _obstacle_impl(np.asarray(z, dtype=float), geom, params, cfg, obstacle_pattern)

    return NlpProblem(cfg.n_vars, objective, eq, ineq, lo, hi)
