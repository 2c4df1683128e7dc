"""Time-resource allocation: equal-share heuristic, max-sum-log-rate solver,
an exhaustive grid-search oracle for certifying the solver on tiny
instances, and feasibility projection for model outputs.

The solver maximizes sum_j log(served rate_j) over per-AP time shares. It
works on the epigraph form (auxiliary served-rate variables t_j) with a
log-barrier interior-point method: all constraints are linear, the
objective is concave, and Newton centering with a geometrically increased
barrier weight drives the duality gap below the configured tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigError, ConvergenceError, FeasibilityError, PredictionError
from .scenario import Scenario

FEAS_TOL = 1e-9


@dataclass
class AllocationMatrix:
    """Per-AP time shares rho[i, j] with the serving mask that defines
    where nonzero shares are allowed."""

    rho: np.ndarray       # (n_a, n_u)
    mask: np.ndarray      # (n_a, n_u) bool, True where AP i serves UE j

    def serving_rows(self, sc: Scenario) -> np.ndarray:
        """Shares as (n_u, n_f) rows in each UE's serving order (the label
        layout used by the learning models)."""
        rows = np.zeros((sc.n_ue, sc.n_subflows))
        for j, s_j in enumerate(sc.serving):
            rows[j] = self.rho[s_j, j]
        return rows

    @classmethod
    def from_serving_rows(cls, rows: np.ndarray, sc: Scenario) -> "AllocationMatrix":
        rho = np.zeros((sc.n_ap, sc.n_ue))
        mask = np.zeros((sc.n_ap, sc.n_ue), dtype=bool)
        for j, s_j in enumerate(sc.serving):
            rho[s_j, j] = rows[j]
            mask[s_j, j] = True
        return cls(rho=rho, mask=mask)


class ObjectiveValue(NamedTuple):
    value: float
    floored_ues: tuple[int, ...]    # UEs whose served rate sat on the log floor


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8       # relative duality-gap target
    max_iters: int = 10_000       # total Newton iterations across centerings
    log_floor: float = 1e-9       # epsilon in log(max(t_j, eps * R_j))
    grid_steps: int = 100         # N_t of the grid oracle

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        if self.grid_steps < 2:
            raise ConfigError("grid_steps must be >= 2")


def serving_mask(sc: Scenario) -> np.ndarray:
    mask = np.zeros((sc.n_ap, sc.n_ue), dtype=bool)
    for j, s_j in enumerate(sc.serving):
        mask[s_j, j] = True
    return mask


def validate_alloc(sc: Scenario, alloc: AllocationMatrix, tol: float = FEAS_TOL) -> None:
    """Raise FeasibilityError unless all three constraint families hold."""
    rho = alloc.rho
    if rho.shape != (sc.n_ap, sc.n_ue):
        raise FeasibilityError(f"rho shape {rho.shape} != ({sc.n_ap}, {sc.n_ue})")
    if not np.isfinite(rho).all():
        raise FeasibilityError("rho contains non-finite entries")
    if rho.min() < -tol or rho.max() > 1.0 + tol:
        raise FeasibilityError("rho outside [0, 1]")
    off = np.abs(np.where(alloc.mask, 0.0, rho)).max() if rho.size else 0.0
    if off > tol:
        raise FeasibilityError("nonzero share outside the serving sets")
    sums = np.where(alloc.mask, rho, 0.0).sum(axis=1)
    if sums.max(initial=0.0) > 1.0 + tol:
        raise FeasibilityError("per-AP time budget exceeded")


def heuristic_allocate(sc: Scenario) -> AllocationMatrix:
    """Equal split: every AP shares its airtime evenly over its UEs."""
    mask = serving_mask(sc)
    rho = np.zeros_like(mask, dtype=np.float64)
    counts = mask.sum(axis=1)
    for i in range(sc.n_ap):
        if counts[i]:
            rho[i, mask[i]] = 1.0 / counts[i]
    return AllocationMatrix(rho=rho, mask=mask)


def throughput(sc: Scenario, alloc: AllocationMatrix) -> tuple[float, np.ndarray]:
    """Network sum rate and per-UE served rates, each UE capped at its demand."""
    validate_alloc(sc, alloc)
    served = np.empty(sc.n_ue)
    for j, s_j in enumerate(sc.serving):
        raw = float(alloc.rho[s_j, j] @ sc.capacity_bps[s_j, j])
        served[j] = min(raw, sc.req_bps[j])
    return float(served.sum()), served


def objective(sc: Scenario, alloc: AllocationMatrix,
              cfg: Optional[SolverConfig] = None) -> ObjectiveValue:
    """Sum of natural logs of served rates, floored at eps * R_j."""
    cfg = cfg or SolverConfig()
    _, served = throughput(sc, alloc)
    floor = cfg.log_floor * sc.req_bps
    floored = tuple(int(j) for j in np.nonzero(served < floor)[0])
    return ObjectiveValue(float(np.log(np.maximum(served, floor)).sum()), floored)


# --- interior-point solver ---------------------------------------------------

def _edge_layout(sc: Scenario):
    """Flatten the serving pairs: edge e -> (ap, ue, capacity)."""
    ap_idx, ue_idx, caps = [], [], []
    for j, s_j in enumerate(sc.serving):
        for i in s_j:
            ap_idx.append(i)
            ue_idx.append(j)
            caps.append(sc.capacity_bps[i, j])
    return (np.asarray(ap_idx, dtype=np.int64), np.asarray(ue_idx, dtype=np.int64),
            np.asarray(caps, dtype=np.float64))


def optimize_allocate(sc: Scenario, cfg: Optional[SolverConfig] = None) -> AllocationMatrix:
    """Solve the proportional-fairness program to the configured tolerance.

    Deterministic for fixed inputs. Raises ConvergenceError (carrying the
    best iterate as an AllocationMatrix) if the Newton budget runs out.
    """
    cfg = cfg or SolverConfig()
    ap_idx, ue_idx, caps = _edge_layout(sc)
    n_e, n_u = len(caps), sc.n_ue
    n = n_e + n_u

    max_rate = np.zeros(n_u)
    np.add.at(max_rate, ue_idx, caps)
    if (max_rate <= 0).any():
        raise FeasibilityError("a UE has no serving link with positive capacity")

    # rescale rates to O(1) so the Newton system stays well conditioned;
    # the optimum is invariant, the objective shifts by n_u * log(scale)
    scale = float(np.median(np.minimum(max_rate, sc.req_bps)))
    c = caps / scale
    r = sc.req_bps / scale

    # dense constraint rows A x <= b over x = [rho_e..., t_j...]
    active_aps = sorted(set(ap_idx.tolist()))
    m = n_u + n_u + n_e + n_e + len(active_aps)
    A = np.zeros((m, n))
    b = np.zeros(m)
    row = 0
    for j in range(n_u):                       # t_j <= sum_e rho_e c_e
        A[row, n_e + j] = 1.0
        sel = ue_idx == j
        A[row, :n_e][sel] = -c[sel]
        row += 1
    for j in range(n_u):                       # t_j <= R_j
        A[row, n_e + j] = 1.0
        b[row] = r[j]
        row += 1
    for e in range(n_e):                       # rho_e >= 0
        A[row, e] = -1.0
        row += 1
    for e in range(n_e):                       # rho_e <= 1
        A[row, e] = 1.0
        b[row] = 1.0
        row += 1
    for i in active_aps:                       # per-AP budget
        A[row, :n_e][ap_idx == i] = 1.0
        b[row] = 1.0
        row += 1

    # strictly interior start
    ap_load = np.zeros(sc.n_ap)
    np.add.at(ap_load, ap_idx, 1.0)
    x = np.empty(n)
    x[:n_e] = 1.0 / (ap_load[ap_idx] + 1.0)
    rate0 = np.zeros(n_u)
    np.add.at(rate0, ue_idx, x[:n_e] * c)
    x[n_e:] = 0.9 * np.minimum(rate0, r)

    t_slice = slice(n_e, n)
    t_idx = np.arange(n_e, n)

    def f_val(xv):
        return -np.log(xv[t_slice]).sum()

    tau = max(1.0, m / max(1.0, abs(f_val(x))))
    iters = 0
    while True:
        # Newton centering for the current barrier weight
        s = b - A @ x                 # refresh slacks once per centering
        for _ in range(100):
            if iters >= cfg.max_iters:
                raise ConvergenceError(
                    f"no convergence within {cfg.max_iters} Newton iterations",
                    best=_alloc_from_x(x, ap_idx, ue_idx, sc))
            iters += 1
            inv_s = 1.0 / s
            grad = A.T @ inv_s
            grad[t_slice] -= tau / x[t_slice]
            H = (A * inv_s[:, None] ** 2).T @ A
            H[t_idx, t_idx] += tau / x[t_slice] ** 2
            try:
                d = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                d = -np.linalg.lstsq(H, grad, rcond=None)[0]
            decrement = -float(grad @ d)
            if decrement / 2.0 <= 1e-11:
                break
            # ratio test: largest step keeping slacks and rates positive
            a_d = A @ d
            step = 1.0
            hit = a_d > 0
            if hit.any():
                step = min(step, 0.99 * float((s[hit] / a_d[hit]).min()))
            neg_t = d[t_slice] < 0
            if neg_t.any():
                step = min(step,
                           0.99 * float((x[t_slice][neg_t] / -d[t_slice][neg_t]).min()))
            # Armijo backtracking on the barrier potential, O(m) per trial
            phi0 = tau * f_val(x) - np.log(s).sum()
            while step > 1e-14:
                t_new = x[t_slice] + step * d[t_slice]
                s_new = s - step * a_d
                phi_try = -tau * np.log(t_new).sum() - np.log(s_new).sum()
                if phi_try <= phi0 - 0.25 * step * decrement:
                    break
                step *= 0.5
            x = x + step * d
            s = s - step * a_d
        gap = m / tau
        if gap <= cfg.tolerance * max(1.0, abs(f_val(x))):
            break
        tau *= 10.0

    return _alloc_from_x(x, ap_idx, ue_idx, sc)


def _alloc_from_x(x, ap_idx, ue_idx, sc: Scenario) -> AllocationMatrix:
    mask = serving_mask(sc)
    rho = np.zeros((sc.n_ap, sc.n_ue))
    n_e = len(ap_idx)
    rho[ap_idx, ue_idx] = np.clip(x[:n_e], 0.0, 1.0)
    # polish: barrier iterates sit strictly inside the budget; scaling a row
    # up never lowers any served rate, so consume the leftover budget. The
    # 1e-12 headroom keeps the sums strictly below 1 under float rounding.
    for i in range(sc.n_ap):
        row_sum = rho[i].sum()
        row_max = rho[i].max(initial=0.0)
        if 0.0 < row_sum < 1.0 and row_max > 0.0:
            rho[i] *= min(1.0 / row_sum, 1.0 / row_max) * (1.0 - 1e-12)
    return AllocationMatrix(rho=rho, mask=mask)


# --- exhaustive grid oracle --------------------------------------------------

def _compositions(total: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of the given length summing to total."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for k in range(total + 1):
        tail = _compositions(total - k, parts - 1)
        head = np.full((len(tail), 1), k, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


def grid_oracle(sc: Scenario, cfg: Optional[SolverConfig] = None,
                force: bool = False) -> AllocationMatrix:
    """Best allocation on the per-AP simplex grid with step 1/grid_steps.

    Exhaustive over the full-budget face of every serving AP (the served
    objective is nondecreasing in every share, so that face contains a grid
    maximizer). All APs but the largest are enumerated as an explicit leaf
    matrix; the largest AP is then optimized exactly for every leaf at once
    by incremental greedy, which is optimal here because each UE's grid
    utility is concave and nondecreasing in its share count. The result is
    a true grid argmax.
    """
    cfg = cfg or SolverConfig()
    if sc.n_ue * sc.n_subflows > 6 and not force:
        raise ConfigError(
            "instance too large for the grid oracle (n_ue * n_f > 6); "
            "pass force=True to override")
    nt = cfg.grid_steps
    eps = cfg.log_floor
    req = sc.req_bps
    served_by = sc.served_by()
    active = [i for i in range(sc.n_ap) if served_by[i]]
    mask = serving_mask(sc)
    if not active:
        return AllocationMatrix(rho=np.zeros((sc.n_ap, sc.n_ue)), mask=mask)
    active.sort(key=lambda i: len(served_by[i]))
    enum_aps, last_ap = active[:-1], active[-1]
    last_ues = np.asarray(served_by[last_ap], dtype=np.int64)

    def term(t):
        return np.log(np.maximum(np.minimum(t, req), eps * req))

    # leaves: cartesian product of the enumerated APs' full-budget compositions
    comp_per_ap = [_compositions(nt, len(served_by[i])) for i in enum_aps]
    n_leaves = int(np.prod([len(c) for c in comp_per_ap])) if comp_per_ap else 1
    if n_leaves * max(1, len(last_ues)) > 5_000_000:
        raise ConfigError(
            "grid too large to enumerate; reduce grid_steps or instance size")
    acc = np.zeros((n_leaves, sc.n_ue))
    leaf_ks: list[np.ndarray] = []          # per enumerated AP, (n_leaves, n_i)
    if comp_per_ap:
        grids = np.meshgrid(*[np.arange(len(c)) for c in comp_per_ap],
                            indexing="ij")
        for comp, g, i in zip(comp_per_ap, grids, enum_aps):
            ks = comp[g.reshape(-1)]
            leaf_ks.append(ks)
            acc[:, served_by[i]] += ks * (sc.capacity_bps[i, served_by[i]] / nt)

    # greedy over the last AP, all leaves at once: start with zero shares and
    # hand out budget units to the best marginal gain; exact for concave
    # nondecreasing per-UE utilities
    quanta = sc.capacity_bps[last_ap, last_ues] / nt
    if (quanta <= eps * req[last_ues]).any() and (quanta > 0).any():
        # floor region could flatten the utilities; keep the slow exact DP
        return _grid_oracle_dp(sc, cfg, enum_aps, last_ap, leaf_ks, acc, nt, eps)

    values = term(acc).sum(axis=1)                       # all-zero last-AP start
    ks_last = np.zeros((n_leaves, len(last_ues)), dtype=np.int64)
    t_cur = acc[:, last_ues].copy()
    u_cur = np.log(np.maximum(np.minimum(t_cur, req[last_ues]), eps * req[last_ues]))
    marg = np.log(np.maximum(np.minimum(t_cur + quanta, req[last_ues]),
                             eps * req[last_ues])) - u_cur
    rows = np.arange(n_leaves)
    for _ in range(nt):
        pick = np.argmax(marg, axis=1)
        gain = marg[rows, pick]
        values += gain
        u_cur[rows, pick] += gain
        ks_last[rows, pick] += 1
        t_new = t_cur[rows, pick] + quanta[pick]
        t_cur[rows, pick] = t_new
        nxt = np.log(np.maximum(np.minimum(t_new + quanta[pick], req[last_ues][pick]),
                                eps * req[last_ues][pick]))
        marg[rows, pick] = nxt - u_cur[rows, pick]

    best = int(np.argmax(values))
    rho = np.zeros((sc.n_ap, sc.n_ue))
    for ks, i in zip(leaf_ks, enum_aps):
        rho[i, served_by[i]] = ks[best] / nt
    rho[last_ap, last_ues] = ks_last[best] / nt
    return AllocationMatrix(rho=rho, mask=mask)


def _grid_oracle_dp(sc, cfg, enum_aps, last_ap, leaf_ks, acc, nt, eps):
    """Per-leaf dynamic program over the last AP; exact without any
    concavity assumption, used only when the greedy precondition fails."""
    served_by = sc.served_by()
    req = sc.req_bps
    last_ues = served_by[last_ap]
    caps = sc.capacity_bps[last_ap, last_ues]
    other = [j for j in range(sc.n_ue) if j not in set(last_ues)]
    best_val, best_leaf, best_ks = -np.inf, 0, None
    for leaf in range(acc.shape[0]):
        fixed = float(np.log(np.maximum(np.minimum(acc[leaf, other], req[other]),
                                        eps * req[other])).sum()) if other else 0.0
        val, ks = _dp_one(acc[leaf], last_ues, caps, req, nt, eps)
        if fixed + val > best_val:
            best_val, best_leaf, best_ks = fixed + val, leaf, ks
    rho = np.zeros((sc.n_ap, sc.n_ue))
    for ks, i in zip(leaf_ks, enum_aps):
        rho[i, served_by[i]] = ks[best_leaf] / nt
    rho[last_ap, last_ues] = best_ks / nt
    return AllocationMatrix(rho=rho, mask=serving_mask(sc))


def _dp_one(acc, ues, caps, req, nt, eps):
    """Exact grid max of sum_j f_j(k_j) with sum k = nt (max-plus chain)."""
    rows = []
    for j, c in zip(ues, caps):
        t = acc[j] + np.arange(nt + 1) * c / nt
        rows.append(np.log(np.maximum(np.minimum(t, req[j]), eps * req[j])))
    v = rows[0]
    choices = []
    for row in rows[1:]:
        nv = np.full(nt + 1, -np.inf)
        ch = np.zeros(nt + 1, dtype=np.int64)
        for k in range(nt + 1):
            cand = row[k] + v[: nt + 1 - k]
            upd = cand > nv[k:]
            nv[k:][upd] = cand[upd]
            ch[k:][upd] = k
        v = nv
        choices.append(ch)
    ks = np.zeros(len(ues), dtype=np.int64)
    budget = nt
    for p in range(len(ues) - 1, 0, -1):
        ks[p] = choices[p - 1][budget]
        budget -= ks[p]
    ks[0] = budget
    return float(v[nt]), ks


def project_feasible(raw: np.ndarray, sc: Scenario) -> AllocationMatrix:
    """Clip predictions to [0, 1], scatter into the AP layout, and rescale
    any AP row whose total exceeds its unit budget. Idempotent."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (sc.n_ue, sc.n_subflows):
        raise PredictionError(
            f"prediction shape {raw.shape} != ({sc.n_ue}, {sc.n_subflows})")
    if np.isnan(raw).any():
        raise PredictionError("prediction contains NaN")
    rows = np.clip(raw, 0.0, 1.0)
    alloc = AllocationMatrix.from_serving_rows(rows, sc)
    sums = alloc.rho.sum(axis=1)
    over = sums > 1.0
    alloc.rho[over] /= sums[over, None]
    return alloc
