"""Two-objective evolutionary design search for the scissor lift.

Minimises (peak actuator force, actuator stroke) over the design box
0 < a, b <= 0.5, 5 deg <= theta_min <= 10 deg, D_min <= D <= H, with the
level count n handled by separate runs.  The search is an elitist
non-dominated-sorting GA (binary tournaments, simulated-binary crossover,
polynomial mutation) with an external archive of every feasible
non-dominated point seen, so the reported front quality never regresses.
A brute-force grid sweep over the same box acts as the independent
cross-check for front quality.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import scissor
from .scissor import ScissorConfig, ScissorError

# Feasibility caps applied as a post-filter on evaluated designs.
FORCE_CAP = 1000.0  # N
DEFAULT_LOAD = 250.0  # N
DEFAULT_H = 0.4  # m
REFERENCE_POINT = (1000.0, 0.4)  # hypervolume reference (N, m)

# Operational lower bound for the open intervals a, b in (0, 0.5]: sampling
# and clipping need a closed box; designs this close to zero are force-capped
# away regardless.
AB_FLOOR = 1e-3


class DesignError(ValueError):
    """Invalid optimiser configuration or empty result."""


class EmptyFrontError(DesignError):
    """No feasible individual was ever found."""


@dataclass(frozen=True)
class DesignPoint:
    """One evaluated design with its objectives and feasibility verdict."""

    cfg: ScissorConfig
    f_max: float  # N
    stroke: float  # m
    feasible: bool
    reasons: tuple[str, ...] = ()
    rank: int = 0
    crowding: float = 0.0


@dataclass(frozen=True)
class GaSettings:
    population_size: int = 200
    generations: int = 150
    pareto_fraction: float = 0.7
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None -> 1 per variable
    eta_crossover: float = 15.0
    eta_mutation: float = 20.0
    seed: int = 0
    stagnation_window: int = 30
    stagnation_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.population_size < 4 or self.population_size % 2:
            raise DesignError("population_size must be even and >= 4")
        if not (0.0 < self.pareto_fraction <= 1.0):
            raise DesignError("pareto_fraction must be in (0, 1]")
        if self.generations < 1:
            raise DesignError("generations must be >= 1")


@dataclass(frozen=True)
class ParetoFront:
    """Feasible, mutually non-dominated designs, sorted by rising f_max."""

    points: tuple[DesignPoint, ...]
    n_value: int

    def objectives(self) -> np.ndarray:
        return np.array([[p.f_max, p.stroke] for p in self.points])


def design_box(n: int, H: float = DEFAULT_H) -> np.ndarray:
    """Lower/upper bounds for the gene vector (a, b, theta_min, D)."""
    return np.array(
        [
            [AB_FLOOR, 0.5],
            [AB_FLOOR, 0.5],
            [scissor.THETA_BOX_LO, scissor.THETA_BOX_HI],
            [scissor.d_min(H, n), H],
        ]
    )


def evaluate_batch(
    x: np.ndarray, n: int, load: float = DEFAULT_LOAD, H: float = DEFAULT_H
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised objectives for gene rows (a, b, theta_min, D).

    Returns (F_max, S, feasible).  Designs that cannot gain H within the
    90 deg extension limit get infinite objectives and feasible=False.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    a, b, th, D = x[:, 0], x[:, 1], x[:, 2], x[:, 3]
    i = n - 1
    abar = 1.0 - a
    lam = abar**2 - (i + a) ** 2
    const = b**2 + (i + a) ** 2

    c0 = np.cos(th)
    rad0 = lam * c0 * c0 - 2.0 * b * abar * c0 + const
    den = b * abar * np.tan(th) - lam * np.sin(th)
    with np.errstate(divide="ignore", invalid="ignore"):
        F = n * load * np.sqrt(np.maximum(rad0, 0.0)) / np.abs(den)

    s_arg = np.sin(th) + H / (n * D)
    climb_ok = s_arg <= 1.0 + 1e-12
    tmax = np.arcsin(np.clip(s_arg, -1.0, 1.0))
    c1 = np.cos(tmax)
    rad1 = lam * c1 * c1 - 2.0 * b * abar * c1 + const
    S = D * (np.sqrt(np.maximum(rad1, 0.0)) - np.sqrt(np.maximum(rad0, 0.0)))

    bad = ~climb_ok | (rad0 < 0.0) | (rad1 < 0.0) | (den == 0.0) | ~np.isfinite(F)
    F = np.where(bad, np.inf, F)
    S = np.where(bad, np.inf, S)

    box = design_box(n, H)
    in_box = np.all((x >= box[:, 0] - 1e-12) & (x <= box[:, 1] + 1e-12), axis=1)
    feasible = ~bad & in_box & (F <= FORCE_CAP) & (S <= H)
    return F, S, feasible


def evaluate(cfg: ScissorConfig) -> DesignPoint:
    """Objectives and feasibility verdict for one design.

    Scissor-model singularities (toggle point, unreachable climb) are
    reported as infeasibility reasons rather than raised.
    """
    reasons = list(cfg.box_violations())
    try:
        fm = scissor.f_max(cfg)
        s = scissor.stroke(cfg)
    except ScissorError as err:
        return DesignPoint(
            cfg=cfg, f_max=math.inf, stroke=math.inf, feasible=False,
            reasons=tuple(reasons + [str(err)]),
        )
    if fm > FORCE_CAP:
        reasons.append(f"F_max {fm:.1f} N above {FORCE_CAP:.0f} N cap")
    if s > cfg.climb_height:
        reasons.append(f"stroke {s:.4f} m above H={cfg.climb_height} m cap")
    return DesignPoint(cfg=cfg, f_max=fm, stroke=s, feasible=not reasons, reasons=tuple(reasons))


def dominates(fa: float, sa: float, fb: float, sb: float) -> bool:
    """(fa, sa) dominates (fb, sb) under minimise-both with one strict."""
    return fa <= fb and sa <= sb and (fa < fb or sa < sb)


def non_dominated_sort(F: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Non-domination rank of every point (0 = best front)."""
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    m = len(F)
    if m == 0:
        return np.zeros(0, dtype=int)
    # Pairwise domination matrix: dom[i, j] -> i dominates j.
    le = (F[:, None] <= F[None, :]) & (S[:, None] <= S[None, :])
    lt = (F[:, None] < F[None, :]) | (S[:, None] < S[None, :])
    dom = le & lt
    n_dominators = dom.sum(axis=0)
    ranks = np.full(m, -1, dtype=int)
    current = np.where(n_dominators == 0)[0]
    r = 0
    remaining = n_dominators.copy()
    while current.size:
        ranks[current] = r
        removed = dom[current].sum(axis=0)
        remaining = remaining - removed
        remaining[current] = -1
        current = np.where(remaining == 0)[0]
        r += 1
    return ranks


def sort_points(points: list[DesignPoint]) -> list[DesignPoint]:
    """Attach non-domination ranks to a list of DesignPoints."""
    if not points:
        return []
    F = np.array([p.f_max for p in points])
    S = np.array([p.stroke for p in points])
    ranks = non_dominated_sort(F, S)
    return [replace(p, rank=int(r)) for p, r in zip(points, ranks)]


def crowding_distance(F: np.ndarray, S: np.ndarray) -> np.ndarray:
    """NSGA-II crowding distance within one front.

    Boundary points get +inf; interior points sum the normalised gaps to
    their neighbours per objective.  A flat objective contributes zero.
    """
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    m = len(F)
    if m <= 2:
        return np.full(m, np.inf)
    dist = np.zeros(m)
    for obj in (F, S):
        order = np.argsort(obj, kind="stable")
        span = obj[order[-1]] - obj[order[0]]
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        if span > 0.0:
            gaps = (obj[order[2:]] - obj[order[:-2]]) / span
            dist[order[1:-1]] += gaps
    return dist


def hypervolume(
    objectives: np.ndarray,
    reference: tuple[float, float] = REFERENCE_POINT,
    strict: bool = True,
) -> float:
    """Dominated area between a front and the reference point (2-D sweep).

    With strict=True every point must strictly dominate the reference;
    otherwise non-contributing points are skipped.  Dominated/duplicate
    points never change the result.
    """
    pts = np.atleast_2d(np.asarray(objectives, dtype=float))
    if pts.size == 0:
        return 0.0
    rf, rs = reference
    if strict and np.any((pts[:, 0] >= rf) | (pts[:, 1] >= rs)):
        raise DesignError("hypervolume: a point does not dominate the reference")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    area = 0.0
    prev_s = rs
    for f, s in pts[order]:
        if f >= rf or s >= prev_s:
            continue
        area += (rf - f) * (prev_s - s)
        prev_s = s
    return area


def _pareto_mask_2d(F: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Exact non-dominated mask for large 2-D point sets (sort + sweep).

    Keeps all copies of duplicated non-dominated objective pairs, matching
    the pairwise definition (identical points do not dominate each other).
    """
    m = len(F)
    keep = np.zeros(m, dtype=bool)
    order = np.lexsort((S, F))
    best_s = np.inf  # min S over strictly smaller F
    k = 0
    while k < m:
        # Group of equal F values; only the group's min-S entries survive,
        # and only if no smaller-F point has S <= theirs.
        j = k
        f = F[order[k]]
        while j < m and F[order[j]] == f:
            j += 1
        group = order[k:j]
        s_min = S[group].min()
        if s_min < best_s:
            keep[group[S[group] == s_min]] = True
            best_s = s_min
        k = j
    return keep


def _front_from_arrays(
    x: np.ndarray, F: np.ndarray, S: np.ndarray, n: int, load: float, H: float
) -> list[DesignPoint]:
    pts = []
    for row, f, s in zip(x, F, S):
        cfg = ScissorConfig(
            a=float(row[0]), b=float(row[1]), theta_min=float(row[2]), n=n,
            D=float(row[3]), load=load, climb_height=H,
        )
        pts.append(DesignPoint(cfg=cfg, f_max=float(f), stroke=float(s), feasible=True))
    return pts


def _sorted_front(points: list[DesignPoint], n: int) -> ParetoFront:
    pts = sorted(points, key=lambda p: (p.f_max, p.stroke))
    return ParetoFront(points=tuple(pts), n_value=n)


def grid_oracle(
    n: int, resolution: int = 25, load: float = DEFAULT_LOAD, H: float = DEFAULT_H
) -> ParetoFront:
    """Exhaustive sweep of the design box, exact non-dominated filter.

    Independent of the GA: no sampling, no variation operators.  Serves as
    the quality reference for GA fronts.
    """
    if resolution < 2:
        raise DesignError("resolution must be >= 2")
    box = design_box(n, H)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    grids = np.meshgrid(*axes, indexing="ij")
    x = np.stack([g.ravel() for g in grids], axis=1)
    F, S, feasible = evaluate_batch(x, n, load, H)
    if not feasible.any():
        raise EmptyFrontError(f"grid oracle found no feasible design for n={n}")
    x, F, S = x[feasible], F[feasible], S[feasible]
    keep = _pareto_mask_2d(F, S)
    points = _front_from_arrays(x[keep], F[keep], S[keep], n, load, H)
    return _sorted_front(points, n)


def _sbx_pair(
    p1: np.ndarray, p2: np.ndarray, box: np.ndarray, eta: float, rate: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulated-binary crossover of one parent pair, children clipped."""
    c1, c2 = p1.copy(), p2.copy()
    if rng.random() < rate:
        for k in range(len(p1)):
            if rng.random() > 0.5 or abs(p1[k] - p2[k]) < 1e-14:
                continue
            u = rng.random()
            beta = (2 * u) ** (1 / (eta + 1)) if u <= 0.5 else (1 / (2 * (1 - u))) ** (1 / (eta + 1))
            c1[k] = 0.5 * ((1 + beta) * p1[k] + (1 - beta) * p2[k])
            c2[k] = 0.5 * ((1 - beta) * p1[k] + (1 + beta) * p2[k])
    np.clip(c1, box[:, 0], box[:, 1], out=c1)
    np.clip(c2, box[:, 0], box[:, 1], out=c2)
    return c1, c2


def _poly_mutate(
    x: np.ndarray, box: np.ndarray, eta: float, rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Polynomial mutation, per-variable probability, clipped to the box."""
    y = x.copy()
    span = box[:, 1] - box[:, 0]
    for k in range(len(x)):
        if rng.random() >= rate:
            continue
        u = rng.random()
        if u < 0.5:
            delta = (2 * u) ** (1 / (eta + 1)) - 1
        else:
            delta = 1 - (2 * (1 - u)) ** (1 / (eta + 1))
        y[k] = x[k] + delta * span[k]
    np.clip(y, box[:, 0], box[:, 1], out=y)
    return y


def variation(
    parents: tuple[np.ndarray, np.ndarray],
    settings: GaSettings,
    box: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """SBX + polynomial mutation producing two children inside the box."""
    rate = settings.mutation_rate if settings.mutation_rate is not None else 1.0 / box.shape[0]
    c1, c2 = _sbx_pair(parents[0], parents[1], box, settings.eta_crossover,
                       settings.crossover_rate, rng)
    c1 = _poly_mutate(c1, box, settings.eta_mutation, rate, rng)
    c2 = _poly_mutate(c2, box, settings.eta_mutation, rate, rng)
    return c1, c2


def _tournament(
    ranks: np.ndarray, crowd: np.ndarray, rng: np.random.Generator
) -> int:
    i, j = rng.integers(0, len(ranks), size=2)
    if ranks[i] < ranks[j]:
        return int(i)
    if ranks[j] < ranks[i]:
        return int(j)
    return int(i) if crowd[i] >= crowd[j] else int(j)


def _survivor_selection(
    x: np.ndarray, F: np.ndarray, S: np.ndarray, pop_size: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rank + crowding truncation of the combined parent/child pool."""
    ranks = non_dominated_sort(F, S)
    order = []
    for r in range(ranks.max() + 1):
        idx = np.where(ranks == r)[0]
        if len(order) + len(idx) <= pop_size:
            order.extend(idx.tolist())
        else:
            crowd = crowding_distance(F[idx], S[idx])
            pick = idx[np.argsort(-crowd, kind="stable")][: pop_size - len(order)]
            order.extend(pick.tolist())
        if len(order) >= pop_size:
            break
    sel = np.array(order[:pop_size])
    ranks_sel = ranks[sel]
    crowd_sel = np.zeros(len(sel))
    for r in np.unique(ranks_sel):
        idx = np.where(ranks_sel == r)[0]
        crowd_sel[idx] = crowding_distance(F[sel][idx], S[sel][idx])
    return x[sel], F[sel], S[sel], ranks_sel, crowd_sel


class _Archive:
    """Feasible non-dominated set over everything evaluated so far.

    Adding points can only grow the dominated area, so the archive's
    hypervolume is non-decreasing across generations.
    """

    def __init__(self) -> None:
        self.x = np.zeros((0, 4))
        self.F = np.zeros(0)
        self.S = np.zeros(0)

    def add(self, x: np.ndarray, F: np.ndarray, S: np.ndarray, feasible: np.ndarray) -> None:
        if not feasible.any():
            return
        self.x = np.vstack([self.x, x[feasible]])
        self.F = np.concatenate([self.F, F[feasible]])
        self.S = np.concatenate([self.S, S[feasible]])
        keep = _pareto_mask_2d(self.F, self.S)
        self.x, self.F, self.S = self.x[keep], self.F[keep], self.S[keep]

    def hypervolume(self) -> float:
        if len(self.F) == 0:
            return 0.0
        return hypervolume(np.stack([self.F, self.S], axis=1), strict=False)


def run(
    n: int,
    settings: GaSettings | None = None,
    load: float = DEFAULT_LOAD,
    H: float = DEFAULT_H,
    hv_history: list[float] | None = None,
) -> ParetoFront:
    """Evolve designs for one level count n and return the final front.

    Deterministic for a fixed seed.  The returned front is the archive's
    feasible rank-0 set, truncated to pareto_fraction * population_size by
    crowding distance and sorted by rising f_max.
    """
    settings = settings or GaSettings()
    box = design_box(n, H)
    rng = np.random.default_rng(settings.seed)

    pop = rng.uniform(box[:, 0], box[:, 1], size=(settings.population_size, 4))
    F, S, feas = evaluate_batch(pop, n, load, H)
    archive = _Archive()
    archive.add(pop, F, S, feas)
    ranks = non_dominated_sort(F, S)
    crowd = np.zeros(len(pop))
    for r in np.unique(ranks):
        idx = np.where(ranks == r)[0]
        crowd[idx] = crowding_distance(F[idx], S[idx])

    stall = 0
    last_hv = archive.hypervolume()
    if hv_history is not None:
        hv_history.append(last_hv)

    for _ in range(settings.generations):
        children = np.empty_like(pop)
        for k in range(0, settings.population_size, 2):
            i = _tournament(ranks, crowd, rng)
            j = _tournament(ranks, crowd, rng)
            c1, c2 = variation((pop[i], pop[j]), settings, box, rng)
            children[k], children[k + 1] = c1, c2
        Fc, Sc, feas_c = evaluate_batch(children, n, load, H)
        archive.add(children, Fc, Sc, feas_c)

        pool_x = np.vstack([pop, children])
        pool_F = np.concatenate([F, Fc])
        pool_S = np.concatenate([S, Sc])
        pop, F, S, ranks, crowd = _survivor_selection(pool_x, pool_F, pool_S,
                                                      settings.population_size)

        hv = archive.hypervolume()
        if hv_history is not None:
            hv_history.append(hv)
        stall = stall + 1 if hv - last_hv <= settings.stagnation_tol else 0
        last_hv = hv
        if stall >= settings.stagnation_window:
            break

    if len(archive.F) == 0:
        raise EmptyFrontError(f"no feasible design found for n={n}")

    # Crowding-truncate the archive front to the requested fraction.
    limit = max(1, int(round(settings.pareto_fraction * settings.population_size)))
    xf, Ff, Sf = archive.x, archive.F, archive.S
    if len(Ff) > limit:
        crowd_f = crowding_distance(Ff, Sf)
        pick = np.argsort(-crowd_f, kind="stable")[:limit]
        xf, Ff, Sf = xf[pick], Ff[pick], Sf[pick]
    points = _front_from_arrays(xf, Ff, Sf, n, load, H)
    return _sorted_front(points, n)


DATASHEET_COLUMNS = ["n", "a", "b", "theta_min_deg", "D_m", "F_max_N", "S_m", "t_mm"]


def export_datasheet(
    fronts: list[ParetoFront], path: str, thickness_mm: float = 3.0
) -> None:
    """Write front designs as a datasheet CSV (one row per design).

    The link-thickness column is an annotation (default 3 mm steel), kept
    for comparison against commercial actuator tables.
    """
    if not fronts or all(len(f.points) == 0 for f in fronts):
        raise EmptyFrontError("refusing to write an empty datasheet")
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATASHEET_COLUMNS)
        for front in fronts:
            for p in front.points:
                w.writerow(
                    [
                        front.n_value,
                        f"{p.cfg.a:.6g}",
                        f"{p.cfg.b:.6g}",
                        f"{math.degrees(p.cfg.theta_min):.6g}",
                        f"{p.cfg.D:.6g}",
                        f"{p.f_max:.6g}",
                        f"{p.stroke:.6g}",
                        f"{thickness_mm:.6g}",
                    ]
                )
    os.replace(tmp, path)


def load_datasheet(path: str) -> list[dict[str, float]]:
    """Read back a datasheet CSV into numeric rows."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append({k: float(v) for k, v in rec.items()})
    return rows
