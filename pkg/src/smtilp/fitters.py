"""Template-aware MaxSMT fitting for the builtin backend.

Instances built from a clause carry their binding tables as provenance
(`MaxSmtInstance.structure`); this module fits parameters directly on that
data: interval/box families by exact boundary-candidate sweeps, halfplanes by
candidate-normal sweeps over point pairs/triples (capped, then flagged
heuristic), remaining nonlinear families by grid + exact inner sweeps or block
coordinate descent. Positive coverage is hard unless the instance demoted
positives to weighted softs.

Every verdict is re-derived from concrete vectorized evaluation of the final
parameters, so a fitter bug cannot silently misreport coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import templates as T
from .backend import MaxSmtInstance, SolveResult

PLACEMENT_PAD = 0.5  # boundary offset when no opposing sample exists
SWEEP_CAP = 2000  # candidate separators on the pair/triple sweep exact path


@dataclass
class LiteralFit:
    """One parametric literal's stacked argument rows (aligned across literals)."""

    template_id: str
    prefix: str
    rows: np.ndarray  # (n_rows, arity)


@dataclass
class FitStructure:
    """Binding tables for one clause over one dataset."""

    literals: list[LiteralFit]
    example_ids: np.ndarray  # (n_rows,) int
    is_pos: np.ndarray  # (n_examples,) bool
    pos_hard: bool = True
    pos_weight: float = 10.0
    neg_weight: float = 1.0
    uncoverable_pos: int = 0

    @property
    def n_examples(self) -> int:
        return int(self.is_pos.shape[0])


def coverage_mask(struct: FitStructure, params: list[dict[str, float]]) -> np.ndarray:
    """(n_examples,) bool: example covered by some binding satisfying all literals."""
    n_rows = struct.example_ids.shape[0]
    sat = np.ones(n_rows, dtype=bool)
    for lit, p in zip(struct.literals, params):
        sat &= T.evaluate_rows(lit.template_id, p, lit.rows)
    covered = np.zeros(struct.n_examples, dtype=bool)
    np.logical_or.at(covered, struct.example_ids, sat)
    return covered


def objective(struct: FitStructure, covered: np.ndarray) -> tuple[bool, float]:
    """(hard constraints satisfied, total satisfied soft weight)."""
    pos_cov = covered & struct.is_pos
    neg_rej = ~covered & ~struct.is_pos
    weight = struct.neg_weight * float(neg_rej.sum())
    hard_ok = True
    if struct.pos_hard:
        hard_ok = bool(pos_cov.sum() == struct.is_pos.sum()) and struct.uncoverable_pos == 0
    else:
        weight += struct.pos_weight * float(pos_cov.sum())
    return hard_ok, weight


# --- 1-D placement helpers -------------------------------------------------------


def _cuts(values: np.ndarray) -> np.ndarray:
    """Candidate boundaries strictly between (and beyond) the sorted values."""
    vs = np.unique(values)
    if vs.size == 0:
        return np.array([0.0])
    mids = (vs[:-1] + vs[1:]) / 2.0
    return np.concatenate(([vs[0] - PLACEMENT_PAD], mids, [vs[-1] + PLACEMENT_PAD]))


@dataclass
class Placed:
    value: float | tuple[float, float]
    weight: float
    feasible: bool = True
    degenerate: bool = False


def place_threshold(
    fpos: np.ndarray,
    fneg: np.ndarray,
    neg_w: float,
    direction: str,  # sat iff feat <op> theta, op in le/lt/ge/gt
    hard: bool,
    pos_w: float,
    domain: tuple[float, float],
) -> Placed:
    lo_d, hi_d = domain
    sat_low = direction in ("le", "lt")  # satisfied side is feat below theta
    cuts = _cuts(np.concatenate([fpos, fneg]))
    cuts = cuts[(cuts >= lo_d) & (cuts <= hi_d)]
    if cuts.size == 0:
        cuts = np.array([np.clip(0.0, lo_d, hi_d)])
    if hard:
        if fpos.size == 0:
            allowed = cuts
        elif sat_low:
            need = fpos.max()
            allowed = cuts[cuts >= need] if direction == "le" else cuts[cuts > need]
        else:
            need = fpos.min()
            allowed = cuts[cuts <= need] if direction == "ge" else cuts[cuts < need]
        if allowed.size == 0:
            edge = hi_d if sat_low else lo_d
            ok = fpos.size == 0 or (
                (fpos.max() <= edge) if sat_low else (fpos.min() >= edge)
            )
            if not ok:
                return Placed(0.0, 0.0, feasible=False)
            allowed = np.array([edge])
        if sat_low:
            rej = (fneg[None, :] > allowed[:, None]).sum(axis=1)
            # among ties, widen toward the domain edge (margin on test data)
            best = np.flatnonzero(rej == rej.max())[-1]
        else:
            rej = (fneg[None, :] < allowed[:, None]).sum(axis=1)
            best = np.flatnonzero(rej == rej.max())[0]
        return Placed(float(allowed[best]), neg_w * float(rej.max() if rej.size else 0))
    # soft positives: maximize pos_w*covered + neg_w*rejected over all cuts
    if sat_low:
        pos_c = (fpos[None, :] <= cuts[:, None]).sum(axis=1)
        neg_r = (fneg[None, :] > cuts[:, None]).sum(axis=1)
    else:
        pos_c = (fpos[None, :] >= cuts[:, None]).sum(axis=1)
        neg_r = (fneg[None, :] < cuts[:, None]).sum(axis=1)
    score = pos_w * pos_c + neg_w * neg_r
    best = int(np.argmax(score))
    return Placed(float(cuts[best]), float(score[best]))


def place_interval(
    fpos: np.ndarray,
    fneg: np.ndarray,
    neg_w: float,
    hard: bool,
    pos_w: float,
    domain: tuple[float, float],
) -> Placed:
    """Best (lo, hi): sat iff lo <? feat <? hi (midpoint placement makes the
    strict/non-strict distinction immaterial on distinct data)."""
    lo_d, hi_d = domain
    cuts = np.clip(_cuts(np.concatenate([fpos, fneg])), lo_d, hi_d)
    cuts = np.unique(cuts)
    if hard:
        if fpos.size == 0:
            return Placed((lo_d, hi_d), neg_w * float(fneg.size), degenerate=True)
        lo_allowed = cuts[cuts < fpos.min()]
        hi_allowed = cuts[cuts > fpos.max()]
        if lo_allowed.size == 0 or hi_allowed.size == 0:
            if lo_d < fpos.min() and hi_d > fpos.max():
                lo_allowed = lo_allowed if lo_allowed.size else np.array([lo_d])
                hi_allowed = hi_allowed if hi_allowed.size else np.array([hi_d])
            else:
                return Placed((0.0, 0.0), 0.0, feasible=False)
        lo_rej = (fneg[None, :] <= lo_allowed[:, None]).sum(axis=1)
        hi_rej = (fneg[None, :] >= hi_allowed[:, None]).sum(axis=1)
        if fneg.size == 0:
            # widest in-bounds interval when nothing opposes
            return Placed(
                (float(lo_d), float(hi_d)), 0.0, degenerate=fpos.max() == fpos.min()
            )
        bi = int(np.flatnonzero(lo_rej == lo_rej.max())[0])  # widest among ties
        bj = int(np.flatnonzero(hi_rej == hi_rej.max())[-1])
        return Placed(
            (float(lo_allowed[bi]), float(hi_allowed[bj])),
            neg_w * float(lo_rej[bi] + hi_rej[bj]),
            degenerate=fpos.max() == fpos.min(),
        )
    # soft: maximize D(j) - D(i) over cut pairs i <= j, Kadane-style
    pos_in = (fpos[None, :] < cuts[:, None]).sum(axis=1).astype(float)
    neg_in = (fneg[None, :] < cuts[:, None]).sum(axis=1).astype(float)
    d = pos_w * pos_in - neg_w * neg_in
    base = neg_w * float(fneg.size)
    best_val = -math.inf
    best_pair = (0, 0)
    min_i = 0
    for j in range(len(cuts)):
        if d[j] - d[min_i] > best_val:
            best_val = d[j] - d[min_i]
            best_pair = (min_i, j)
        if d[j] < d[min_i]:
            min_i = j
    lo, hi = float(cuts[best_pair[0]]), float(cuts[best_pair[1]])
    return Placed((lo, hi), base + best_val, degenerate=lo >= hi)


# --- family registry ---------------------------------------------------------------

# threshold families: sat iff feature(args) <op> f(theta); theta mapped to params
_THRESHOLD = {
    "influence_threshold": (lambda A: A[:, 0], "gt", (-100.0, 100.0),
                            lambda th: {"tau": th}),
    "circle": (lambda A: A[:, 0] ** 2 + A[:, 1] ** 2, "le", (0.0, 10000.0),
               lambda th: {"r": math.sqrt(max(th, 0.0))}),
    "circle_outside": (lambda A: A[:, 0] ** 2 + A[:, 1] ** 2, "ge", (0.0, 10000.0),
                       lambda th: {"r": math.sqrt(max(th, 0.0))}),
    "distance_threshold": (
        lambda A: (A[:, 0] - A[:, 2]) ** 2 + (A[:, 1] - A[:, 3]) ** 2,
        "le", (0.0, 10000.0), lambda th: {"d": math.sqrt(max(th, 0.0))}),
    "hyperbola_side": (lambda A: A[:, 0] ** 2 - A[:, 1] ** 2, "le", (-100.0, 100.0),
                       lambda th: {"c": th}),
    "product_threshold": (lambda A: A[:, 0] * A[:, 1], "lt", (-100.0, 100.0),
                          lambda th: {"c": th}),
    "collinear3pt": (
        lambda A: np.abs(
            (A[:, 2] - A[:, 0]) * (A[:, 5] - A[:, 1])
            - (A[:, 3] - A[:, 1]) * (A[:, 4] - A[:, 0])
        ),
        "le", (1e-9, 0.5), lambda th: {"eps": th}),
    "abs_box": (lambda A: np.maximum(np.abs(A[:, 0]), np.abs(A[:, 1])), "le",
                (0.0, 100.0), lambda th: {"s": th}),
}

_INTERVAL = {
    "interval1d": (lambda A: A[:, 0], (-100.0, 100.0),
                   lambda lo, hi: {"lo": lo, "hi": hi}),
    "annulus": (lambda A: A[:, 0] ** 2 + A[:, 1] ** 2, (0.0, 10000.0),
                lambda lo, hi: {"r_min": math.sqrt(max(lo, 0.0)),
                                "r_max": math.sqrt(max(hi, 0.0))}),
}

_NOPARAM = {"between3pt"} | set(T.VARCMP_IDS)


@dataclass
class _Rows:
    """Per-example reduced or raw rows handed to a single-literal fitter."""

    pos: np.ndarray
    neg: np.ndarray
    exact: bool  # reduction preserved any-binding semantics exactly


def _reduce(
    struct: FitStructure, lit: LiteralFit, alive: np.ndarray, reducer: str
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Reduce alive rows per example. reducer: 'min' | 'max' | 'first'.

    Returns (pos rows, neg rows, has_rows mask, exact?). For 'first' the rows
    are full argument rows; otherwise 1-D derived features must be computed by
    the caller beforehand (lit.rows already replaced by a feature column).
    """
    ids = struct.example_ids[alive]
    n = struct.n_examples
    if reducer in ("min", "max"):
        feats = lit.rows[alive, 0]
        init = math.inf if reducer == "min" else -math.inf
        red = np.full(n, init)
        (np.minimum if reducer == "min" else np.maximum).at(red, ids, feats)
        has = np.isfinite(red)
        return red, has, ids, True
    # first alive row per example
    first = np.full(n, -1, dtype=int)
    alive_idx = np.flatnonzero(alive)
    for i in alive_idx[::-1]:
        first[struct.example_ids[i]] = i
    has = first >= 0
    multi = np.bincount(ids, minlength=n) > 1
    return first, has, ids, not bool(multi.any())


def _fit_single_literal(
    struct: FitStructure,
    lit: LiteralFit,
    alive: np.ndarray,
    rng: np.random.Generator,
) -> tuple[dict[str, float] | None, bool, bool]:
    """Best params for one literal given rows alive under the other literals.

    Returns (params | None if hard-infeasible, exact?, degenerate?).
    """
    tid = lit.template_id
    n = struct.n_examples
    if tid in _NOPARAM:
        return {}, True, False

    def split(feat_red: np.ndarray, has: np.ndarray):
        pos_mask = struct.is_pos & has
        neg_mask = ~struct.is_pos & has
        return feat_red[pos_mask], feat_red[neg_mask]

    if tid in _THRESHOLD:
        derive, direction, domain, assemble = _THRESHOLD[tid]
        feats = derive(lit.rows)
        reducer = "min" if direction in ("le", "lt") else "max"
        red, has, _, _ = _reduce(
            struct, LiteralFit(tid, lit.prefix, feats[:, None]), alive, reducer
        )
        # positives with no alive row are uncoverable by this literal
        if struct.pos_hard and bool((struct.is_pos & ~has).any()):
            return None, True, False
        fpos, fneg = split(red, has)
        placed = place_threshold(
            fpos, fneg, struct.neg_weight, direction, struct.pos_hard,
            struct.pos_weight, domain,
        )
        if not placed.feasible:
            return None, True, False
        return assemble(placed.value), True, placed.degenerate

    if tid in _INTERVAL:
        derive, domain, assemble = _INTERVAL[tid]
        feats = derive(lit.rows)
        first, has, ids, exact = _reduce(struct, lit, alive, "first")
        if struct.pos_hard and bool((struct.is_pos & ~has).any()):
            return None, True, False
        red = np.full(n, np.nan)
        red[has] = feats[first[has]]
        fpos, fneg = split(red, has)
        placed = place_interval(
            fpos, fneg, struct.neg_weight, struct.pos_hard, struct.pos_weight, domain
        )
        if not placed.feasible:
            return None, True, False
        lo, hi = placed.value
        return assemble(lo, hi), exact, placed.degenerate

    first, has, ids, exact = _reduce(struct, lit, alive, "first")
    if struct.pos_hard and bool((struct.is_pos & ~has).any()):
        return None, True, False
    rows = np.full((n, lit.rows.shape[1]), np.nan)
    rows[has] = lit.rows[first[has]]
    P = rows[struct.is_pos & has]
    N = rows[~struct.is_pos & has]
    if tid == "halfplane2d":
        params, swept_all = _fit_halfplane2d(P, N, struct, rng)
        return params, exact and swept_all, False
    if tid == "halfplane3d":
        params, swept_all = _fit_plane3(P, N, struct, rng, kind="halfplane3d")
        return params, exact and swept_all, False
    if tid == "parabola":
        params, swept_all = _fit_plane3(P, N, struct, rng, kind="parabola")
        return params, False, False
    if tid == "box2d":
        return _fit_box2d(P, N, struct), exact, False
    if tid == "sinusoid":
        return _fit_grid_1d(P, N, struct, tid), False, False
    if tid == "quad_strip":
        return _fit_grid_1d(P, N, struct, tid), False, False
    if tid == "ellipse":
        return _fit_ellipse(P, N, struct), False, False
    return None, False, False  # unknown family: caller falls back


def _score_masks(struct, pos_ok: np.ndarray, neg_bad: np.ndarray) -> float:
    w = struct.neg_weight * float((~neg_bad).sum())
    if not struct.pos_hard:
        w += struct.pos_weight * float(pos_ok.sum())
    return w


def _fit_halfplane2d(P, N, struct, rng) -> tuple[dict[str, float] | None, bool]:
    """Candidate normals from point pairs (plus an angle grid), threshold swept."""
    pts = np.vstack([P, N]) if N.size else P
    if pts.shape[0] == 0:
        return {"a": 0.0, "b": 1.0, "t": 100.0}, True
    angles = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    dirs = [np.stack([np.cos(angles), np.sin(angles)], axis=1)]
    n_pts = pts.shape[0]
    pairs_total = n_pts * (n_pts - 1) // 2
    swept_all = pairs_total <= SWEEP_CAP
    if swept_all:
        ii, jj = np.triu_indices(n_pts, k=1)
    else:
        ii = rng.integers(0, n_pts, SWEEP_CAP)
        jj = rng.integers(0, n_pts, SWEEP_CAP)
    d = pts[jj] - pts[ii]
    keep = (np.abs(d) > 1e-12).any(axis=1)
    normals = np.stack([-d[keep, 1], d[keep, 0]], axis=1)
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    dirs.append(normals / norms)
    D = np.vstack(dirs)
    D = np.vstack([D, -D])
    return _sweep_directions(P, N, D, struct, assemble="halfplane2d"), swept_all


def _fit_plane3(P, N, struct, rng, kind: str) -> tuple[dict[str, float] | None, bool]:
    """3D separating planes from point triples (halfplane3d) or parabola fits
    in (x^2, x, y) feature space."""
    if kind == "parabola":
        feat = lambda M: np.stack([M[:, 0] ** 2, M[:, 0], M[:, 1]], axis=1)
        P3, N3 = feat(P), (feat(N) if N.size else N.reshape(0, 3))
    else:
        P3, N3 = P, N
    pts = np.vstack([P3, N3]) if N3.size else P3
    if pts.shape[0] == 0:
        return ({"a": 0.0, "b": 0.0, "c": -100.0} if kind == "parabola"
                else {"a": 0.0, "b": 0.0, "c": 1.0, "d": 100.0}), True
    n_pts = pts.shape[0]
    total = n_pts * (n_pts - 1) * (n_pts - 2) // 6
    swept_all = total <= SWEEP_CAP
    if swept_all and n_pts >= 3:
        idx = np.array(
            [(i, j, k) for i in range(n_pts) for j in range(i + 1, n_pts)
             for k in range(j + 1, n_pts)]
        )
    else:
        idx = rng.integers(0, n_pts, (SWEEP_CAP, 3))
        idx = idx[(idx[:, 0] != idx[:, 1]) & (idx[:, 1] != idx[:, 2]) & (idx[:, 0] != idx[:, 2])]
    normals = []
    if idx.size:
        u = pts[idx[:, 1]] - pts[idx[:, 0]]
        v = pts[idx[:, 2]] - pts[idx[:, 0]]
        cr = np.cross(u, v)
        keep = np.linalg.norm(cr, axis=1) > 1e-9
        cr = cr[keep]
        if cr.size:
            normals.append(cr / np.linalg.norm(cr, axis=1, keepdims=True))
    # coarse sphere grid for robustness
    g = np.linspace(-1, 1, 7)
    grid = np.array([(a, b, c) for a in g for b in g for c in g if (a, b, c) != (0, 0, 0)])
    normals.append(grid / np.linalg.norm(grid, axis=1, keepdims=True))
    D = np.vstack(normals)
    D = np.vstack([D, -D])
    if kind == "parabola":
        # constraint y >= a x^2 + b x + c, i.e. (a, b, -1)·(u, v, y) <= -c
        keep = D[:, 2] < -1e-6
        D = D[keep] / (-D[keep, 2:3])  # scale so z-coefficient is -1
        if D.size == 0:
            return None, swept_all
        return _sweep_directions(P3, N3, D, struct, assemble="parabola"), swept_all
    return _sweep_directions(P3, N3, D, struct, assemble="halfplane3d"), swept_all


def _recenter_plane(
    d: np.ndarray, t: float, P: np.ndarray, N: np.ndarray
) -> tuple[np.ndarray, float]:
    """Max-margin LP recentering of a separator, keeping its induced split.

    Positives stay on the <= side; negatives currently rejected stay rejected.
    Greatly reduces the tilt error of sampled candidate planes.
    """
    from scipy.optimize import linprog

    k = d.shape[0]
    rejected = N[(N @ d) > t] if N.size else N.reshape(0, k)
    rows = []
    rhs = []
    for p in P:
        rows.append(list(p) + [-1.0, 1.0])  # w·p - t + δ <= 0
        rhs.append(0.0)
    for n in rejected:
        rows.append(list(-n) + [1.0, 1.0])  # -(w·n) + t + δ <= 0
        rhs.append(0.0)
    if not rows:
        return d, t
    c = np.zeros(k + 2)
    c[-1] = -1.0  # maximize δ
    bounds = [(-1.0, 1.0)] * k + [(-1e4, 1e4), (0.0, 50.0)]
    res = linprog(c, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds,
                  method="highs")
    if not res.success or res.x[-1] <= 1e-9:
        return d, t
    w = res.x[:k]
    if np.linalg.norm(w) < 1e-9:
        return d, t
    return w, float(res.x[k])


def _sweep_directions(P, N, D, struct, assemble: str) -> dict[str, float] | None:
    """For each direction, place the best threshold; return the best assembly."""
    proj_p = P @ D.T if P.size else np.zeros((0, D.shape[0]))
    proj_n = N @ D.T if N.size else np.zeros((0, D.shape[0]))
    hard = struct.pos_hard
    if hard and P.size:
        t0 = proj_p.max(axis=0)
        rej = (proj_n > t0[None, :] + 1e-12).sum(axis=0) if N.size else np.zeros(D.shape[0])
        score = rej.astype(float) * struct.neg_weight
    else:
        # soft: evaluate a per-direction optimal cut by sorting (vector loop)
        score = np.full(D.shape[0], -np.inf)
        t0 = np.zeros(D.shape[0])
        for k in range(D.shape[0]):
            placed = place_threshold(
                proj_p[:, k], proj_n[:, k], struct.neg_weight, "le", False,
                struct.pos_weight, (-1e9, 1e9),
            )
            score[k] = placed.weight
            t0[k] = placed.value
    best = int(np.argmax(score))
    fp, fn = proj_p[:, best], proj_n[:, best]
    placed = place_threshold(
        fp, fn, struct.neg_weight, "le", hard, struct.pos_weight, (-1e9, 1e9)
    )
    if not placed.feasible:
        return None
    d = D[best]
    t = float(placed.value)
    if hard and P.size:
        if assemble == "parabola":
            d2, t2 = _recenter_plane(d, t, P, N)
            if d2[2] < -1e-6:  # keep the y-coefficient solvable
                d, t = d2 / -d2[2], t2 / -d2[2]
        else:
            d, t = _recenter_plane(d, t, P, N)
    scale = max(1.0, *(abs(x) / 100.0 for x in (*d, t)))
    d, t = d / scale, t / scale
    if assemble == "halfplane2d":
        return {"a": float(d[0]), "b": float(d[1]), "t": t}
    if assemble == "halfplane3d":
        return {"a": float(d[0]), "b": float(d[1]), "c": float(d[2]), "d": t}
    # parabola: direction is (a, b, -1); a x^2 + b x - y <= t  ->  c = -t
    return {
        "a": float(np.clip(d[0], -5.0, 5.0)),
        "b": float(np.clip(d[1], -100.0, 100.0)),
        "c": float(np.clip(-t, -100.0, 100.0)),
    }


def _fit_box2d(P, N, struct) -> dict[str, float] | None:
    if struct.pos_hard and P.size == 0:
        return None
    if P.size:
        x0, x1 = P[:, 0].min(), P[:, 0].max()
        y0, y1 = P[:, 1].min(), P[:, 1].max()
    else:
        x0 = x1 = y0 = y1 = 0.0
    if struct.pos_hard:
        # tightest box around the positives, boundaries at midpoints
        def side(bound, vals, lower: bool):
            beyond = vals[vals < bound] if lower else vals[vals > bound]
            if beyond.size == 0:
                return bound - PLACEMENT_PAD if lower else bound + PLACEMENT_PAD
            nearest = beyond.max() if lower else beyond.min()
            return (bound + nearest) / 2.0

        nx = N[:, 0] if N.size else np.array([])
        ny = N[:, 1] if N.size else np.array([])
        return {
            "x_min": float(np.clip(side(x0, nx, True), -100, 100)),
            "x_max": float(np.clip(side(x1, nx, False), -100, 100)),
            "y_min": float(np.clip(side(y0, ny, True), -100, 100)),
            "y_max": float(np.clip(side(y1, ny, False), -100, 100)),
        }
    # soft positives: alternate exact interval sweeps per axis
    params = {"x_min": -100.0, "x_max": 100.0, "y_min": -100.0, "y_max": 100.0}
    for _ in range(3):
        for axis, (klo, khi) in enumerate((("x_min", "x_max"), ("y_min", "y_max"))):
            other = 1 - axis
            olo, ohi = (params["y_min"], params["y_max"]) if axis == 0 else (
                params["x_min"], params["x_max"])
            pin = P[(P[:, other] >= olo) & (P[:, other] <= ohi)] if P.size else P
            nin = N[(N[:, other] >= olo) & (N[:, other] <= ohi)] if N.size else N
            placed = place_interval(
                pin[:, axis] if pin.size else np.array([]),
                nin[:, axis] if nin.size else np.array([]),
                struct.neg_weight, False, struct.pos_weight, (-100.0, 100.0),
            )
            params[klo], params[khi] = placed.value
    return params


def _fit_grid_1d(P, N, struct, tid: str) -> dict[str, float] | None:
    """Grid over the shape parameter with an exact inner sweep per grid point."""
    if tid == "sinusoid":
        shape_name, inner = "omega", "threshold"
        grid = np.linspace(0.1, 10.0, 512)
    else:  # quad_strip
        shape_name, inner = "a", "interval"
        grid = np.linspace(-5.0, 5.0, 256)
    best: tuple[float, dict[str, float]] | None = None
    for _ in range(3):
        for s in grid:
            if tid == "sinusoid":
                mp = P[:, 1] - np.sin(s * P[:, 0]) if P.size else np.array([])
                mn = N[:, 1] - np.sin(s * N[:, 0]) if N.size else np.array([])
                placed = place_threshold(
                    mp, mn, struct.neg_weight, "ge", struct.pos_hard,
                    struct.pos_weight, (-100.0, 100.0),
                )
                if not placed.feasible:
                    continue
                cand = {"omega": float(s), "phi": float(placed.value)}
            else:
                sp = P[:, 1] - s * P[:, 0] ** 2 if P.size else np.array([])
                sn = N[:, 1] - s * N[:, 0] ** 2 if N.size else np.array([])
                placed = place_interval(
                    sp, sn, struct.neg_weight, struct.pos_hard,
                    struct.pos_weight, (-100.0, 100.0),
                )
                if not placed.feasible:
                    continue
                lo, hi = placed.value
                cand = {"a": float(s), "lo": float(lo), "hi": float(hi)}
            if best is None or placed.weight > best[0]:
                best = (placed.weight, cand)
        if best is None:
            break
        center = best[1][shape_name]
        span = (grid[-1] - grid[0]) / 16
        grid = np.linspace(
            max(grid[0], center - span), min(grid[-1], center + span), 64
        )
    return None if best is None else best[1]


def _fit_ellipse(P, N, struct) -> dict[str, float] | None:
    def crit(M, a_or_b_fixed: float, fix_b: bool) -> np.ndarray:
        # required semi-axis so the row lies inside, inf when impossible
        if fix_b:
            rest = 1.0 - (M[:, 1] / a_or_b_fixed) ** 2
            num = np.abs(M[:, 0])
        else:
            rest = 1.0 - (M[:, 0] / a_or_b_fixed) ** 2
            num = np.abs(M[:, 1])
        out = np.full(M.shape[0], np.inf)
        ok = rest > 1e-12
        out[ok] = num[ok] / np.sqrt(rest[ok])
        return out

    best: tuple[float, dict[str, float]] | None = None
    for b0 in np.geomspace(0.3, 30.0, 16):
        a, b = 1.0, float(b0)
        for _ in range(4):
            for fix_b in (True, False):
                fixed = b if fix_b else a
                cp = crit(P, fixed, fix_b) if P.size else np.array([])
                cn = crit(N, fixed, fix_b) if N.size else np.array([])
                finite_p = cp[np.isfinite(cp)]
                if struct.pos_hard and finite_p.size < cp.size:
                    a = b = -1.0  # some positive impossible at this shape
                    break
                placed = place_threshold(
                    finite_p, cn[np.isfinite(cn)], struct.neg_weight, "ge",
                    struct.pos_hard, struct.pos_weight, (0.1, 100.0),
                )
                if not placed.feasible:
                    a = b = -1.0
                    break
                if fix_b:
                    a = float(placed.value)
                else:
                    b = float(placed.value)
            if a < 0:
                break
        if a < 0:
            continue
        params = {"a": a, "b": b}
        sat_p = T.evaluate_rows("ellipse", params, P) if P.size else np.array([], bool)
        sat_n = T.evaluate_rows("ellipse", params, N) if N.size else np.array([], bool)
        if struct.pos_hard and not bool(sat_p.all()):
            continue
        w = _score_masks(struct, sat_p, sat_n)
        if best is None or w > best[0]:
            best = (w, params)
    return None if best is None else best[1]


# --- top-level driver ---------------------------------------------------------------


_KNOWN = set(_THRESHOLD) | set(_INTERVAL) | _NOPARAM | {
    "halfplane2d", "halfplane3d", "parabola", "box2d", "sinusoid", "quad_strip", "ellipse",
}


def fit_structured(instance: MaxSmtInstance, seed: int = 0) -> SolveResult | None:
    """Fit a structured instance; None hands control back to the generic path."""
    struct = instance.structure
    if not isinstance(struct, FitStructure):
        return None
    if any(l.template_id not in _KNOWN for l in struct.literals):
        return None
    if struct.pos_hard and struct.uncoverable_pos > 0:
        return SolveResult("unsat", None, note="positives without bindings")
    rng = np.random.default_rng(seed)
    n_rows = struct.example_ids.shape[0]
    lits = struct.literals

    def finish(params: list[dict[str, float]], exact: bool) -> SolveResult:
        covered = coverage_mask(struct, params)
        hard_ok, weight = objective(struct, covered)
        if not hard_ok:
            if len(lits) > 1:
                # joint coverage failure is not a proof of infeasibility
                return SolveResult("unknown", None, exact=False, note="joint fit failed")
            return SolveResult("unsat", None)
        model: dict[str, float] = {}
        for lit, p in zip(lits, params):
            for k, v in p.items():
                model[lit.prefix + k] = float(v)
        return SolveResult("sat", model, weight, exact=exact)

    all_alive = np.ones(n_rows, dtype=bool)
    solo: list[dict[str, float] | None] = []
    exact_all = True
    for lit in lits:
        p, ex, _deg = _fit_single_literal(struct, lit, all_alive, rng)
        solo.append(p)
        exact_all &= ex
    if any(p is None for p in solo):
        if struct.pos_hard:
            # a literal that cannot alone cover the positives proves the
            # conjunction cannot either
            return SolveResult("unsat", None)
        solo = [p if p is not None else {} for p in solo]
    if len(lits) == 1:
        return finish([solo[0]], exact_all)

    # block coordinate refinement over literals
    ceiling = struct.neg_weight * float((~struct.is_pos).sum())
    if not struct.pos_hard:
        ceiling += struct.pos_weight * float(struct.is_pos.sum())
    best: tuple[float, list[dict[str, float]]] | None = None
    params = [dict(p) for p in solo]
    for _ in range(2):
        for i in range(len(lits)):
            alive = np.ones(n_rows, dtype=bool)
            for j, (lit, p) in enumerate(zip(lits, params)):
                if j != i:
                    alive &= T.evaluate_rows(lit.template_id, p, lit.rows)
            p_new, _, _ = _fit_single_literal(struct, lits[i], alive, rng)
            if p_new is not None:
                params[i] = p_new
        covered = coverage_mask(struct, params)
        hard_ok, weight = objective(struct, covered)
        key = weight if hard_ok else -math.inf
        if best is None or key > best[0]:
            best = (key, [dict(p) for p in params])
        if hard_ok and weight >= ceiling:
            break  # every soft constraint satisfied already
    if best is None or best[0] == -math.inf:
        return finish(solo, False)
    return finish(best[1], False)
