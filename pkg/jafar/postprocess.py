"""
Rotational post-processing of posterior loadings: multiview Varimax, then
greedy signed-permutation matching against a pivot sample.
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import PostprocessError
from .gibbs.archive import ChainArchive, save_archive
from .parallel import run_parallel

logger = logging.getLogger(__name__)

TOLERANCE = 1e-8
MAX_SWEEPS = 500


def varimax_criterion(loadings):
    """(1/p) sum L^4 - sum_h ((1/p) sum_j L_jh^2)^2 for one view"""
    loadings = np.asarray(loadings, dtype=float)
    p = loadings.shape[0]
    squared = loadings ** 2
    return float(np.sum(squared ** 2) / p - np.sum((squared.sum(axis=0) / p) ** 2))


def varimax_objective(views, rotation=None):
    """Summed criterion over views after an optional rotation"""
    if rotation is None:
        return sum(varimax_criterion(v) for v in views)
    return sum(varimax_criterion(v @ rotation) for v in views)


def _pair_value(pairs, angle):
    c, s = np.cos(angle), np.sin(angle)
    total = 0.0
    for a, b in pairs:
        total += varimax_criterion(np.column_stack((c * a + s * b, c * b - s * a)))
    return total


@dataclass
class VarimaxResult:
    rotation: np.ndarray
    objective: float
    sweeps: int
    converged: bool
    trace: list = field(default_factory=list)


def multiview_varimax(views, tol=TOLERANCE, max_sweeps=MAX_SWEEPS):
    """Orthogonal R maximizing the summed Varimax criterion of the views.

    Each Jacobi step rotates one column pair. The pair objective is a
    single frequency-4 sinusoid in the angle, so three evaluations pin it
    down and its maximizer is exact.
    """
    views = [np.asarray(v, dtype=float) for v in views]
    K = views[0].shape[1] if views else 0
    rotation = np.eye(K)
    if K < 2:
        return VarimaxResult(rotation, varimax_objective(views) if K else 0.0, 0, True)
    current = [v.copy() for v in views]
    value = varimax_objective(current)
    trace = [value]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for a in range(K - 1):
            for b in range(a + 1, K):
                pairs = [(v[:, a], v[:, b]) for v in current]
                f0 = _pair_value(pairs, 0.0)
                f_eighth = _pair_value(pairs, np.pi / 8)
                f_quarter = _pair_value(pairs, np.pi / 4)
                mean = 0.5 * (f0 + f_quarter)
                angle = 0.25 * np.arctan2(f_eighth - mean, 0.5 * (f0 - f_quarter))
                if _pair_value(pairs, angle) <= f0:
                    continue
                c, s = np.cos(angle), np.sin(angle)
                plane = np.eye(K)
                plane[a, a] = plane[b, b] = c
                plane[b, a] = s
                plane[a, b] = -s
                rotation = rotation @ plane
                for v in current:
                    col_a, col_b = v[:, a].copy(), v[:, b].copy()
                    v[:, a] = c * col_a + s * col_b
                    v[:, b] = c * col_b - s * col_a
        new_value = varimax_objective(current)
        trace.append(new_value)
        if new_value - value < tol:
            converged = True
            value = max(value, new_value)
            break
        value = new_value
    u, _, vt = np.linalg.svd(rotation)
    rotation = u @ vt
    return VarimaxResult(rotation, varimax_objective(views, rotation), sweeps, converged, trace)


def varimax(loadings, tol=TOLERANCE, max_sweeps=MAX_SWEEPS):
    """Classical single-matrix Varimax"""
    return multiview_varimax([loadings], tol, max_sweeps)


def match_columns(sample, pivot):
    """Greedy signed permutation: pivot column k <- sign[k] * sample[:, perm[k]]"""
    sample = np.asarray(sample, dtype=float)
    pivot = np.asarray(pivot, dtype=float)
    K = pivot.shape[1]
    order = np.argsort(-np.linalg.norm(pivot, axis=0), kind="stable")
    available = np.ones(K, dtype=bool)
    perm = np.zeros(K, dtype=np.int64)
    signs = np.ones(K)
    for k in order:
        target = pivot[:, k][:, None]
        plus = np.linalg.norm(sample - target, axis=0)
        minus = np.linalg.norm(sample + target, axis=0)
        best = np.where(available, np.minimum(plus, minus), np.inf)
        j = int(np.argmin(best))
        perm[k] = j
        signs[k] = 1.0 if plus[j] <= minus[j] else -1.0
        available[j] = False
    return perm, signs


def signed_permutation(perm, signs):
    """Matrix P with sample @ P == sample[:, perm] * signs"""
    K = perm.size
    matrix = np.zeros((K, K))
    matrix[perm, np.arange(K)] = signs
    return matrix


def match_align(samples, pivot):
    """Align every sample to the pivot; returns the signed-permutation matrices"""
    transforms = []
    for sample in samples:
        perm, signs = match_columns(sample, pivot)
        transforms.append(signed_permutation(perm, signs))
    return transforms


def column_sources(transform):
    """Source column each transformed column takes most of its weight from.

    Exact for signed permutations; for general orthogonal transforms it is
    the assignment maximizing the summed absolute weights.
    """
    K = transform.shape[1]
    if K == 0:
        return np.zeros(0, dtype=np.int64)
    rows, cols = linear_sum_assignment(-np.abs(transform))
    sources = np.empty(K, dtype=np.int64)
    sources[cols] = rows
    return sources


def reorder_labels(labels, sources):
    """Membership labels that carry each source column's activity to its new position"""
    K = labels.size
    if K == 0:
        return labels.copy()
    active = labels[sources] > sources
    # the last position can never be active
    return np.where(active, K - 1, np.minimum(labels[sources], np.arange(K))).astype(np.int64)


def transform_state(state, shared, specific):
    """Apply orthogonal column transforms to loadings, factors and coefficients.

    Column-indexed hyperparameters (hypervariances, memberships and response
    activation bits) follow their columns through `column_sources`. The
    sticks are indexed by label, not by column, and stay as they are.
    """
    out = state.copy()
    shared_sources = column_sources(shared)
    specific_sources = [column_sources(t_m) for t_m in specific]
    for view, t_m, sources in zip(out.views, specific, specific_sources):
        view.loadings = view.loadings @ shared
        view.specific = view.specific @ t_m
        if view.phi.shape[0]:
            view.phi = view.phi @ t_m
        view.tau2 = view.tau2[shared_sources]
        view.zeta = reorder_labels(view.zeta, shared_sources)
        view.chi2 = view.chi2[sources]
        view.delta = reorder_labels(view.delta, sources)
    if out.eta.shape[0]:
        out.eta = out.eta @ shared
    resp = out.response
    if resp is not None:
        resp.theta = shared.T @ resp.theta
        resp.theta_specific = [t_m.T @ th for t_m, th in zip(specific, resp.theta_specific)]
        resp.active = resp.active[shared_sources]
        resp.active_specific = [a[sources] for a, sources in zip(resp.active_specific, specific_sources)]
    return out


@dataclass
class AlignedChain:
    """Aligned states plus the transform applied to each raw sample"""

    states: list
    iterations: list
    shared_transforms: list
    specific_transforms: list
    pivot: int
    excluded: list
    modal_ranks: tuple
    objectives: list
    sweeps: list

    def report(self):
        return {
            "n_aligned": len(self.states),
            "modal_ranks": list(self.modal_ranks),
            "excluded_iterations": list(self.excluded),
            "n_excluded": len(self.excluded),
            "pivot_iteration": self.iterations[self.pivot],
            "shared_objective": [round(v, 12) for v in self.objectives],
            "sweeps": {
                "max": int(max(self.sweeps)) if self.sweeps else 0,
                "mean": float(np.mean(self.sweeps)) if self.sweeps else 0.0,
            },
        }


def _rotate_state(state):
    shared = multiview_varimax([v.loadings for v in state.views])
    specific = [varimax(v.specific) for v in state.views]
    return shared, specific


def modal_rank_filter(archive):
    ranks = [state.ranks for state in archive.states]
    counts = Counter(ranks)
    best = max(counts.values()) if counts else 0
    modal = next(r for r in ranks if counts[r] == best) if ranks else ()
    keep = [i for i, r in enumerate(ranks) if r == modal]
    excluded = [archive.iterations[i] for i, r in enumerate(ranks) if r != modal]
    return modal, keep, excluded


def postprocess_chain(archive, n_jobs=1):
    """Varimax every sample, pick the median-norm pivot and match-align to it"""
    modal, keep, excluded = modal_rank_filter(archive)
    if len(keep) < 2:
        raise PostprocessError(
            f"need at least 2 samples at the modal rank to align, found {len(keep)}"
        )
    if excluded:
        logger.info("alignment excluded=%d modal_ranks=%s", len(excluded), list(modal))
    states = [archive.states[i] for i in keep]
    rotations = run_parallel(_rotate_state, [(s,) for s in states], n_jobs)

    rotated_shared = [
        np.vstack([v.loadings @ shared.rotation for v in s.views]) for s, (shared, _) in zip(states, rotations)
    ]
    rotated_specific = [
        [v.specific @ r.rotation for v, r in zip(s.views, specific)] for s, (_, specific) in zip(states, rotations)
    ]
    norms = [
        np.sqrt(sum(np.sum(v.loadings ** 2) + np.sum(v.specific ** 2) for v in s.views)) for s in states
    ]
    pivot = int(np.argsort(norms, kind="stable")[(len(norms) - 1) // 2])

    shared_perm = match_align(rotated_shared, rotated_shared[pivot])
    shared_transforms = [
        shared.rotation @ perm for (shared, _), perm in zip(rotations, shared_perm)
    ]
    specific_transforms = []
    for i, (_, specific) in enumerate(rotations):
        per_view = []
        for m, r in enumerate(specific):
            perm = match_align([rotated_specific[i][m]], rotated_specific[pivot][m])[0]
            per_view.append(r.rotation @ perm)
        specific_transforms.append(per_view)

    aligned = [
        transform_state(s, t, t_m) for s, t, t_m in zip(states, shared_transforms, specific_transforms)
    ]
    return AlignedChain(
        states=aligned,
        iterations=[archive.iterations[i] for i in keep],
        shared_transforms=shared_transforms,
        specific_transforms=specific_transforms,
        pivot=pivot,
        excluded=excluded,
        modal_ranks=modal,
        objectives=[shared.objective for shared, _ in rotations],
        sweeps=[shared.sweeps for shared, _ in rotations],
    )


def aligned_archive(aligned, archive):
    """Wrap aligned states as a ChainArchive so prediction and metrics can read them"""
    meta = dict(archive.meta)
    meta["aligned"] = True
    return ChainArchive(
        states=aligned.states,
        iterations=aligned.iterations,
        ranks=archive.ranks,
        seed=archive.seed,
        config=archive.config,
        meta=meta,
    )


def save_aligned(aligned, archive, directory):
    """Write the aligned archive plus report.json"""
    directory = Path(directory)
    save_archive(aligned_archive(aligned, archive), directory)
    (directory / "report.json").write_text(json.dumps(aligned.report(), indent=2, sort_keys=True), encoding="utf-8")
    return directory
