"""Sequence-level evaluation of tracker output against ground truth."""

from __future__ import annotations

import numpy as np

from .. import geometry as geo
from .. import metrics
from ..body_model import BodyModel, forward, joints_camera
from ..prob_state import propagate_joints


def world_joints(model: BodyModel, state, T_WC) -> np.ndarray:
    return geo.apply(T_WC, joints_camera(model, state))


def world_vertices(model: BodyModel, state, T_WC) -> np.ndarray:
    _, verts = forward(model, state)
    return geo.apply(geo.compose(T_WC, state.root), verts)


def matched(frames, outputs, indices=None):
    by_index = {o.index: o for o in outputs if o is not None}
    keep = None if indices is None else set(indices)
    pairs = []
    for f in frames:
        if f.gt is None or f.index not in by_index:
            continue
        if keep is not None and f.index not in keep:
            continue
        pairs.append((f, by_index[f.index]))
    return pairs


def evaluate(model: BodyModel, frames, outputs, indices=None, with_vertices: bool = True) -> metrics.MetricsReport:
    """All metrics over frames that have both ground truth and a posterior.

    ``g_accel`` is the acceleration error against ground truth over runs of
    consecutive evaluated frames.
    """
    pairs = matched(frames, outputs, indices)
    if not pairs:
        raise ValueError("no frames with both ground truth and a posterior")
    per_g, per_pa, per_pve, per_nees = [], [], [], []
    pred_series, gt_series, idx_series = [], [], []
    chi_mu, chi_cov, chi_gt = [], [], []
    for f, o in pairs:
        pj = world_joints(model, o.posterior.mean, f.T_WC)
        gj = world_joints(model, f.gt, f.T_WC)
        per_g.append(metrics.g_mpjpe(pj, gj))
        per_pa.append(metrics.pa_mpjpe(pj, gj))
        if with_vertices:
            per_pve.append(metrics.g_pve(world_vertices(model, o.posterior.mean, f.T_WC),
                                         world_vertices(model, f.gt, f.T_WC)))
        pg = propagate_joints(model, o.posterior)
        gt_c = joints_camera(model, f.gt)
        chi_mu.append(pg.means)
        chi_cov.append(pg.cov_blocks)
        chi_gt.append(gt_c)
        per_nees.append(metrics.chi2_consistency(pg.means, pg.cov_blocks, gt_c).mean_nees)
        pred_series.append(pj)
        gt_series.append(gj)
        idx_series.append(f.index)

    chi = metrics.chi2_consistency(np.array(chi_mu), np.array(chi_cov), np.array(chi_gt))
    accel = _accel_error(pairs, pred_series, gt_series, idx_series)
    return metrics.MetricsReport(
        g_mpjpe=float(np.mean(per_g)),
        pa_mpjpe=float(np.mean(per_pa)),
        g_pve=float(np.mean(per_pve)) if per_pve else float("nan"),
        g_accel=accel,
        mean_nees=chi.mean_nees,
        nees_histogram={"bin_edges": chi.bin_edges, "counts": chi.counts, "expected": chi.expected,
                        "skipped": chi.skipped},
        per_frame={"index": idx_series, "g_mpjpe": per_g, "pa_mpjpe": per_pa, "g_pve": per_pve,
                   "mean_nees": per_nees},
    )


def _accel_error(pairs, pred, gt, idx) -> float:
    """Acceleration error averaged over runs of consecutive frame indices."""
    total, count, start = 0.0, 0, 0
    for i in range(1, len(idx) + 1):
        if i == len(idx) or idx[i] != idx[i - 1] + 1:
            n = i - start - 2
            if n > 0:
                dt = pairs[start + 1][0].t - pairs[start][0].t
                seg = slice(start, i)
                total += n * metrics.g_accel(np.array(pred[seg]), dt, np.array(gt[seg]))
                count += n
            start = i
    return total / count if count else float("nan")
