"""Pose/mesh error metrics. Inputs in metres, outputs in millimetres."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateError, InputError

MM = 1000.0
PCK_THRESHOLD_MM = 150.0
AUC_RANGE_MM = (0.0, 150.0)
AUC_STEPS = 31

CSV_VERSION = 1
CSV_COLUMNS = ("scenario_id", "mpjpe", "pa_mpjpe", "pve", "mrpe", "mrpe_x", "mrpe_y",
               "mrpe_z", "pck", "auc", "passes", "residual")


@dataclass
class MetricReport:
    mpjpe: float
    pa_mpjpe: float
    pve: float
    mrpe: float
    mrpe_x: float
    mrpe_y: float
    mrpe_z: float
    pck: float
    auc: float
    sample_count: int = 1

    def to_dict(self):
        return asdict(self)


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[1] != 3 or pred.shape[0] < 1:
        raise InputError(f"count/shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def mpjpe(pred_joints, gt_joints, root_index=0):
    pred, gt = _pair(pred_joints, gt_joints)
    pred = pred - pred[root_index]
    gt = gt - gt[root_index]
    return float(np.mean(np.linalg.norm(pred - gt, axis=1) * MM))


def similarity_align(pred, gt):
    """Scale, rotation and translation taking ``pred`` onto ``gt`` in the least-squares sense."""
    pred, gt = _pair(pred, gt)
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    p, g = pred - mu_p, gt - mu_g
    cov = p.T @ g
    u, sing, vt = np.linalg.svd(cov)
    gs = np.linalg.svd(g, compute_uv=False)
    if gs[0] == 0 or gs[1] <= 1e-12 * gs[0]:
        raise DegenerateError("ground-truth points are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    var = np.sum(p ** 2)
    scale = (sing[0] + sing[1] + d * sing[2]) / var if var > 0 else 1.0
    return scale * p @ rot.T + mu_g


def pa_mpjpe(pred_joints, gt_joints):
    pred, gt = _pair(pred_joints, gt_joints)
    if pred.shape[0] < 3:
        raise DegenerateError("need at least 3 joints for Procrustes alignment")
    aligned = similarity_align(pred, gt)
    return float(np.mean(np.linalg.norm(aligned - gt, axis=1) * MM))


def pve(pred_vertices, gt_vertices, root=None):
    """Mean vertex error; ``root`` = (pred_root, gt_root) centres each mesh first."""
    pred, gt = _pair(pred_vertices, gt_vertices)
    if root is not None:
        pred_root, gt_root = root
        pred = pred - np.asarray(pred_root, dtype=np.float64)
        gt = gt - np.asarray(gt_root, dtype=np.float64)
    return float(np.mean(np.linalg.norm(pred - gt, axis=1) * MM))


def mrpe(pred_root, gt_root):
    """Root position error: (total, |dx|, |dy|, |dz|) in mm; batches are averaged."""
    diff = (np.atleast_2d(np.asarray(pred_root, float)) - np.atleast_2d(np.asarray(gt_root, float))) * MM
    if diff.shape[-1] != 3:
        raise InputError(f"roots must be 3-vectors, got {diff.shape}")
    total = np.linalg.norm(diff, axis=1).mean()
    x, y, z = np.abs(diff).mean(axis=0)
    return float(total), float(x), float(y), float(z)


def pck_auc(pred_batch, gt_batch, threshold_mm=PCK_THRESHOLD_MM, auc_range=AUC_RANGE_MM,
            steps=AUC_STEPS, root_index=0):
    pred = np.asarray(pred_batch, dtype=np.float64)
    gt = np.asarray(gt_batch, dtype=np.float64)
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    if pred.size == 0 or pred.shape != gt.shape:
        raise InputError(f"empty or mismatched batch: {pred.shape} vs {gt.shape}")
    if not threshold_mm > 0:
        raise InputError("threshold must be positive")
    pred = pred - pred[:, root_index:root_index + 1]
    gt = gt - gt[:, root_index:root_index + 1]
    err = np.linalg.norm(pred - gt, axis=-1) * MM
    if err.shape[1] > 1:
        # the centred root is exact by construction and would inflate the score
        err = np.delete(err, root_index, axis=1)
    err = err.reshape(-1)
    pck = float(np.mean(err <= threshold_mm))
    thresholds = np.linspace(auc_range[0], auc_range[1], steps)
    auc = float(np.mean([np.mean(err <= t) for t in thresholds]))
    return pck, auc


def evaluate(pred_vertices, gt_vertices, pred_joints, gt_joints, root_index=0) -> MetricReport:
    pred_joints, gt_joints = _pair(pred_joints, gt_joints)
    total, x, y, z = mrpe(pred_joints[root_index], gt_joints[root_index])
    pck, auc = pck_auc(pred_joints, gt_joints, root_index=root_index)
    return MetricReport(
        mpjpe=mpjpe(pred_joints, gt_joints, root_index),
        pa_mpjpe=pa_mpjpe(pred_joints, gt_joints) if len(gt_joints) >= 3 else 0.0,
        pve=pve(pred_vertices, gt_vertices, (pred_joints[root_index], gt_joints[root_index])),
        mrpe=total, mrpe_x=x, mrpe_y=y, mrpe_z=z, pck=pck, auc=auc)


def mean_report(reports) -> MetricReport:
    reports = list(reports)
    if not reports:
        raise InputError("no reports to average")
    keys = [k for k in MetricReport.__dataclass_fields__ if k != "sample_count"]
    means = {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys}
    return MetricReport(**means, sample_count=sum(r.sample_count for r in reports))


def csv_rows(rows, extra_columns=()):
    """Render report rows (dicts keyed by CSV_COLUMNS + extras) with the version header."""
    buf = io.StringIO()
    buf.write(f"# pliks-report v{CSV_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    cols = list(CSV_COLUMNS) + list(extra_columns)
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get(c, "")) for c in cols])
    return buf.getvalue()


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
