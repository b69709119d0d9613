"""Metric report over a dataset: coarse vs refined, projected region only.

The report is JSON lines.  First a reference record quoting published
full-scale results (those need large photo datasets and pretrained
recognition networks; they are context for the format, not a target),
then one record per sample, then an aggregate.  Metrics appear in the
fixed order l1, psnr, ssim, cosine.  Each sample is scored inside
``M_face AND M_proj`` only; coarse and refined renders share geometry, so
one coverage mask serves both and the comparison is paired.
"""

from __future__ import annotations

import json

from ..diffcore import no_grad
from ..errors import ContractViolation
from ..losses import image_metrics
from .config import RunConfig
from .dataset import SynthDataset
from .inference import load_system
from .system import System, masked_image, refine_sample, render_albedo

REFERENCE_ROW = {
    "kind": "reference",
    "note": ("published full-scale results, quoted for format parity; "
             "reproducing them needs large-scale photo data and pretrained "
             "recognition networks, so they are not a target here"),
    "l1": 0.034,
    "psnr": 29.69,
    "ssim": 0.894,
    "cosine_lightcnn": 0.900,
    "cosine_evolve": 0.848,
}

_METRIC_ORDER = ("l1", "psnr", "ssim", "cosine")


def _ordered(metrics: dict) -> dict:
    return {k: metrics[k] for k in _METRIC_ORDER}


def evaluate(config: RunConfig, checkpoint_path, dataset: SynthDataset,
             out_path=None, system: System | None = None) -> dict:
    if len(dataset) < 1:
        raise ContractViolation("evaluation needs a nonempty dataset")
    if system is None:
        system = load_system(config, checkpoint_path)

    samples = []
    sums = {side: {k: 0.0 for k in _METRIC_ORDER} for side in ("coarse", "fine")}
    fine_psnr_wins = 0
    for index in range(len(dataset)):
        sample = dataset[index]
        with no_grad():
            fwd = refine_sample(system, sample)
            fine = render_albedo(system, fwd, fwd.fine_albedo)
            coarse = render_albedo(system, fwd, fwd.coarse_albedo)
            fine_img = masked_image(fine.image).data
            coarse_img = masked_image(coarse.image).data
        mask = sample.face_mask * fine.m_proj
        row = {"kind": "sample", "index": index}
        row["coarse"] = _ordered(image_metrics(
            sample.image, coarse_img, mask=mask, embed=system.embedder))
        row["fine"] = _ordered(image_metrics(
            sample.image, fine_img, mask=mask, embed=system.embedder))
        for side in ("coarse", "fine"):
            for k in _METRIC_ORDER:
                sums[side][k] += row[side][k]
        if row["fine"]["psnr"] > row["coarse"]["psnr"]:
            fine_psnr_wins += 1
        samples.append(row)

    count = len(dataset)
    aggregate = {
        "kind": "aggregate",
        "count": count,
        "coarse": {k: sums["coarse"][k] / count for k in _METRIC_ORDER},
        "fine": {k: sums["fine"][k] / count for k in _METRIC_ORDER},
        "fine_psnr_wins": fine_psnr_wins,
    }
    report = {
        "reference": REFERENCE_ROW,
        "samples": samples,
        "aggregate": aggregate,
    }
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(REFERENCE_ROW) + "\n")
            for row in samples:
                fh.write(json.dumps(row) + "\n")
            fh.write(json.dumps(aggregate) + "\n")
    return report
