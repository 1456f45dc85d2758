"""Python front end for the generate-evaluate-select segmentation engine.

Label maps are (labels, segments) pairs: `labels` is an HxW uint32 array
where 0 is void and k >= 1 indexes segments[k - 1], and each segment is a
(category_id, is_thing) tuple.
"""

import json

import numpy as np

from . import _core
from ._core import GesError

__all__ = [
    "GesError",
    "ablation_modes",
    "evaluate_pq",
    "iou",
    "modularity_demo",
    "rle_decode",
    "rle_encode",
    "run_ablations",
    "segment",
    "synthesize",
    "write_synthetic",
]


def _text(config):
    return "" if config is None else json.dumps(config)


def rle_encode(mask):
    """Row-major run lengths of a 2-D boolean mask, first run counting zeros."""
    return json.loads(_core.rle_encode(np.asarray(mask, dtype=np.uint8)))


def rle_decode(rle):
    return _core.rle_decode(json.dumps(rle))


def iou(a, b):
    return _core.iou(np.asarray(a, dtype=np.uint8), np.asarray(b, dtype=np.uint8))


def evaluate_pq(gt, pred):
    """PQ/RQ/SQ overall, for things, for stuff and per category."""
    gt_labels, gt_segments = gt
    pred_labels, pred_segments = pred
    return json.loads(
        _core.evaluate_pq(
            np.asarray(gt_labels, dtype=np.uint32),
            list(gt_segments),
            np.asarray(pred_labels, dtype=np.uint32),
            list(pred_segments),
        )
    )


def synthesize(config=None):
    """Returns (categories, records, parts). Each record is a dict with
    image_id, labels, segments and image (HxWx3 uint8)."""
    cats, records, parts = _core.synthesize(_text(config))
    out = [
        {"image_id": i, "labels": labels, "segments": segs, "image": image}
        for i, labels, segs, image in records
    ]
    return json.loads(cats), out, json.loads(parts)


def write_synthetic(directory, config=None):
    _core.write_synthetic(_text(config), str(directory))


def segment(config=None, mode="full"):
    """Runs the panoptic loop; returns (pq report, [(labels, segments), ...])."""
    report, preds = _core.segment(_text(config), mode)
    return json.loads(report), preds


def run_ablations(config=None):
    """Returns (report dict, text table)."""
    report, table = _core.run_ablations(_text(config))
    return json.loads(report), table


def modularity_demo(alphabet=9, length=1000, trials=200, seed=0):
    return json.loads(_core.modularity_demo(alphabet, length, trials, seed))


def ablation_modes():
    return list(_core.ablation_modes())
