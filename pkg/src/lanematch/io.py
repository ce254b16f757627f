"""Text formats: CULane annotations, scored predictions, MatchNet weights, datasets.

Dataset directory layout::

    list.txt                  image ids, one per line
    gt/<stem>.lines.txt       CULane annotation per image
    pred/<stem>.lines.txt     predictions per image
    categories/<name>.txt     optional category lists (image ids)

``<stem>`` is the image id with its extension (if any) removed.
"""
import math
import os
from pathlib import Path
import tempfile

import numpy as np

from ._validation import LaneMatchError
from .matchnet import MlpModel
from .synth import SceneRecord

PRED_HEADER = "# lane-assign v1"
WEIGHTS_HEADER = "matchnet-weights v1"


class ParseError(LaneMatchError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _coords(tokens, lineno):
    if len(tokens) % 2:
        raise ParseError("odd number of coordinate tokens", lineno)
    try:
        values = [float(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"non-numeric token ({exc})", lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise ParseError("non-finite coordinate", lineno)
    return [(values[i], values[i + 1]) for i in range(0, len(values), 2)]


def parse_annotation(text):
    """One lane per line as alternating ``x y`` pixel coordinates."""
    lanes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        pts = _coords(tokens, lineno)
        if len(pts) < 2:
            raise ParseError("a lane needs at least two points", lineno)
        lanes.append(pts)
    return lanes


def parse_predictions(text):
    """Lines ``score:<p> x y x y ...`` after an optional ``# lane-assign v1`` header."""
    lanes = []
    seen_content = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        if line.strip() == PRED_HEADER and not seen_content:
            seen_content = True
            continue
        seen_content = True
        head, rest = tokens[0], tokens[1:]
        if not head.startswith("score:"):
            raise ParseError("lane line must start with 'score:<float>'", lineno)
        try:
            score = float(head[len("score:"):])
        except ValueError:
            raise ParseError(f"bad score token {head!r}", lineno) from None
        if not 0.0 <= score <= 1.0:
            raise ParseError(f"score {score} outside [0, 1]", lineno)
        pts = _coords(rest, lineno)
        if len(pts) < 2:
            raise ParseError("a lane needs at least two points", lineno)
        lanes.append((pts, score))
    return lanes


def _fmt_points(points):
    return " ".join(f"{x:.6f} {y:.6f}" for x, y in points)


def format_annotation(polylines):
    return "".join(_fmt_points(pts) + "\n" for pts in polylines)


def format_predictions(scored):
    lines = [PRED_HEADER]
    lines += [f"score:{score:.6f} {_fmt_points(pts)}" for pts, score in scored]
    return "\n".join(lines) + "\n"


def save_weights(model):
    lines = [WEIGHTS_HEADER,
             " ".join(str(d) for d in model.layer_dims) + f" leaky_slope={model.leaky_slope!r}"]
    for w, b in zip(model.weights, model.biases):
        lines += [" ".join(f"{v:.17g}" for v in row) for row in w]
        lines.append(" ".join(f"{v:.17g}" for v in b))
    return "\n".join(lines) + "\n"


def load_weights(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != WEIGHTS_HEADER:
        found = lines[0].strip() if lines else "<empty>"
        raise LaneMatchError(f"unsupported weights version: {found!r}")
    if len(lines) < 2:
        raise LaneMatchError("weights file is missing the layer dimensions")
    slope = 0.01
    dims = []
    for tok in lines[1].split():
        if tok.startswith("leaky_slope="):
            slope = float(tok.split("=", 1)[1])
        else:
            dims.append(int(tok))
    body = lines[2:]
    expected = sum(d_in + 1 for d_in in dims[:-1])
    if len(dims) < 2 or len(body) != expected:
        raise LaneMatchError(
            f"weights file is inconsistent with dims {dims}: "
            f"expected {expected} parameter lines, found {len(body)}"
        )
    weights, biases = [], []
    pos = 0
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        rows = [np.array(body[pos + i].split(), dtype=np.float64) for i in range(d_in)]
        bias = np.array(body[pos + d_in].split(), dtype=np.float64)
        pos += d_in + 1
        if any(r.shape != (d_out,) for r in rows) or bias.shape != (d_out,):
            raise LaneMatchError("weights file row length does not match layer dims")
        weights.append(np.vstack(rows))
        biases.append(bias)
    return MlpModel(tuple(dims), weights, biases, slope)


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def lines_path(root, image_id):
    stem = os.path.splitext(image_id)[0]
    return Path(root) / f"{stem}.lines.txt"


def read_list(path):
    return [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]


def write_dataset(root, records):
    """Write scene records (see :mod:`lanematch.synth`) in the dataset layout."""
    root = Path(root)
    categories = {}
    for rec in records:
        atomic_write(lines_path(root / "gt", rec.image_id), format_annotation(rec.gt_lanes))
        atomic_write(lines_path(root / "pred", rec.image_id), format_predictions(rec.pred_lanes))
        if rec.category:
            categories.setdefault(rec.category, []).append(rec.image_id)
    atomic_write(root / "list.txt", "".join(r.image_id + "\n" for r in records))
    for name, ids in sorted(categories.items()):
        atomic_write(root / "categories" / f"{name}.txt", "".join(i + "\n" for i in ids))


def read_gt_dir(gt_dir, image_ids):
    out = {}
    for image_id in image_ids:
        path = lines_path(gt_dir, image_id)
        out[image_id] = parse_annotation(path.read_text()) if path.exists() else []
    return out


def read_pred_dir(pred_dir, image_ids=None):
    """Predictions per image id; with ``image_ids=None`` every file found is read."""
    pred_dir = Path(pred_dir)
    if image_ids is None:
        image_ids = sorted(
            str(p.relative_to(pred_dir))[: -len(".lines.txt")]
            for p in pred_dir.rglob("*.lines.txt")
        )
    out = {}
    for image_id in image_ids:
        path = lines_path(pred_dir, image_id)
        if path.exists():
            out[image_id] = parse_predictions(path.read_text())
    return out


def read_categories(cat_dir):
    cat_dir = Path(cat_dir)
    if not cat_dir.is_dir():
        return {}
    return {p.stem: read_list(p) for p in sorted(cat_dir.glob("*.txt"))}


def load_dataset(root, filter_list=None):
    """Read a dataset directory back into scene records.

    ``filter_list`` (a path or a list of ids) restricts the scenes to the
    listed image ids, in list order.
    """
    root = Path(root)
    ids = read_list(root / "list.txt")
    if filter_list is not None:
        wanted = read_list(filter_list) if isinstance(filter_list, (str, Path)) else list(filter_list)
        known = set(ids)
        missing = [i for i in wanted if i not in known]
        if missing:
            raise LaneMatchError(f"filter list references unknown images: {', '.join(missing)}")
        ids = wanted
    membership = {}
    for name, members in read_categories(root / "categories").items():
        for image_id in members:
            membership.setdefault(image_id, name)
    gts = read_gt_dir(root / "gt", ids)
    preds = read_pred_dir(root / "pred", ids)
    return [
        SceneRecord(image_id=i, gt_lanes=gts[i], pred_lanes=preds.get(i, []),
                    category=membership.get(i))
        for i in ids
    ]
