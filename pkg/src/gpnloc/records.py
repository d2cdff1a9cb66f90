"""Line-delimited JSON record files.

One JSON object per line. Angles are radians (``theta_rad``). Unknown keys are
ignored on read, blank lines are skipped. Floats are written with ``repr``
precision so a write/read cycle is exact.
"""
from __future__ import annotations

import json
import math
import sys
from contextlib import contextmanager
from typing import Iterable, Iterator

from .anchor_codec import Anchor, EncodedEllipse
from .detection_eval import GroundTruth
from .errors import GpnError, InvalidInputError
from .geometry import Ellipse
from .raster_metrics import Detection

ELLIPSE_FIELDS = ("mu_x", "mu_y", "sigma_l", "sigma_s", "theta_rad")
ENCODED_FIELDS = ("tx", "ty", "tw", "th", "t_tan")
ANCHOR_FIELDS = ("cx", "cy", "w", "h")


class RecordError(InvalidInputError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


@contextmanager
def _open_in(path):
    if path in (None, "-"):
        yield sys.stdin, "<stdin>"
        return
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        yield fh, str(path)


def read_raw(path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, object) pairs."""
    with _open_in(path) as (fh, name):
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(name, n, f"not valid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise RecordError(name, n, "record must be a JSON object")
            yield n, obj


def _num(obj, key, where):
    if key not in obj:
        raise RecordError(*where, f"missing field {key!r}")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise RecordError(*where, f"field {key!r} must be a finite number")
    return float(v)


def _image_id(obj, where):
    v = obj.get("image_id", 0)
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise RecordError(*where, "image_id must be an integer or a string")
    return v


def _parse(path, build):
    out = []
    name = "<stdin>" if path in (None, "-") else str(path)
    for n, obj in read_raw(path):
        where = (name, n)
        try:
            out.append(build(obj, where))
        except RecordError:
            raise
        except GpnError as exc:
            raise RecordError(name, n, str(exc)) from None
    return out


def _ellipse(obj, where):
    return Ellipse(*(_num(obj, k, where) for k in ELLIPSE_FIELDS))


def read_ellipses(path) -> list[Ellipse]:
    return _parse(path, _ellipse)


def read_ground_truths(path) -> list[GroundTruth]:
    return _parse(path, lambda o, w: GroundTruth(_ellipse(o, w), _image_id(o, w)))


def read_detections(path, default_score: float | None = None) -> list[Detection]:
    """Detections need a ``score`` unless ``default_score`` is given."""
    def build(o, w):
        if "score" in o or default_score is None:
            score = _num(o, "score", w)
        else:
            score = default_score
        return Detection(_ellipse(o, w), score, _image_id(o, w))
    return _parse(path, build)


def read_encoded(path) -> list[tuple[EncodedEllipse, object]]:
    return _parse(path, lambda o, w: (EncodedEllipse(*(_num(o, k, w) for k in ENCODED_FIELDS)),
                                      _image_id(o, w)))


def read_anchors(path) -> list[Anchor]:
    return _parse(path, lambda o, w: Anchor(*(_num(o, k, w) for k in ANCHOR_FIELDS)))


# writers

def ellipse_record(e: Ellipse, image_id=None, score=None) -> dict:
    rec = {} if image_id is None else {"image_id": image_id}
    rec.update(zip(ELLIPSE_FIELDS, e.as_tuple()))
    if score is not None:
        rec["score"] = score
    return rec


def detection_record(d: Detection) -> dict:
    return ellipse_record(d.ellipse, d.image_id, d.score)


def gt_record(g: GroundTruth) -> dict:
    return ellipse_record(g.ellipse, g.image_id)


def encoded_record(t: EncodedEllipse, image_id=None) -> dict:
    rec = {} if image_id is None else {"image_id": image_id}
    rec.update(zip(ENCODED_FIELDS, t.as_tuple()))
    return rec


def anchor_record(a: Anchor) -> dict:
    return dict(zip(ANCHOR_FIELDS, (a.cx, a.cy, a.w, a.h)))


def dumps(rec: dict) -> str:
    return json.dumps({k: float(v) if isinstance(v, float) else v for k, v in rec.items()},
                      allow_nan=False, separators=(", ", ": "))


def write_records(fh, records: Iterable[dict]) -> None:
    for rec in records:
        fh.write(dumps(rec) + "\n")
