"""Record builders shared by the tests."""

import numpy as np

from osodd import Box, Detection, GroundTruthObject


def det(image, corner, logits, objectness=1.0, confidence=None, id_score=None, decided=None):
    return Detection(image, Box.from_corner(*corner), tuple(float(v) for v in logits), objectness,
                     confidence=confidence, id_score=id_score, decided_class=decided)


def gt(image, corner, cls):
    return GroundTruthObject(image, Box.from_corner(*corner), cls)


def to_oracle(dets, gts, split, decided=False):
    """Translate package records into the tuples the oracles take."""
    o_dets = []
    for d in dets:
        conf = d.confidence
        if conf is None:
            z = np.asarray(d.logits)
            p = np.exp(z - z.max())
            conf = d.objectness * float((p / p.sum()).max())
        if decided:
            cls = None if d.decided_class == 0 else split.id_classes.index(d.decided_class)
        else:
            cls = int(np.argmax(d.logits))
        o_dets.append((d.image_id, d.box.xyxy(), conf, cls))
    o_gts = []
    for g in gts:
        k = split.resolve(g.dataset_class)
        o_gts.append((g.image_id, g.box.xyxy(), None if k is None else split.id_classes.index(k)))
    return o_dets, o_gts
