"""Shared scenario documents for runner, gateway, and acceptance tests."""

import copy

# 6.4 m x 4.8 m arena viewed at 50 px/m: 320x240 frames, markers ~3 px.
BASE_DOC = {
    "seed": 7,
    "duration_s": 2.0,
    "arena": [[0.0, 0.0], [6.4, 0.0], [6.4, 4.8], [0.0, 4.8]],
    "camera": {
        "homography": [50.0, 0.0, 0.0, 0.0, 50.0, 0.0, 0.0, 0.0, 1.0],
        "width": 320,
        "height": 240,
    },
    "rates": {"sim_dt": 0.01, "frame_hz": 20.0, "control_hz": 10.0},
    "robots": [{"id": 0, "pose": [1.0, 2.4, 0.0]}],
    "mission": {
        "d_min": 0.5,
        "horizon_s": 2.0,
        "modes": {"0": {"type": "follow_path", "points": [[1.0, 2.4], [5.4, 2.4]]}},
    },
}


def scenario_doc(**overrides):
    doc = copy.deepcopy(BASE_DOC)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(doc.get(key), dict):
            doc[key] = {**doc[key], **copy.deepcopy(value)}
        else:
            doc[key] = copy.deepcopy(value)
    return doc
