"""Regenerates fixtures/unproject.json from the installed skywatch package.

The console's pixel->ground mapping must agree with the server's within
1e-6, so the expected values come from the server code, not from an
independent reimplementation here.

Usage: python3 tests/make_fixture.py
"""

import json
import pathlib

import numpy as np

from skywatch.geometry import Homography, unproject

H = np.array(
    [
        [47.3, -6.1, 24.0],
        [5.9, 51.8, 13.5],
        [1.2e-3, -0.8e-3, 1.0],
    ]
)


def main() -> None:
    h = Homography(H)
    rng = np.random.default_rng(77)
    cases = []
    for _ in range(24):
        pixel = [float(rng.uniform(0, 640)), float(rng.uniform(0, 480))]
        ground = unproject(h, pixel)
        cases.append({"pixel": pixel, "ground": [ground[0], ground[1]]})
    doc = {"homography": H.ravel().tolist(), "cases": cases}
    out = pathlib.Path(__file__).parent / "fixtures" / "unproject.json"
    out.parent.mkdir(exist_ok=True)
    out.write_text(json.dumps(doc, indent=1))
    print(f"wrote {out} with {len(cases)} cases")


if __name__ == "__main__":
    main()
