"""Regenerates the image fixtures in this directory from scikit-image's cameraman."""
import json
from pathlib import Path

import numpy as np
from skimage import data

HERE = Path(__file__).resolve().parent


def write_pgm(path, img):
    img = np.asarray(img, dtype=np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(img.tobytes())


def main():
    cam = data.camera()
    write_pgm(HERE / "cameraman512.pgm", cam)

    crops = {
        "side": 64,
        "flat": {"row": 288, "col": 32},
        "moderate": {"row": 96, "col": 32},
        "textured": {"row": 320, "col": 256},
    }
    (HERE / "cameraman_crops.json").write_text(json.dumps(crops, indent=2) + "\n")

    # 2x2 block mean, rounded back to 8 bits
    small = cam.astype(np.float64).reshape(256, 2, 256, 2).mean(axis=(1, 3))
    write_pgm(HERE / "scene256.pgm", np.clip(np.rint(small), 0, 255))

    rois = [
        {"label": 1, "row_offset": 32, "col_offset": 64, "side": 128},
        {"label": 2, "row_offset": 96, "col_offset": 0, "side": 64},
        {"label": 3, "row_offset": 176, "col_offset": 32, "side": 32},
    ]
    (HERE / "scene256_rois.json").write_text(json.dumps(rois, indent=2) + "\n")

    # tiny two-band cube for ingestion tests, band-sequential little-endian float32
    rng = np.random.default_rng(7)
    cube = np.stack([small / 255.0, rng.random((256, 256)) * 40.0 + 10.0]).astype("<f4")
    cube.tofile(HERE / "cube2x256x256.f32")


if __name__ == "__main__":
    main()
