"""Builds the 32x32 RGB test images under data/images from scikit-image's bundled samples."""
import pathlib

import numpy as np
import skimage.data as samples
from skimage.transform import resize

NAMES = ["astronaut", "chelsea", "coffee", "rocket", "hubble_deep_field",
         "immunohistochemistry", "retina", "motorcycle"]


def load(name):
    if name == "motorcycle":
        return samples.stereo_motorcycle()[0]
    return getattr(samples, name)()


def to_32(img):
    h, w = img.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    crop = img[top:top + s, left:left + s, :3].astype(np.float64) / 255.0
    small = resize(crop, (32, 32), anti_aliasing=True)
    return np.clip(np.round(small * 255.0), 0, 255).astype(np.uint8)


def main():
    out = pathlib.Path(__file__).resolve().parent.parent / "data" / "images"
    out.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(NAMES):
        px = to_32(load(name))
        with open(out / f"{i:02d}_{name}.ppm", "wb") as f:
            f.write(b"P6\n32 32\n255\n")
            f.write(px.tobytes())


if __name__ == "__main__":
    main()
