#!/usr/bin/env python3
"""Build a rotated-MNIST style dataset in .amat format.

The canonical mnist_rotation_new archive is not redistributable from this
repository, so this script builds an equivalent set from the 10000 MNIST
digits bundled with the `mnist` npm package (`npm pack mnist`): every digit
is rotated by an angle drawn uniformly from [0, 2pi), bicubic interpolation,
clipped to [0, 1]. Rows are 784 row-major pixels followed by the label.

    python3 tools/make_rotated_mnist.py path/to/npm/package/src/digits data/
"""
import argparse
import gzip
import json
import os

import numpy as np
from scipy import ndimage


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=20161214)
    ap.add_argument("--n-train", type=int, default=5000)
    args = ap.parse_args()

    images, labels = [], []
    for d in range(10):
        with open(os.path.join(args.digits_dir, f"{d}.json")) as f:
            raw = np.asarray(json.load(f)["data"], dtype=np.float64)
        raw = raw.reshape(-1, 28, 28)
        images.append(raw)
        labels.append(np.full(len(raw), d, dtype=np.int64))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(images))
    images, labels = images[order], labels[order]
    angles = rng.uniform(0.0, 360.0, size=len(images))
    rotated = np.stack([
        np.clip(ndimage.rotate(img, a, reshape=False, order=3, mode="constant"), 0.0, 1.0)
        for img, a in zip(images, angles)
    ])

    os.makedirs(args.out_dir, exist_ok=True)
    splits = {
        "mnist_rot_train_valid.amat.gz": slice(0, args.n_train),
        "mnist_rot_test.amat.gz": slice(args.n_train, len(images)),
    }
    for name, sl in splits.items():
        with gzip.open(os.path.join(args.out_dir, name), "wt", compresslevel=9) as f:
            for img, lab in zip(rotated[sl], labels[sl]):
                px = " ".join("0" if v == 0.0 else f"{v:.4g}" for v in img.reshape(-1))
                f.write(f"{px} {lab}\n")
        print(name, sl.stop - sl.start, "rows")


if __name__ == "__main__":
    main()
