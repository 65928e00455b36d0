#!/usr/bin/env python3
"""Convert the 10k MNIST digits shipped in the npm ``mnist`` package to IDX files.

The npm package stores each digit class as ``src/digits/<k>.json`` holding a flat
list of pixel intensities divided by 255 and rounded to 3 decimals. Rounding back
to bytes is exact (max error < 0.5/255). The samples are shuffled with a fixed
seed and split into a ``train`` and a ``t10k`` pair laid out like the official
distribution, so the regular IDX loader reads them.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/build_mnist_subset.py package/src/digits data/mnist10k --test 2000
"""
import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np


def write_idx(path, array, magic):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for dim in array.shape:
            f.write(struct.pack(">I", dim))
        f.write(np.ascontiguousarray(array, dtype=np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = [], []
    for k in range(10):
        flat = np.asarray(json.loads((args.digits_dir / f"{k}.json").read_text())["data"])
        pix = np.rint(flat * 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(pix)
        labels.append(np.full(len(pix), k, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    images, labels = images[order], labels[order]
    n_train = len(labels) - args.test

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx(args.out_dir / "train-images-idx3-ubyte.gz", images[:n_train], 0x803)
    write_idx(args.out_dir / "train-labels-idx1-ubyte.gz", labels[:n_train], 0x801)
    write_idx(args.out_dir / "t10k-images-idx3-ubyte.gz", images[n_train:], 0x803)
    write_idx(args.out_dir / "t10k-labels-idx1-ubyte.gz", labels[n_train:], 0x801)
    print(f"wrote {n_train} train / {args.test} test samples to {args.out_dir}")


if __name__ == "__main__":
    main()
