#!/usr/bin/env python3
"""Export scikit-learn's bundled 8x8 handwritten digits as IDX files.

Writes <out>/digits-{train,test}-{images,labels}.idx. Pixels (0..16) are
rescaled to bytes with round(v * 255 / 16). The split is a fixed
permutation so the files are reproducible.
"""
import argparse
import struct
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, images, labels_path, labels):
    n, rows, cols = images.shape
    path.write_bytes(struct.pack(">IIII", 0x803, n, rows, cols) + images.astype(np.uint8).tobytes())
    labels_path.write_bytes(struct.pack(">II", 0x801, n) + labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="tests/data")
    ap.add_argument("--test", type=int, default=497)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    d = load_digits()
    images = np.rint(d.images * 255.0 / 16.0)
    order = np.random.RandomState(args.seed).permutation(len(images))
    images, labels = images[order], d.target[order]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split = len(images) - args.test
    write_idx(out / "digits-train-images.idx", images[:split], out / "digits-train-labels.idx", labels[:split])
    write_idx(out / "digits-test-images.idx", images[split:], out / "digits-test-labels.idx", labels[split:])
    print(f"train {split}, test {args.test}")


if __name__ == "__main__":
    main()
