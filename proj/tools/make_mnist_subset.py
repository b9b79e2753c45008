#!/usr/bin/env python3
"""Build the bundled MNIST-format subset from the `mnist` npm package.

The npm package (MIT licensed, github.com/cazala/mnist) ships 10000 MNIST
digits as per-class JSON arrays of 784 grey levels in [0, 1]. This script
converts them into IDX image/label files: a seeded 8000/2000 train/test split.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/
"""
import argparse
import json
import random
import struct
from pathlib import Path


def write_idx_images(path, images, rows=28, cols=28):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--train", type=int, default=8000)
    parser.add_argument("--seed", type=int, default=20190101)
    args = parser.parse_args()

    samples = []
    for label in range(10):
        data = json.loads((args.digits_dir / f"{label}.json").read_text())["data"]
        for k in range(len(data) // 784):
            pixels = [min(255, max(0, round(v * 255))) for v in data[k * 784:(k + 1) * 784]]
            samples.append((pixels, label))

    random.Random(args.seed).shuffle(samples)
    train, test = samples[:args.train], samples[args.train:]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("test", test)):
        write_idx_images(args.out_dir / f"mnist-{name}-images.idx3-ubyte", [s[0] for s in part])
        write_idx_labels(args.out_dir / f"mnist-{name}-labels.idx1-ubyte", [s[1] for s in part])
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
