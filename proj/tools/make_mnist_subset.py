#!/usr/bin/env python3
# Copyright 2026 The lpgd Authors
# SPDX-License-Identifier: Apache-2.0
"""Builds the bundled MNIST subset in IDX format.

Source: the `mnist` npm package (MIT), whose src/digits/<d>.json files hold
MNIST digits as flat arrays of 784 grayscale values per image in [0, 1],
quantized to three decimals. Byte values are recovered with round(v * 255),
which is exact because the quantization error is below 0.5 / 255.

Usage:
  npm pack mnist && tar xzf mnist-*.tgz
  python3 tools/make_mnist_subset.py package/src/digits data
"""
import json
import pathlib
import struct
import sys

PIXELS = 28 * 28


def load_digit(directory, digit):
    flat = json.loads((directory / f"{digit}.json").read_text())["data"]
    assert len(flat) % PIXELS == 0
    images = []
    for i in range(len(flat) // PIXELS):
        chunk = flat[i * PIXELS:(i + 1) * PIXELS]
        images.append(bytes(min(255, max(0, round(v * 255))) for v in chunk))
    return images


def main():
    src = pathlib.Path(sys.argv[1])
    out = pathlib.Path(sys.argv[2])
    per_other = int(sys.argv[3]) if len(sys.argv) > 3 else 100
    images, labels = [], []
    for digit in range(10):
        block = load_digit(src, digit)
        if digit != 1:
            block = block[:per_other]
        images.extend(block)
        labels.extend([digit] * len(block))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "mnist-subset-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(out / "mnist-subset-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images ({labels.count(1)} ones)")


if __name__ == "__main__":
    main()
