#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into IDX files.

The package ships 10,000 MNIST test digits as JSON (28x28 floats in [0,1],
rounded to three decimals). Rounding v*255 recovers the original bytes.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist
"""
import json
import os
import struct
import sys


def main(src, dst):
    images = bytearray()
    labels = bytearray()
    for digit in range(10):
        with open(os.path.join(src, f"{digit}.json")) as fh:
            data = json.load(fh)["data"]
        assert len(data) % 784 == 0
        images.extend(min(255, max(0, round(v * 255))) for v in data)
        labels.extend([digit] * (len(data) // 784))
    n = len(labels)
    os.makedirs(dst, exist_ok=True)
    with open(os.path.join(dst, "t10k-images-idx3-ubyte"), "wb") as fh:
        fh.write(struct.pack(">BBBBIII", 0, 0, 8, 3, n, 28, 28))
        fh.write(images)
    with open(os.path.join(dst, "t10k-labels-idx1-ubyte"), "wb") as fh:
        fh.write(struct.pack(">BBBBI", 0, 0, 8, 1, n))
        fh.write(labels)
    print(f"wrote {n} digits to {dst}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
