#!/usr/bin/env python3
"""Build gzipped IDX files from the 10,000 MNIST digits bundled in the npm `mnist` package.

Usage: python3 scripts/fetch_mnist.py [out_dir]

Pixels in the package are stored as value/255 rounded to three decimals, which
is enough to recover the original bytes exactly. Each class is split 84/16 into
train/test in its original order; both splits are then interleaved with a fixed
permutation so that class order does not leak into minibatches.
"""
import gzip
import json
import os
import random
import struct
import subprocess
import sys
import tarfile
import tempfile

TEST_FRACTION = 0.16
SIDE = 28


def write_idx(path, images, labels_path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(labels_path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "mnist")
    os.makedirs(out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        with tarfile.open(os.path.join(tmp, "mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        train, test = [], []
        for digit in range(10):
            with open(os.path.join(tmp, "package", "src", "digits", f"{digit}.json")) as f:
                raw = json.load(f)["data"]
            n = len(raw) // (SIDE * SIDE)
            items = []
            for k in range(n):
                px = raw[k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
                items.append(([int(round(v * 255)) for v in px], digit))
            n_test = int(round(n * TEST_FRACTION))
            train.extend(items[: n - n_test])
            test.extend(items[n - n_test:])
    rng = random.Random(20200503)
    rng.shuffle(train)
    rng.shuffle(test)
    for name, items in (("train", train), ("t10k", test)):
        write_idx(
            os.path.join(out, f"{name}-images-idx3-ubyte.gz"),
            [img for img, _ in items],
            os.path.join(out, f"{name}-labels-idx1-ubyte.gz"),
            [lab for _, lab in items],
        )
        print(f"{name}: {len(items)} images")


if __name__ == "__main__":
    main()
