#!/usr/bin/env python3
"""Build a 5000-image MNIST subset in IDX format.

The images come from the 5k MNIST sample bundled with the `mlxtend` wheel
(500 images per digit), which is reachable through any PyPI mirror. The
subset is split per class into 400 training and 100 test images, shuffled
with a fixed seed, and written as standard IDX files:

    train-images-idx3-ubyte  (4000, 28, 28)
    train-labels-idx1-ubyte  (4000,)
    t10k-images-idx3-ubyte   (1000, 28, 28)
    t10k-labels-idx1-ubyte   (1000,)

Usage: scripts/fetch_mnist_subset.py [OUT_DIR]   (default: data/mnist-subset)

For the full 60k/10k dataset, download the four original IDX files from
the MNIST site and point `--dataset-dir` at them instead.
"""
import gzip
import io
import pathlib
import struct
import subprocess
import sys
import tempfile
import zipfile

import numpy as np


def fetch_csv() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "mlxtend==0.24.0",
             "--no-deps", "-q", "-d", tmp],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("mlxtend-*.whl"))
        with zipfile.ZipFile(wheel) as zf:
            return zf.read("mlxtend/data/data/mnist_5k.csv.gz")


def write_idx(path: pathlib.Path, array: np.ndarray) -> None:
    code = 0x0800 | array.ndim
    header = struct.pack(">I", code) + b"".join(struct.pack(">I", d) for d in array.shape)
    path.write_bytes(header + array.astype(np.uint8).tobytes())


def main() -> None:
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/mnist-subset")
    out.mkdir(parents=True, exist_ok=True)
    table = np.loadtxt(io.BytesIO(gzip.decompress(fetch_csv())), delimiter=",")
    images = table[:, :784].astype(np.uint8)
    labels = table[:, 784].astype(np.uint8)

    train_idx, test_idx = [], []
    for digit in range(10):
        rows = np.flatnonzero(labels == digit)
        train_idx.extend(rows[:400])
        test_idx.extend(rows[400:500])
    rng = np.random.default_rng(0)
    train_idx = rng.permutation(np.array(train_idx))
    test_idx = rng.permutation(np.array(test_idx))

    write_idx(out / "train-images-idx3-ubyte", images[train_idx].reshape(-1, 28, 28))
    write_idx(out / "train-labels-idx1-ubyte", labels[train_idx])
    write_idx(out / "t10k-images-idx3-ubyte", images[test_idx].reshape(-1, 28, 28))
    write_idx(out / "t10k-labels-idx1-ubyte", labels[test_idx])
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test images to {out}")


if __name__ == "__main__":
    main()
