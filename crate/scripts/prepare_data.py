#!/usr/bin/env python3
"""Build the desk-scale datasets used by the acceptance suite.

MNIST: 10,000 digits shipped in the `mnist` npm package (pixels normalized
to three decimals) are rescaled to 0..255, shuffled with a fixed seed and
written as IDX files: 5,000 train and 1,000 test images with labels.

Natural-gray: 5,000 grayscale 32x32 patches cut from scikit-learn's bundled
sample photographs and rescaled to 28x28. Stands in for grayscale CIFAR-10
in the model-reuse experiment. Labels are (image, vertical band) pairs, ten
classes in total.

Usage: prepare_data.py <path-to-unpacked-npm-mnist-package> [out_dir]
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np
from PIL import Image
from sklearn.datasets import load_sample_images


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, array.ndim)
    header += b"".join(struct.pack(">I", n) for n in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + array.tobytes())


def mnist(pkg, out, rng):
    images, labels = [], []
    for digit in range(10):
        with open(Path(pkg) / "src" / "digits" / f"{digit}.json") as fh:
            data = np.asarray(json.load(fh)["data"], dtype=np.float64)
        data = data.reshape(-1, 784)
        images.append(np.clip(np.rint(data * 255.0), 0, 255))
        labels.append(np.full(len(data), digit))
    images = np.concatenate(images).astype(np.uint8)
    labels = np.concatenate(labels).astype(np.uint8)
    order = rng.permutation(len(images))
    images, labels = images[order], labels[order]
    tr, te = slice(0, 5000), slice(5000, 6000)
    write_idx(out / "mnist-train-images-idx3-ubyte.gz", images[tr].reshape(-1, 28, 28))
    write_idx(out / "mnist-train-labels-idx1-ubyte.gz", labels[tr])
    write_idx(out / "mnist-test-images-idx3-ubyte.gz", images[te].reshape(-1, 28, 28))
    write_idx(out / "mnist-test-labels-idx1-ubyte.gz", labels[te])


def natural_gray(out, rng, count=5000):
    photos = [np.asarray(Image.fromarray(img).convert("L")) for img in load_sample_images().images]
    patches, labels = [], []
    for i in range(count):
        which = i % len(photos)
        photo = photos[which]
        h, w = photo.shape
        y = int(rng.integers(0, h - 32))
        x = int(rng.integers(0, w - 32))
        patch = Image.fromarray(photo[y : y + 32, x : x + 32]).resize((28, 28), Image.BILINEAR)
        patches.append(np.asarray(patch))
        band = min(4, y * 5 // (h - 32))
        labels.append(which * 5 + band)
    write_idx(out / "natgray-train-images-idx3-ubyte.gz", np.stack(patches))
    write_idx(out / "natgray-train-labels-idx1-ubyte.gz", np.asarray(labels, dtype=np.uint8))


def main():
    pkg = sys.argv[1]
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "data")
    out.mkdir(parents=True, exist_ok=True)
    mnist(pkg, out, np.random.default_rng(20171017))
    natural_gray(out, np.random.default_rng(10))


if __name__ == "__main__":
    main()
