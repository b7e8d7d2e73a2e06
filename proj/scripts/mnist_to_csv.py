#!/usr/bin/env python3
"""Convert raw MNIST IDX files into the experiment harness's CSV layout.

Builds a ten-task one-class benchmark: each digit is a task whose training
rows are a small sample of that digit's images, and a shared pool of test
images is materialized once per task, labeled target when the image's digit
matches the task and nontarget otherwise.  Defaults follow the desk-scale
protocol (15 training positives per digit, 150 test images per digit, so
each task scores 150 targets against 1350 nontargets).

Expects the standard IDX files (optionally gzipped) under --mnist-dir:
  train-images-idx3-ubyte  train-labels-idx1-ubyte
  t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte

Pixels are scaled to [0, 1].  Run the acceptance gate with
MTOC_MNIST_DIR pointing at the output directory (file name mnist.csv).
"""

import argparse
import gzip
import random
import struct
import sys
from pathlib import Path

DIGITS = 10


def open_maybe_gz(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def find_idx(root: Path, stem: str) -> Path:
    # Mirrors disagree on '-idx' vs '.idx' and on gzipping.
    for name in (stem, stem + ".gz",
                 stem.replace("-idx", ".idx"),
                 stem.replace("-idx", ".idx") + ".gz"):
        candidate = root / name
        if candidate.exists():
            return candidate
    sys.exit(f"error: cannot find {stem}[.gz] under {root}")


def read_images(path: Path):
    with open_maybe_gz(path) as f:
        magic, count, rows, cols = struct.unpack(">IIII", f.read(16))
        if magic != 2051:
            sys.exit(f"error: {path} is not an IDX image file (magic {magic})")
        pixels = rows * cols
        data = f.read(count * pixels)
        if len(data) != count * pixels:
            sys.exit(f"error: {path} is truncated")
        return [data[i * pixels:(i + 1) * pixels] for i in range(count)], pixels


def read_labels(path: Path):
    with open_maybe_gz(path) as f:
        magic, count = struct.unpack(">II", f.read(8))
        if magic != 2049:
            sys.exit(f"error: {path} is not an IDX label file (magic {magic})")
        data = f.read(count)
        if len(data) != count:
            sys.exit(f"error: {path} is truncated")
        return list(data)


def sample_per_digit(labels, per_digit, rng, what):
    by_digit = [[] for _ in range(DIGITS)]
    for index, label in enumerate(labels):
        if 0 <= label < DIGITS:
            by_digit[label].append(index)
    chosen = []
    for digit in range(DIGITS):
        pool = by_digit[digit]
        if len(pool) < per_digit:
            sys.exit(f"error: digit {digit} has only {len(pool)} {what} "
                     f"images, need {per_digit}")
        chosen.append(sorted(rng.sample(pool, per_digit)))
    return chosen


def format_row(image):
    return ",".join("%.6g" % (byte / 255.0) for byte in image)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mnist-dir", type=Path, required=True,
                        help="directory holding the four IDX files")
    parser.add_argument("--output", type=Path, default=Path("data/mnist.csv"))
    parser.add_argument("--train-per-digit", type=int, default=15)
    parser.add_argument("--test-per-digit", type=int, default=150)
    parser.add_argument("--seed", type=int, default=0,
                        help="sampling seed (default 0)")
    args = parser.parse_args()

    train_images, dim = read_images(
        find_idx(args.mnist_dir, "train-images-idx3-ubyte"))
    train_labels = read_labels(
        find_idx(args.mnist_dir, "train-labels-idx1-ubyte"))
    test_images, test_dim = read_images(
        find_idx(args.mnist_dir, "t10k-images-idx3-ubyte"))
    test_labels = read_labels(
        find_idx(args.mnist_dir, "t10k-labels-idx1-ubyte"))
    if len(train_images) != len(train_labels):
        sys.exit("error: training image/label counts differ")
    if len(test_images) != len(test_labels):
        sys.exit("error: test image/label counts differ")
    if dim != test_dim:
        sys.exit("error: training and test image sizes differ")

    rng = random.Random(args.seed)
    train_chosen = sample_per_digit(train_labels, args.train_per_digit, rng,
                                    "training")
    test_chosen = sample_per_digit(test_labels, args.test_per_digit, rng,
                                   "test")

    args.output.parent.mkdir(parents=True, exist_ok=True)
    with open(args.output, "w") as out:
        out.write(",".join(f"f{i}" for i in range(dim)))
        out.write(",task,split,label\n")
        for digit in range(DIGITS):
            for index in train_chosen[digit]:
                out.write(format_row(train_images[index]))
                out.write(f",{digit},train,target\n")
        # The shared test pool: every sampled image appears once per task.
        pool = [(digit, index)
                for digit in range(DIGITS)
                for index in test_chosen[digit]]
        for task in range(DIGITS):
            for digit, index in pool:
                label = "target" if digit == task else "nontarget"
                out.write(format_row(test_images[index]))
                out.write(f",{task},test,{label}\n")

    rows = DIGITS * args.train_per_digit + DIGITS * len(pool)
    print(f"wrote {args.output} ({rows} data rows, {dim} features)")


if __name__ == "__main__":
    main()
