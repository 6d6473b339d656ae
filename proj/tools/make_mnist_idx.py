#!/usr/bin/env python3
"""Write a desk-scale MNIST split as IDX files.

Source: the 10,000 digits shipped with the `mnist` npm package
(src/digits/<k>.json, 784 floats in [0, 1] per image). Fetch it with
`npm pack mnist && tar xzf mnist-*.tgz`, then point --package at the
extracted `package/` directory.

Pixels are stored as round(255 * v). The split is a fixed-seed shuffle.
"""

import argparse
import json
import random
import struct
from pathlib import Path


def load_digits(package: Path):
    images, labels = [], []
    for k in range(10):
        flat = json.loads((package / "src" / "digits" / f"{k}.json").read_text())["data"]
        if len(flat) % 784:
            raise SystemExit(f"digit {k}: {len(flat)} values is not a multiple of 784")
        for i in range(0, len(flat), 784):
            images.append(bytes(min(255, max(0, round(255 * v))) for v in flat[i : i + 784]))
            labels.append(k)
    return images, labels


def write_images(path: Path, images):
    with path.open("wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)


def write_labels(path: Path, labels):
    with path.open("wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--package", type=Path, required=True, help="extracted npm package directory")
    ap.add_argument("--out", type=Path, default=Path("data/mnist"))
    ap.add_argument("--train", type=int, default=6000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    images, labels = load_digits(args.package)
    order = list(range(len(images)))
    random.Random(args.seed).shuffle(order)
    if args.train + args.test > len(order):
        raise SystemExit(f"only {len(order)} digits available")
    train = order[: args.train]
    test = order[args.train : args.train + args.test]

    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte", [images[i] for i in train])
    write_labels(args.out / "train-labels-idx1-ubyte", [labels[i] for i in train])
    write_images(args.out / "t10k-images-idx3-ubyte", [images[i] for i in test])
    write_labels(args.out / "t10k-labels-idx1-ubyte", [labels[i] for i in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {args.out}")


if __name__ == "__main__":
    main()
