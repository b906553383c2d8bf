#!/usr/bin/env python3
"""Convert a labelled MNIST CSV (784 pixel columns, then the label) into the
four IDX files read by `--dataset mnist:<dir>`.

Rows are split per class: the first --train-per-class images of each digit go
to the training files, the next --test-per-class to the test files.
"""
import argparse
import gzip
import struct
from pathlib import Path


def open_any(path):
    return gzip.open(path, "rt") if str(path).endswith(".gz") else open(path)


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv")
    ap.add_argument("out_dir")
    ap.add_argument("--train-per-class", type=int, default=150)
    ap.add_argument("--test-per-class", type=int, default=50)
    args = ap.parse_args()

    by_class = {}
    with open_any(args.csv) as f:
        for line in f:
            fields = line.strip().split(",")
            if len(fields) != 785:
                continue
            try:
                values = [int(float(v)) for v in fields]
            except ValueError:
                continue  # header
            by_class.setdefault(values[-1], []).append(values[:-1])

    need = args.train_per_class + args.test_per_class
    splits = {"train": ([], []), "t10k": ([], [])}
    for label in sorted(by_class):
        rows = by_class[label]
        if len(rows) < need:
            raise SystemExit(f"class {label} has {len(rows)} rows, need {need}")
        for i, row in enumerate(rows[:need]):
            images, labels = splits["train" if i < args.train_per_class else "t10k"]
            images.append(row)
            labels.append(label)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for prefix, (images, labels) in splits.items():
        write_images(out / f"{prefix}-images-idx3-ubyte", images)
        write_labels(out / f"{prefix}-labels-idx1-ubyte", labels)
    print(f"wrote {len(splits['train'][1])} training and {len(splits['t10k'][1])} test images to {out}")


if __name__ == "__main__":
    main()
