#!/usr/bin/env python3
"""Convert the per-digit JSON files of the npm `mnist` package into IDX files.

Each JSON file holds {"data": [...]} with 784 floats in [0,1] per image.
Images of the requested digits are interleaved in a fixed shuffled order.
"""
import argparse
import json
import random
import struct
from pathlib import Path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path, help="package src/digits directory")
    ap.add_argument("out_prefix", type=Path)
    ap.add_argument("--digits", default="4,7")
    ap.add_argument("--seed", type=int, default=47)
    args = ap.parse_args()

    items = []
    for d in (int(s) for s in args.digits.split(",")):
        flat = json.loads((args.digits_dir / f"{d}.json").read_text())["data"]
        assert len(flat) % 784 == 0
        for k in range(len(flat) // 784):
            px = bytes(min(255, max(0, round(v * 255))) for v in flat[k * 784:(k + 1) * 784])
            items.append((d, px))
    random.Random(args.seed).shuffle(items)

    n = len(items)
    with open(f"{args.out_prefix}-images.idx", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        for _, px in items:
            f.write(px)
    with open(f"{args.out_prefix}-labels.idx", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(d for d, _ in items))
    print(f"wrote {n} images")


if __name__ == "__main__":
    main()
