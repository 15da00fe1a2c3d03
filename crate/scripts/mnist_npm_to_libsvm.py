#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package (v1.1.0) to LIBSVM.

The package ships 10,000 MNIST digits as per-class JSON files of flattened
28x28 images with pixel intensities already scaled to [0, 1].

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_npm_to_libsvm.py package/src/digits data/mnist-10k.libsvm.gz
"""
import gzip
import json
import sys
from pathlib import Path


def main(digits_dir: Path, out: Path) -> None:
    side = 28 * 28
    rows = 0
    with gzip.open(out, "wt", encoding="utf-8") as fh:
        for digit in range(10):
            raw = json.loads((digits_dir / f"{digit}.json").read_text())["data"]
            for start in range(0, len(raw) - side + 1, side):
                pixels = raw[start:start + side]
                feats = " ".join(f"{j + 1}:{v:g}" for j, v in enumerate(pixels) if v != 0)
                fh.write(f"{digit} {feats}\n")
                rows += 1
    print(f"wrote {rows} rows to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
