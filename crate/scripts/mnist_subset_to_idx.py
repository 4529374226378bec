"""Convert the digit subset shipped in the `mnist` npm package to IDX files.

The package stores each digit class as a flat JSON array of 784-value rows,
pixels scaled to [0, 1] and rounded to three decimals, so round(v * 255)
recovers the original byte exactly.

Usage: npm pack mnist && tar xzf mnist-*.tgz
       python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist01 0 1
"""

import json
import struct
import sys
from pathlib import Path


def main() -> None:
    src, dst = Path(sys.argv[1]), Path(sys.argv[2])
    digits = [int(d) for d in sys.argv[3:]] or list(range(10))
    images, labels = bytearray(), bytearray()
    count = 0
    for digit in digits:
        raw = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(raw) % 784 == 0
        for v in raw:
            b = round(v * 255)
            assert 0 <= b <= 255 and abs(b / 255 - v) < 1e-3 + 1e-9
            images.append(b)
        n = len(raw) // 784
        labels.extend([digit] * n)
        count += n
    dst.mkdir(parents=True, exist_ok=True)
    (dst / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 2051, count, 28, 28) + images)
    (dst / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 2049, count) + labels)
    print(f"wrote {count} images for digits {digits}")


if __name__ == "__main__":
    main()
