#!/usr/bin/env python3
"""Build IDX files holding the first 500 MNIST training digits of each class.

The digits come from the `mnist_5k.csv.gz` table shipped inside the mlxtend
wheel (500 samples per class, taken in order of appearance in the MNIST
training split, grouped by class).  The output uses the standard MNIST file
names so `MNIST_DIR` can point at it directly:

    python3 scripts/make_mnist_subset.py data/mnist-first500
"""

import gzip
import io
import os
import struct
import subprocess
import sys
import tempfile
import zipfile


def fetch_table():
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "mlxtend", "-d", tmp],
            check=True,
            stdout=subprocess.DEVNULL,
        )
        wheel = next(f for f in os.listdir(tmp) if f.endswith(".whl"))
        with zipfile.ZipFile(os.path.join(tmp, wheel)) as z:
            return gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "data/mnist-first500"
    os.makedirs(out, exist_ok=True)
    rows = [line.split(",") for line in fetch_table().splitlines() if line]
    pixels = bytearray()
    labels = bytearray()
    for row in rows:
        pixels.extend(int(float(v)) for v in row[:-1])
        labels.append(int(float(row[-1])))
    n = len(rows)
    images = struct.pack(">IIII", 2051, n, 28, 28) + bytes(pixels)
    label_bytes = struct.pack(">II", 2049, n) + bytes(labels)
    # mtime=0 keeps the archives byte-reproducible
    for name, payload in [
        ("train-images-idx3-ubyte.gz", images),
        ("train-labels-idx1-ubyte.gz", label_bytes),
    ]:
        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0, filename="") as gz:
            gz.write(payload)
        with open(os.path.join(out, name), "wb") as f:
            f.write(buf.getvalue())
    print(f"wrote {n} images to {out}")


if __name__ == "__main__":
    main()
