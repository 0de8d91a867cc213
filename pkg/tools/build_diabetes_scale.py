"""Rebuild the diabetes_scale LIBSVM file from the Pima Indians diabetes table.

The LIBSVM host is not always reachable, so the test suite ships a copy of
``diabetes_scale`` regenerated from the raw Pima table bundled in the
``common_datasets`` wheel.  The transformation mirrors ``svm-scale -l -1 -u 1``:
each feature is mapped linearly from its observed [min, max] onto [-1, 1],
values are printed with ``%g`` and zeros are omitted.  Class "positive"
(tested positive for diabetes) becomes -1 and "negative" becomes +1, which
is the labelling used by the hosted file.

usage: python3 tools/build_diabetes_scale.py path/to/common_datasets.whl out_file
"""

import sys
import zipfile

import numpy as np

MEMBER = "common_datasets/data/classification/pima/pima.dat"


def read_pima(wheel):
    text = zipfile.ZipFile(wheel).read(MEMBER).decode()
    body = text.split("@data", 1)[1].split()
    rows, labels = [], []
    for line in body:
        *vals, cls = line.split(",")
        rows.append([float(v) for v in vals])
        labels.append(-1 if cls.strip() == "positive" else 1)
    return np.array(rows), np.array(labels)


def scale_lines(X, y):
    lo, hi = X.min(axis=0), X.max(axis=0)
    Z = -1.0 + 2.0 * (X - lo) / (hi - lo)
    for row, lab in zip(Z, y):
        feats = " ".join(f"{j + 1}:{v:g}" for j, v in enumerate(row) if f"{v:g}" not in ("0", "-0"))
        yield f"{lab:+d} {feats}".rstrip() + "\n"


if __name__ == "__main__":
    X, y = read_pima(sys.argv[1])
    with open(sys.argv[2], "w") as fh:
        fh.writelines(scale_lines(X, y))
