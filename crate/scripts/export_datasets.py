"""Export the desk-scale benchmark datasets to CSV.

Writes data/digits.csv (1,797 rows, 64 integer pixel features, labels 0-9)
and data/iris.csv (150 rows, 4 features, species names as labels).
"""

import csv
from pathlib import Path

from sklearn.datasets import load_digits, load_iris

OUT = Path(__file__).resolve().parent.parent / "data"


def export(name, data, labels):
    path = OUT / f"{name}.csv"
    d = data.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(d)] + ["label"])
        for row, y in zip(data, labels):
            w.writerow([format(v, "g") for v in row] + [y])
    print(f"wrote {path} ({data.shape[0]} rows, {d} features)")


def main():
    OUT.mkdir(exist_ok=True)
    digits = load_digits()
    export("digits", digits.data, [str(t) for t in digits.target])
    iris = load_iris()
    export("iris", iris.data, [iris.target_names[t] for t in iris.target])


if __name__ == "__main__":
    main()
