"""Rebuild data/ from the copies of the public datasets bundled in the
``responsibly`` wheel on PyPI.

    python scripts/fetch_data.py [--out data]

Writes header-bearing, whitespace-trimmed CSVs:

    data/compas.csv        ProPublica compas-scores-two-years.csv (unchanged columns)
    data/adult_train.csv   UCI adult.data
    data/adult_test.csv    UCI adult.test (leading comment line removed,
                           trailing '.' on the label removed)
"""
import argparse
import csv
import io
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def _wheel(tmp: Path) -> zipfile.ZipFile:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
         "-d", str(tmp), "responsibly==0.1.2"],
        check=True,
    )
    return zipfile.ZipFile(next(tmp.glob("responsibly-*.whl")))


def _adult(raw: str, out: Path) -> int:
    rows = []
    for line in raw.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        cells = [c.strip() for c in line.split(",")]
        cells[-1] = cells[-1].rstrip(".")
        rows.append(cells)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ADULT_COLUMNS)
        writer.writerows(rows)
    return len(rows)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = _wheel(Path(tmp))
        compas = wheel.read("responsibly/dataset/compas/compas-scores-two-years.csv")
        (out / "compas.csv").write_bytes(compas)
        n_train = _adult(wheel.read("responsibly/dataset/adult/adult.data").decode(),
                         out / "adult_train.csv")
        n_test = _adult(wheel.read("responsibly/dataset/adult/adult.test").decode(),
                        out / "adult_test.csv")
    n_compas = sum(1 for _ in csv.reader(io.StringIO(compas.decode()))) - 1
    print(f"compas: {n_compas} rows; adult: {n_train} train / {n_test} test")


if __name__ == "__main__":
    main()
