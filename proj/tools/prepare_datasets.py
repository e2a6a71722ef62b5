#!/usr/bin/env python3
"""Convert the UCI Boston housing and German credit sources into the numeric
CSV layout read by `steer` (header row, numeric cells, label in the last column).

Sources:
  boston  - boston_house_prices.csv as shipped by scikit-learn <= 1.1
            (first line is a "506,13" banner, second line the column names)
  german  - german.data from the UCI Statlog repository (space separated,
            13 categorical attributes coded A<attr><level>, label 1=good 2=bad)

German categorical attributes are ordinal-encoded by their level code
(e.g. A34 -> 4, A410 -> 10), which keeps the 20 original attributes. The label
is mapped to 1 for bad credit and 0 for good credit.

usage: prepare_datasets.py --boston SRC --german SRC --out DIR
"""

import argparse
import csv
import pathlib

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose", "credit_amount",
    "savings", "employment", "installment_rate", "personal_status", "other_debtors",
    "residence_since", "property", "age", "other_installment_plans", "housing",
    "existing_credits", "job", "num_dependents", "telephone", "foreign_worker",
    "bad_credit",
]


def convert_boston(src: pathlib.Path, dst: pathlib.Path) -> int:
    rows = list(csv.reader(src.open()))
    header, body = rows[1], rows[2:]
    with dst.open("w", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in body:
            w.writerow(r)
    return len(body)


def convert_german(src: pathlib.Path, dst: pathlib.Path) -> int:
    n = 0
    with dst.open("w", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(GERMAN_COLUMNS)
        for line in src.read_text().splitlines():
            cells = line.split()
            if not cells:
                continue
            row = []
            for attr, cell in enumerate(cells[:-1], start=1):
                if cell.startswith("A"):
                    row.append(cell[1 + len(str(attr)):])
                else:
                    row.append(cell)
            row.append("1" if cells[-1] == "2" else "0")
            w.writerow(row)
            n += 1
    return n


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--boston", type=pathlib.Path, required=True)
    ap.add_argument("--german", type=pathlib.Path, required=True)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    print("boston rows:", convert_boston(args.boston, args.out / "boston.csv"))
    print("german rows:", convert_german(args.german, args.out / "german.csv"))


if __name__ == "__main__":
    main()
