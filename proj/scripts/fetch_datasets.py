#!/usr/bin/env python3
"""Fetch the benchmark tables used by the examples and the acceptance suite.

The OpenML-CC18 tables are not reachable from every build machine, so this
script pulls the same tables out of PyPI packages that bundle them:

  diabetes  <- keel-ds   (KEEL copy of the Pima Indians diabetes table, 768 rows)
  cmc       <- keel-ds   (KEEL "contraceptive", 1473 rows)
  income    <- mglearn   (UCI adult.data, the 32561-row training file)
  boston    <- rdatasets (MASS::Boston, regression)

Each dataset is written as <out>/<name>/<name>.csv plus a <name>.schema
sidecar in the key-value format read by `stunt prepare`.

Usage: python3 scripts/fetch_datasets.py [--out data] [--cache /tmp/stunt-wheels]
"""

import argparse
import csv
import lzma
import pathlib
import pickle
import subprocess
import sys
import zipfile

PACKAGES = {
    "keel-ds": "keel_ds-0.2.5-py3-none-any.whl",
    "mglearn": "mglearn-0.2.0-py2.py3-none-any.whl",
    "rdatasets": "rdatasets-0.2.10-py3-none-any.whl",
}


def fetch_wheel(name, cache):
    cache.mkdir(parents=True, exist_ok=True)
    target = cache / PACKAGES[name]
    if not target.exists():
        version = PACKAGES[name].split("-")[1]
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q",
             "-d", str(cache), f"{name}=={version}"],
            check=True)
    return zipfile.ZipFile(target)


def write_dataset(out, name, header, rows, columns, scaling="min_max"):
    folder = out / name
    folder.mkdir(parents=True, exist_ok=True)
    with open(folder / f"{name}.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    with open(folder / f"{name}.schema", "w") as fh:
        fh.write(f"name = {name}\n")
        fh.write(f"scaling = {scaling}\n")
        for col, spec in zip(header, columns):
            fh.write(f"column.{col} = {spec}\n")
    print(f"{name}: {len(rows)} rows, {len(header)} columns -> {folder}")


def categories(rows, idx, key=None):
    values = sorted({r[idx] for r in rows}, key=key)
    return ", ".join(values)


def keel_rows(wheel, member):
    text = wheel.read(member).decode()
    return [[c.strip() for c in line.split(",")]
            for line in text.splitlines() if line.strip() and not line.startswith("@")]


def diabetes(out, keel):
    rows = keel_rows(keel, "keel_ds/data/balanced/raw/pima.dat")
    header = ["preg", "plas", "pres", "skin", "insu", "mass", "pedi", "age", "class"]
    specs = ["numerical"] * 8 + ["target: tested_negative, tested_positive"]
    write_dataset(out, "diabetes", header, rows, specs)


def cmc(out, keel):
    rows = keel_rows(keel, "keel_ds/data/balanced/raw/contraceptive.dat")
    header = ["wife_age", "wife_education", "husband_education", "children",
              "wife_religion", "wife_working", "husband_occupation",
              "standard_of_living", "media_exposure", "method"]
    numerical = {"wife_age", "children"}
    specs = []
    for i, col in enumerate(header):
        if col in numerical:
            specs.append("numerical")
        elif col == "method":
            specs.append("target: " + categories(rows, i, key=int))
        else:
            specs.append("categorical: " + categories(rows, i, key=int))
    write_dataset(out, "cmc", header, rows, specs)


def income(out, mglearn):
    text = mglearn.read("mglearn/data/adult.data").decode()
    rows = [[c.strip() for c in line.split(",")] for line in text.splitlines() if line.strip()]
    header = ["age", "workclass", "fnlwgt", "education", "education_num",
              "marital_status", "occupation", "relationship", "race", "sex",
              "capital_gain", "capital_loss", "hours_per_week", "native_country",
              "income"]
    numerical = {"age", "fnlwgt", "education_num", "capital_gain", "capital_loss",
                 "hours_per_week"}
    specs = []
    for i, col in enumerate(header):
        if col in numerical:
            specs.append("numerical")
        elif col == "income":
            specs.append("target: <=50K, >50K")
        else:
            specs.append("categorical: " + categories(rows, i))
    write_dataset(out, "income", header, rows, specs, scaling="standardize")


def boston(out, rdatasets):
    raw = rdatasets.read("rdatasets/_data/MASS/Boston.pkl.compress")
    frame = pickle.loads(lzma.decompress(raw))
    frame = frame.drop(columns=[c for c in frame.columns if c == "rownames"])
    header = [str(c) for c in frame.columns]
    rows = [[repr(float(v)) if isinstance(v, float) else str(v) for v in rec]
            for rec in frame.itertuples(index=False)]
    specs = ["target" if c == "medv" else "numerical" for c in header]
    write_dataset(out, "boston", header, rows, specs)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data", type=pathlib.Path)
    parser.add_argument("--cache", default="/tmp/stunt-wheels", type=pathlib.Path)
    args = parser.parse_args()

    keel = fetch_wheel("keel-ds", args.cache)
    diabetes(args.out, keel)
    cmc(args.out, keel)
    income(args.out, fetch_wheel("mglearn", args.cache))
    boston(args.out, fetch_wheel("rdatasets", args.cache))


if __name__ == "__main__":
    main()
