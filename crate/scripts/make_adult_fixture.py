"""Writes crates/core/tests/data/adult_lending.csv from the UCI Adult files.

Two random forests predict income >50K: `small` sees sex, age, workclass and
education-num; `full` also sees race and marital-status. Both are trained on
adult.data and scored on adult.test with fixed seeds.

usage: make_adult_fixture.py ADULT_DATA ADULT_TEST OUT_CSV
"""
import sys

import pandas as pd
from sklearn.ensemble import RandomForestClassifier

COLS = [
    "age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
    "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
    "hours_per_week", "native_country", "income",
]
SMALL = ["sex", "age", "workclass", "education_num"]
FULL = SMALL + ["race", "marital_status"]


def load(path, skip):
    df = pd.read_csv(path, names=COLS, skiprows=skip, skipinitialspace=True, na_values="?")
    df["income"] = df["income"].str.rstrip(".")
    return df


def fit_predict(train, test, cols, seed):
    both = pd.get_dummies(pd.concat([train[cols], test[cols]]), dtype=float)
    xtr, xte = both.iloc[: len(train)], both.iloc[len(train):]
    rf = RandomForestClassifier(n_estimators=200, min_samples_leaf=5, random_state=seed, n_jobs=-1)
    rf.fit(xtr, train["income"] == ">50K")
    return rf.predict(xte).astype(int)


def main(data, test_path, out):
    train = load(data, 0).dropna(subset=["workclass"])
    test = load(test_path, 1).dropna(subset=["workclass"])
    test = test.assign(small=fit_predict(train, test, SMALL, 1), full=fit_predict(train, test, FULL, 2))
    keep = ["sex", "age", "education", "education_num", "marital_status", "race", "income", "small", "full"]
    test[keep].to_csv(out, index=False)


if __name__ == "__main__":
    main(*sys.argv[1:])
