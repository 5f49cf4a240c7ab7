#!/usr/bin/env python3
"""Binarize the raw UCI Adult training file into the 123-feature a9a layout.

Usage: adult_to_a9a.py adult.data > a9a.txt

Feature blocks (1-based, in order): age(5) workclass(8) fnlwgt(5)
education(16) education-num(5) marital-status(7) occupation(14)
relationship(6) race(5) sex(2) capital-gain(2) capital-loss(2)
hours-per-week(5) native-country(41). Categories follow the order in
adult.names; "?" sets no feature in its block. Bin edges for the
continuous attributes are lower bounds of bins 2..5.
"""
import bisect
import sys

CATEGORIES = {
    1: "Private, Self-emp-not-inc, Self-emp-inc, Federal-gov, Local-gov, State-gov, Without-pay, Never-worked",
    3: "Bachelors, Some-college, 11th, HS-grad, Prof-school, Assoc-acdm, Assoc-voc, 9th, 7th-8th, 12th, Masters, 1st-4th, 10th, Doctorate, 5th-6th, Preschool",
    5: "Married-civ-spouse, Divorced, Never-married, Separated, Widowed, Married-spouse-absent, Married-AF-spouse",
    6: "Tech-support, Craft-repair, Other-service, Sales, Exec-managerial, Prof-specialty, Handlers-cleaners, Machine-op-inspct, Adm-clerical, Farming-fishing, Transport-moving, Priv-house-serv, Protective-serv, Armed-Forces",
    7: "Wife, Own-child, Husband, Not-in-family, Other-relative, Unmarried",
    8: "White, Asian-Pac-Islander, Amer-Indian-Eskimo, Other, Black",
    9: "Female, Male",
    13: "United-States, Cambodia, England, Puerto-Rico, Canada, Germany, Outlying-US(Guam-USVI-etc), India, Japan, Greece, South, China, Cuba, Iran, Honduras, Philippines, Italy, Poland, Jamaica, Vietnam, Mexico, Portugal, Ireland, France, Dominican-Republic, Laos, Ecuador, Taiwan, Haiti, Columbia, Hungary, Guatemala, Nicaragua, Scotland, Thailand, Yugoslavia, El-Salvador, Trinadad&Tobago, Peru, Hong, Holand-Netherlands",
}
CATEGORIES = {k: [c.strip() for c in v.split(",")] for k, v in CATEGORIES.items()}

EDGES = {
    0: [26, 33, 41, 50],
    2: [106_000, 158_000, 197_000, 260_000],
    4: [9, 10, 11, 13],
    10: [1],
    11: [1],
    12: [25, 40, 41, 50],
}


def main(path):
    out = sys.stdout
    with open(path) as f:
        for line in f:
            cols = [c.strip() for c in line.strip().split(",")]
            if len(cols) < 15:
                continue
            label = "+1" if cols[14].startswith(">50K") else "-1"
            feats = []
            offset = 0
            for col in range(14):
                if col in EDGES:
                    width = len(EDGES[col]) + 1
                    if cols[col] != "?":
                        feats.append(offset + bisect.bisect_right(EDGES[col], float(cols[col])) + 1)
                    offset += width
                elif col in CATEGORIES:
                    cats = CATEGORIES[col]
                    if cols[col] in cats:
                        feats.append(offset + cats.index(cols[col]) + 1)
                    offset += len(cats)
            assert offset == 123, offset
            out.write(label + " " + " ".join(f"{i}:1" for i in feats) + "\n")


if __name__ == "__main__":
    main(sys.argv[1])
