"""Write the colon cancer trial data (R `survival::colon`) as a haft CSV.

Keeps the death records (etype == 2) with complete covariates, which leaves
888 patients, 458 of them censored. Needs the `rdatasets` package
(`pip install rdatasets`).

usage: python3 scripts/colon_csv.py [output.csv]   (default: data/colon.csv)
"""

import os
import sys

from rdatasets import data


def main() -> None:
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join("data", "colon.csv")
    df = data("survival", "colon")
    df = df[df["etype"] == 2].dropna()
    df = df.assign(
        dif=df["differ"].map({1: "well", 2: "moder", 3: "poor"}),
        ext=df["extent"].map({1: "submucosa", 2: "muscle", 3: "serosa", 4: "cstruct"}),
    )
    cols = ["time", "status", "rx", "sex", "age", "obstruct", "perfor", "adhere",
            "nodes", "dif", "ext", "surg", "node4"]
    df = df[cols].astype({"nodes": int})
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    df.to_csv(out, index=False)
    print(f"wrote {out}: {len(df)} rows, {int((df['status'] == 0).sum())} censored")


if __name__ == "__main__":
    main()
