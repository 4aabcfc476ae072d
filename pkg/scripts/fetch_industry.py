"""Download the ten-industry monthly returns file from the Ken French data library.

The file is not shipped with this repository.  This script fetches the zip
archive, extracts the CSV and checks that it parses:

    python scripts/fetch_industry.py data/10_Industry_Portfolios.csv

Then point ``[data] path`` in the study config at the extracted file.
"""

import argparse
import io
import sys
import urllib.request
import zipfile
from pathlib import Path

from mvfrontier.io import parse_industry_csv

URL = ("https://mba.tuck.dartmouth.edu/pages/faculty/ken.french/ftp/"
       "10_Industry_Portfolios_CSV.zip")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("dest", type=Path)
    p.add_argument("--url", default=URL)
    args = p.parse_args(argv)
    with urllib.request.urlopen(args.url, timeout=60) as resp:
        payload = resp.read()
    with zipfile.ZipFile(io.BytesIO(payload)) as zf:
        names = [n for n in zf.namelist() if n.lower().endswith(".csv")]
        if len(names) != 1:
            raise SystemExit(f"expected one CSV in the archive, found {names}")
        data = zf.read(names[0])
    args.dest.parent.mkdir(parents=True, exist_ok=True)
    args.dest.write_bytes(data)
    panel = parse_industry_csv(args.dest)
    print(f"{args.dest}: {panel.n_periods} months {panel.dates[0]}..{panel.dates[-1]}, "
          f"{len(panel.asset_names)} industries")
    return 0


if __name__ == "__main__":
    sys.exit(main())
