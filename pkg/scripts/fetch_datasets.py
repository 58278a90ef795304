#!/usr/bin/env python3
"""Download the LibSVM binary-classification datasets used by the
reproduction protocols into ./data (or a directory given as argv[1]).

Optional tooling: the core library and tests never touch the network; the
dataset-dependent tests simply skip when these files are absent.
"""

import sys
from pathlib import Path
from urllib.request import urlopen

BASE = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/"
FILES = ("mushrooms", "w8a", "a9a")


def main() -> int:
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    target.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        dest = target / name
        if dest.exists():
            print(f"{dest} already present, skipping")
            continue
        url = BASE + name
        print(f"fetching {url} ...")
        with urlopen(url) as resp:
            dest.write_bytes(resp.read())
        print(f"wrote {dest} ({dest.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
