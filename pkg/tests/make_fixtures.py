"""Regenerate ``fixtures/regression.json``.

    python3 tests/make_fixtures.py [--fast]
"""
import argparse
import json
import sys
import time
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))
sys.path.insert(0, str(HERE.parent / "src"))

import regression  # noqa: E402


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--fast", action="store_true", help="skip the slow fixtures")
    args = ap.parse_args()
    path = HERE / "fixtures" / "regression.json"
    path.parent.mkdir(exist_ok=True)
    data = json.loads(path.read_text()) if path.exists() else {}
    jobs = dict(regression.FAST)
    if not args.fast:
        jobs.update(regression.SLOW)
    for key, fn in jobs.items():
        t0 = time.time()
        data[key] = fn()
        print(f"{key}: {time.time() - t0:.1f}s", flush=True)
        path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
