import argparse
import json
from pathlib import Path


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seeds", type=int, default=20, help="number of training tasks (seeds 0..N-1)")
    p.add_argument("--run-seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="optional JSON file for the numbers printed")
    return p


def dump(path, payload) -> None:
    if path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"wrote {path}")
