"""Run every shipped config through the CLI and print one line per experiment."""
import sys
import time
from pathlib import Path

from sdlab.cli import main
from sdlab.config import load_config

ROOT = Path(__file__).resolve().parent.parent
SKIP = {"bad_empty_grid.json"}


def run(out_root: Path) -> int:
    worst = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        if path.name in SKIP:
            continue
        exp = load_config(path).experiment
        t0 = time.perf_counter()
        code = main([exp, "--config", str(path), "--out", str(out_root / path.stem)])
        print(f"== {path.stem}: exit {code} in {time.perf_counter() - t0:.1f}s\n")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(run(Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "out"))
