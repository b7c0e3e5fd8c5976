"""Run every entry of suite.json and write a digest table of the CSV outputs.

    python3 scripts/run_suite.py --out runs/suite --threads 2

Prints one line per run and writes ``<out>/csv_digests.json``.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

from sandwich.cli import config_digest, load_config, main

HERE = Path(__file__).resolve().parent


def run_suite(out: Path, threads: int = 1, suite: Path = HERE / "suite.json") -> dict:
    plan = json.loads(suite.read_text())
    digests = {}
    codes = {}
    for entry in plan["runs"]:
        cfg_path = suite.parent / entry["config"]
        command = entry["command"]
        code = main([command, "--config", str(cfg_path), "--out", str(out), "--threads", str(threads)])
        run_dir = out / f"{command}-{config_digest(command, load_config(str(cfg_path), None).raw)}"
        codes[run_dir.name] = code
        for csv in sorted(run_dir.glob("*.csv")):
            digests[f"{run_dir.name}/{csv.name}"] = hashlib.sha256(csv.read_bytes()).hexdigest()
    result = {"threads": threads, "exit_codes": codes, "csv_sha256": digests}
    (out / "csv_digests.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    return result


def cli(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/suite")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--suite", default=str(HERE / "suite.json"))
    args = p.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = run_suite(out, args.threads, Path(args.suite))
    return 0 if all(c == 0 for c in res["exit_codes"].values()) else 1


if __name__ == "__main__":
    sys.exit(cli())
