#!/usr/bin/env python3
"""Build the demo fixtures, train all three models through the CLI, run the
linker, and print the resulting annotations.

Usage:
    python scripts/train_demo.py [workdir]
"""

import json
import sys
from pathlib import Path

from crel import cli, core, synth


def main() -> int:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_run")
    workdir.mkdir(parents=True, exist_ok=True)
    core.write_conversations(workdir / "conversations.json",
                             synth.demo_conversations())
    core.write_annotations(workdir / "gold.json", synth.demo_gold())
    synth.write_demo_kb(workdir / "kb")

    steps = [
        ["train-md", "--conversations", str(workdir / "conversations.json"),
         "--gold", str(workdir / "gold.json"), "--dim", "32", "--layers",
         "1", "--epochs", "150", "--lr", "0.05", "--seed", "0",
         "--out", str(workdir / "md.ckpt"),
         "--encoder-out", str(workdir / "enc.ckpt")],
        ["train-pel", "--conversations", str(workdir / "conversations.json"),
         "--gold", str(workdir / "gold.json"),
         "--encoder", str(workdir / "enc.ckpt"), "--freeze-encoder",
         "--epochs", "150", "--lr", "0.02", "--seed", "0",
         "--out", str(workdir / "pel.ckpt")],
        ["train-ed", "--conversations", str(workdir / "conversations.json"),
         "--gold", str(workdir / "gold.json"), "--kb", str(workdir / "kb"),
         "--out", str(workdir / "ed.json")],
        ["link", "--conversations", str(workdir / "conversations.json"),
         "--encoder", str(workdir / "enc.ckpt"),
         "--md", str(workdir / "md.ckpt"), "--pel", str(workdir / "pel.ckpt"),
         "--kb", str(workdir / "kb"), "--ed-weights", str(workdir / "ed.json"),
         "--out", str(workdir / "annotations.json")],
        ["eval", "--gold", str(workdir / "gold.json"),
         "--pred", str(workdir / "annotations.json"), "--mode", "el"],
        ["eval", "--gold", str(workdir / "gold.json"),
         "--pred", str(workdir / "annotations.json"), "--mode", "pel"],
    ]
    for argv in steps:
        print(f"$ crel {' '.join(argv)}")
        rc = cli.main(argv)
        if rc != 0:
            return rc
    print(json.dumps(
        json.loads((workdir / "annotations.json").read_text()), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
