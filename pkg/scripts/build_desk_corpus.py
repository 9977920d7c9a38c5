#!/usr/bin/env python3
"""Expand the seed corpus with dataflow-preserving variants.

Each hand-written design gains deterministic rewrites (renames, operand
swaps, wire splits, item reorders, wrapper modules) written next to it
as <stem>_v<i>.v. Re-running the script reproduces the same files.
"""

from __future__ import annotations

import argparse
import re
import sys
import zlib
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ipsim.variants import synthesize_variants  # noqa: E402

VARIANT_STEM = re.compile(r"_v\d+$")


def seed_files(root: Path) -> list[Path]:
    return [p for p in sorted(root.rglob("*.v")) if not VARIANT_STEM.search(p.stem)]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", default=Path(__file__).resolve().parent.parent / "corpus",
                        type=Path)
    parser.add_argument("--rtl-per-seed", type=int, default=2)
    parser.add_argument("--netlist-per-seed", type=int, default=1)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    written = 0
    for source in seed_files(args.root):
        relative = source.relative_to(args.root).as_posix()
        is_netlist = "netlist" in source.parts or source.stem.endswith("_nl")
        count = args.netlist_per_seed if is_netlist else args.rtl_per_seed
        if count <= 0:
            continue
        file_seed = (args.seed << 32) | zlib.crc32(relative.encode())
        texts = synthesize_variants(source.read_text(), count, file_seed, str(source))
        for i, text in enumerate(texts):
            target = source.with_name(f"{source.stem}_v{i}.v")
            target.write_text(text)
            written += 1
            print(target.relative_to(args.root).as_posix())
    print(f"wrote {written} variants under {args.root}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
