#!/usr/bin/env python3
"""Writes the handcrafted benchmark suite under benchmarks/.

Each case is a directory with layout.txt, config.json and any control map or
reference image it uses. Re-running the script reproduces the files exactly.
"""

import json
import math
import struct
import sys
import zlib
from pathlib import Path

SIZE = 32

COLORS = {
    "stripes-red": (0.9, -0.8, -0.8),
    "dots-blue": (-0.8, -0.5, 0.95),
    "checker-green": (-0.8, 0.85, -0.8),
    "plain-yellow": (0.9, 0.85, -0.8),
    "diagonal-cyan": (-0.8, 0.85, 0.9),
    "waves-magenta": (0.9, -0.8, 0.85),
}


def grid(fn):
    return [[fn(y, x) for x in range(SIZE)] for y in range(SIZE)]


def nearest(points):
    def fn(y, x):
        d = [(py - y) ** 2 + (px - x) ** 2 for py, px in points]
        return d.index(min(d)) + 1
    return fn


def disc(cy, cx, r):
    return lambda y, x: (y - cy) ** 2 + (x - cx) ** 2 <= r * r


LAYOUTS = {
    "halves-vertical": lambda y, x: 1 if x < 16 else 2,
    "halves-horizontal": lambda y, x: 1 if y < 16 else 2,
    "thirds-vertical": lambda y, x: 1 + min(x * 3 // SIZE, 2),
    "quadrants": lambda y, x: 1 + (x >= 16) + 2 * (y >= 16),
    "diagonal-split": lambda y, x: 1 if x + y < SIZE else 2,
    "center-square": lambda y, x: 2 if 8 <= y < 24 and 8 <= x < 24 else 1,
    "center-disc": lambda y, x: 2 if disc(15.5, 15.5, 9)(y, x) else 1,
    "l-shape": lambda y, x: 1 if (x < 12 or y >= 20) else 2,
    "band-over-halves": lambda y, x: 1 if y < 12 else (2 if x < 16 else 3),
    "four-bands": lambda y, x: 1 + y // 8,
    "rings": lambda y, x: 1 + sum(disc(15.5, 15.5, r)(y, x) for r in (14, 7)),
    "diagonal-bands": lambda y, x: 1 + min((x + y) * 3 // (2 * SIZE - 1), 2),
    "plus-and-corners": lambda y, x: 2 if (10 <= y < 22 or 10 <= x < 22) else 1,
    "column-and-stack": lambda y, x: 1 if x < 12 else (2 if y < 16 else 3),
    "two-discs": lambda y, x: 2 if disc(10, 10, 7)(y, x) else (3 if disc(22, 22, 7)(y, x) else 1),
    "wedge": lambda y, x: 2 if y >= 8 and abs(x - 15.5) <= (y - 8) * 0.7 else 1,
    "big-checker": lambda y, x: 1 + ((x // 16) + (y // 16)) % 2,
    "cells": nearest([(6, 6), (8, 26), (26, 12)]),
    "reference-halves": lambda y, x: 1 if x < 16 else 2,
    "control-square": lambda y, x: 2 if 6 <= y < 26 and 6 <= x < 26 else 1,
}

TOKENS = {
    "halves-vertical": {1: ["stripes-red"], 2: ["dots-blue"]},
    "halves-horizontal": {1: ["plain-yellow"], 2: ["checker-green"]},
    "thirds-vertical": {1: ["diagonal-cyan"], 2: ["waves-magenta"], 3: ["stripes-red"]},
    "quadrants": {1: ["dots-blue"], 2: ["plain-yellow"], 3: ["waves-magenta"], 4: ["checker-green"]},
    "diagonal-split": {1: ["checker-green"], 2: ["stripes-red"]},
    "center-square": {1: ["waves-magenta"], 2: ["plain-yellow"]},
    "center-disc": {1: ["diagonal-cyan"], 2: ["dots-blue"]},
    "l-shape": {1: ["stripes-red", "plain-yellow"], 2: ["diagonal-cyan"]},
    "band-over-halves": {1: ["plain-yellow"], 2: ["dots-blue"], 3: ["stripes-red"]},
    "four-bands": {1: ["stripes-red"], 2: ["checker-green"], 3: ["dots-blue"], 4: ["waves-magenta"]},
    "rings": {1: ["checker-green"], 2: ["waves-magenta"], 3: ["plain-yellow"]},
    "diagonal-bands": {1: ["dots-blue"], 2: ["diagonal-cyan"], 3: ["plain-yellow"]},
    "plus-and-corners": {1: ["stripes-red"], 2: ["waves-magenta", "dots-blue"]},
    "column-and-stack": {1: ["waves-magenta"], 2: ["checker-green"], 3: ["diagonal-cyan"]},
    "two-discs": {1: ["plain-yellow"], 2: ["stripes-red"], 3: ["dots-blue"]},
    "wedge": {1: ["dots-blue"], 2: ["checker-green"]},
    "big-checker": {1: ["diagonal-cyan"], 2: ["stripes-red"]},
    "cells": {1: ["waves-magenta"], 2: ["plain-yellow"], 3: ["checker-green"]},
    "reference-halves": {1: ["stripes-red"], 2: ["waves-magenta"]},
    "control-square": {1: ["plain-yellow"], 2: ["dots-blue"]},
}


def stripes_reference(token):
    """Clean stripes render in the token color, period 8."""
    fg = COLORS[token]
    bg = tuple(0.2 * c - 0.55 for c in fg)
    return grid(lambda y, x: fg if x % 8 < 4 else bg)


def dots_control():
    """Ink where a period-8 dot lattice would be drawn."""
    return grid(lambda y, x: 1 if math.hypot(x % 8 - 3.5, y % 8 - 3.5) <= 2.2 else 0)


def write_png(path, pixels):
    def encode(v):
        v = min(1.0, max(-1.0, v))
        return int(math.floor((v + 1.0) / 2.0 * 255.0 + 0.5))

    raw = b"".join(b"\x00" + bytes(encode(c) for px in row for c in px) for row in pixels)

    def chunk(kind, data):
        body = kind + data
        return struct.pack(">I", len(data)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    header = struct.pack(">IIBBBBB", SIZE, SIZE, 8, 2, 0, 0, 0)
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) +
                     chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b""))


def write_grid(path, rows):
    path.write_text("".join(" ".join(str(v) for v in row) + "\n" for row in rows))


def main(root):
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for index, (name, fn) in enumerate(LAYOUTS.items(), start=1):
        case = f"{index:02d}-{name}"
        names.append(case)
        d = root / case
        d.mkdir(exist_ok=True)
        write_grid(d / "layout.txt", grid(fn))
        segments = {str(k): {"tokens": v} for k, v in TOKENS[name].items()}
        if name == "reference-halves":
            write_png(d / "reference.png", stripes_reference("stripes-red"))
            segments["1"]["reference"] = "reference.png"
        if name == "control-square":
            write_grid(d / "control.txt", dots_control())
            segments["2"]["control"] = "control.txt"
        config = {
            "layout": "layout.txt",
            "segments": segments,
            "models": {"denoiser": "../models/denoiser.cdif", "classifier": "../models/classifier.cdif"},
            "output_dir": f"../../out/{case}",
        }
        (d / "config.json").write_text(json.dumps(config, indent=2) + "\n")
    (root / "suite.txt").write_text("".join(n + "\n" for n in names))


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "benchmarks")
