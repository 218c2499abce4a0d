#!/usr/bin/env python3
"""Regenerates data/feeder13.feeder and data/feeder13.profiles.csv.

usage: tools/gen_fixture.py [data_dir]
"""
import math
import pathlib
import sys

LOAD_SCALE = 0.35

# per-mile impedances (ohm); the trunk is untransposed
TRUNK = {("a", "a"): (0.40, 0.95), ("b", "b"): (0.39, 0.98), ("c", "c"): (0.41, 0.96),
         ("a", "b"): (0.15, 0.50), ("a", "c"): (0.15, 0.42), ("b", "c"): (0.15, 0.38)}
TWO = {("a", "a"): (0.60, 0.80), ("b", "b"): (0.60, 0.80), ("c", "c"): (0.60, 0.80),
       ("a", "b"): (0.20, 0.35), ("b", "c"): (0.20, 0.35)}


def single(r, x, ph):
    return {(ph, ph): (r, x)}


def zstr(tmpl, length, phases):
    out = []
    for p in "abc":
        for q in "abc":
            key = (p, q) if (p, q) in tmpl else (q, p)
            if p in phases and q in phases and key in tmpl:
                r, x = tmpl[key]
                out.append(f"{r * length:.5g}+{x * length:.5g}j")
            else:
                out.append("0")
    return " ".join(out)


LINES = [("L01", "sub", "n01", "abc", TRUNK, 0.3, 1.2),
         ("L02", "n01", "n02", "abc", TRUNK, 0.6, 1.2),
         ("L03", "n02", "n03", "abc", TRUNK, 0.6, 1.0),
         ("L04", "n01", "n04", "ab", TWO, 0.4, 0.5),
         ("L05", "n02", "n05", "a", single(1.0, 1.0, "a"), 0.5, 0.5),
         ("L06", "n05", "n06", "a", single(1.0, 1.0, "a"), 0.4, 0.5),
         ("L07", "n03", "n07", "bc", TWO, 0.4, 0.5),
         ("L08", "n07", "n08", "c", single(1.0, 0.6, "c"), 0.3, 0.5),
         ("L09", "n03", "n09", "abc", TRUNK, 0.5, 1.0),
         ("L10", "n09", "n10", "abc", TRUNK, 0.4, 1.0),
         ("L11", "n10", "n11", "b", single(1.1, 0.6, "b"), 0.3, 0.5),
         ("L12", "n10", "n12", "c", single(1.1, 0.6, "c"), 0.3, 0.5)]
BUSES = {"sub": "abc", "n01": "abc", "n02": "abc", "n03": "abc", "n04": "ab", "n05": "a", "n06": "a",
         "n07": "bc", "n08": "c", "n09": "abc", "n10": "abc", "n11": "b", "n12": "c"}
RES = ("0.3 0.4 0.3", "0.5 0.3 0.2")
COM = ("0.2 0.2 0.6", "0.4 0.2 0.4")
IND = ("0.1 0.3 0.6", "0.3 0.3 0.4")
LOADS = [("n01", "abc", 200, RES), ("n02", "abc", 150, COM), ("n03", "abc", 150, RES), ("n04", "ab", 90, IND),
         ("n05", "a", 100, RES), ("n06", "a", 80, RES), ("n07", "bc", 100, COM), ("n08", "c", 80, RES),
         ("n09", "abc", 120, IND), ("n10", "abc", 100, RES), ("n11", "b", 80, COM), ("n12", "c", 70, RES)]


def feeder():
    out = ["# 13-bus synthetic unbalanced feeder: one gang regulator, two capacitor banks, four PV units",
           "BASE 5 4.16", ""]
    out += [f"BUS {b} {ph}" + (" SLACK" if b == "sub" else "") for b, ph in BUSES.items()]
    out.append("")
    out += [f"LINE {lid} {f} {t} {ph} Z {zstr(tm, ln, ph)} SMAX {smax}" for lid, f, t, ph, tm, ln, smax in LINES]
    out += ["", "REG R1 L01 abc GANG", "CAP C1 n02 abc 200 GANG", "CAP C2 n10 c 100", ""]
    k = 0
    for b, ph, kw, (kp, kq) in LOADS:
        for p in ph:
            k += 1
            p0 = kw * LOAD_SCALE
            out.append(f"LOAD D{k:02d} {b} {p} {p0:g} {p0 * 0.45:.4g} ZIP {kp} {kq}")
    out += ["",
            "PV PV1 n01 abc 300 345 PROFILE clearsky",
            "PV PV2 n02 abc 300 345 PROFILE clearsky",
            "PV PV3 n05 a 120 138 PROFILE clearsky",
            "PV PV4 n06 a 100 115 PROFILE clearsky"]
    return "\n".join(out) + "\n"


def profiles():
    rows = ["profile_id,timestamp_minutes,multiplier"]
    sunrise, sunset = 360, 1140
    for m in range(0, 1441, 5):
        s = math.sin(math.pi * (m - sunrise) / (sunset - sunrise)) ** 2 if sunrise < m < sunset else 0.0
        rows.append(f"clearsky,{m},{s:.6f}")
    # overnight trough, morning bump, evening peak
    for m in range(0, 1441, 15):
        h = m / 60
        s = (0.55 + 0.2 * math.exp(-((h - 8) / 1.8) ** 2) + 0.45 * math.exp(-((h - 19) / 2.5) ** 2)
             + 0.1 * math.exp(-((h - 13) / 3) ** 2))
        rows.append(f"residential,{m},{s:.6f}")
    return "\n".join(rows) + "\n"


if __name__ == "__main__":
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else pathlib.Path(__file__).resolve().parent.parent / "data")
    (root / "feeder13.feeder").write_text(feeder())
    (root / "feeder13.profiles.csv").write_text(profiles())
