"""Generate the 120-row dmon fixtures and their exact time-weighted average power.

Averages are computed with Fractions: each sample's power holds from its own
timestamp to the next sample's (the last one for one period), samples whose
power is '-' carry no weight, and the window clips the holding intervals.
Rows are timestamped by their position among data rows, period 1 s, so a
corrupted row still occupies a slot.
"""
import random
from fractions import Fraction
from pathlib import Path

HEADER = "# gpu    pwr  gtemp  mtemp   mclk   pclk\n# Idx      W      C      C    MHz    MHz\n"
OUT = Path(__file__).resolve().parents[2] / "tests" / "fixtures"

rng = random.Random(20240611)
rows = []
for i in range(120):
    if i < 8:
        p, sm, mem = 31 + rng.randint(0, 3), 210, 405
    elif i < 14:
        p, sm, mem = 60 + (i - 8) * 55 + rng.randint(-4, 4), 2520, 10501
    elif i < 110:
        p, sm, mem = 402 + rng.randint(-14, 14), 2505 + 15 * rng.randint(0, 1), 10501
    else:
        p, sm, mem = 120 - (i - 110) * 8 + rng.randint(-3, 3), 1200, 5001
    rows.append([0, p, 40 + i // 10, "-", mem, sm])
for i in (17, 63, 64, 101):
    rows[i][1] = "-"
rows[88][5] = "-"


def render(rows):
    out = []
    for i, r in enumerate(rows):
        if i % 20 == 0:
            out.append(HEADER)
        out.append("%5s %6s %6s %6s %6s %6s\n" % tuple(r))
    return "".join(out)


CORRUPT_AT = 45
CORRUPT_ROW = "    0    4#1     44      -  10501   2520\n"


def average(samples, t0, t1):
    """samples: (timestamp, power or None) in time order."""
    num = Fraction(0)
    den = Fraction(0)
    for i, (t, p) in enumerate(samples):
        if p is None:
            continue
        end = samples[i + 1][0] if i + 1 < len(samples) else t + 1
        a = max(t, t0)
        b = min(end, t1)
        if b <= a:
            continue
        num += p * (b - a)
        den += b - a
    return num / den


clean = render(rows)
(OUT / "dmon_120.txt").write_text(clean)
lines = clean.splitlines(keepends=True)
data_seen = 0
for idx, line in enumerate(lines):
    if not line.startswith("#"):
        if data_seen == CORRUPT_AT:
            lines.insert(idx, CORRUPT_ROW)
            break
        data_seen += 1
(OUT / "dmon_120_corrupt.txt").write_text("".join(lines))

powers = [None if r[1] == "-" else Fraction(r[1]) for r in rows]
clean_samples = [(Fraction(i), p) for i, p in enumerate(powers)]
# In the corrupted log the bad row takes slot 45, so every later row sits one
# slot later and sample 44 holds across the gap.
corrupt_samples = [(Fraction(i if i < CORRUPT_AT else i + 1), p) for i, p in enumerate(powers)]
windows = [(Fraction(0), Fraction(120)), (Fraction(21, 2), Fraction(281, 4))]
for name, samples in (("clean", clean_samples), ("corrupt", corrupt_samples)):
    for t0, t1 in windows:
        if name == "corrupt" and t1 == 120:
            t1 = Fraction(121)
        v = average(samples, t0, t1)
        print(f"{name} [{float(t0)}, {float(t1)}] = {v} = {float(v)!r}")
print("present power readings:", sum(p is not None for p in powers))
