#!/usr/bin/env python3
"""Generate the 110-candle BTC demo fixture.

Closes have min 26511.2, max 49011.4 and mean 39621.6. Lows and highs are
built as a straight line plus a non-negative deviation that is symmetric about
the window centre, so the least-squares slope of the lows (highs) equals the
line slope and the lowest (highest) deviation is zero at both ends.
"""
import math
import random
import sys

N = 110
SAMPLES = 6
SUPPORT_START = 26511.033
RESISTANCE_START = 38130.8615
SAMPLE_SLOPE = 2373.7742
STEP_SLOPE = SAMPLE_SLOPE * (SAMPLES - 1) / (N - 1)
CLOSE_MIN = 26511.2
CLOSE_MAX = 49011.4
CLOSE_MEAN = 39621.6

rng = random.Random(20250708)

half = [rng.random() for _ in range(N // 2)]
bump = [0.0] * N
for i in range(N // 2):
    u = math.sin(math.pi * i / (N - 1)) ** 2
    d = 2500.0 * u * (0.4 + 0.6 * half[i]) if i > 0 else 0.0
    bump[i] = d
    bump[N - 1 - i] = d
low_dev = bump
high_dev = [0.8 * b for b in bump]

lows = [SUPPORT_START + STEP_SLOPE * i + low_dev[i] for i in range(N)]
highs = [RESISTANCE_START + STEP_SLOPE * i - high_dev[i] for i in range(N)]

closes = [0.0] * N
weights = [0.55 + 0.3 * rng.random() for _ in range(N)]
for i in range(N):
    closes[i] = lows[i] + weights[i] * (highs[i] - lows[i])
closes[0] = CLOSE_MIN
closes[-1] = CLOSE_MAX

# shift interior closes so the mean is exact, staying inside each bar
interior = range(1, N - 1)
need = CLOSE_MEAN * N - sum(closes)
shift = need / (N - 2)
for i in interior:
    closes[i] += shift
    assert lows[i] < closes[i] < highs[i]
assert min(closes) == CLOSE_MIN and max(closes) == CLOSE_MAX
assert abs(sum(closes) / N - CLOSE_MEAN) < 1e-6

opens = [closes[0] + 150.0] + closes[:-1]
for i in range(N):
    opens[i] = min(max(opens[i], lows[i]), highs[i])

day0 = 1600000000 // 86400  # 2020-09-13
import datetime
start = datetime.date(2023, 1, 1)
out = sys.stdout
out.write("timestamp,open,high,low,close,volume\n")
for i in range(N):
    d = start + datetime.timedelta(days=i)
    vol = round(15000 + 10000 * rng.random(), 2)
    out.write(f"{d.isoformat()},{opens[i]!r},{highs[i]!r},{lows[i]!r},{closes[i]!r},{vol!r}\n")
