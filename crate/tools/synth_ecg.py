#!/usr/bin/env python3
"""Generate the synthetic ECG records in data/ecg.

Each beat is a sum of Gaussian P, Q, R, S and T waves. Beat-to-beat timing
jitters, the baseline wanders slowly and a little sensor noise is added.
Samples are 11-bit ADC codes around a 1024 offset at 200 codes per mV,
360 Hz.

    python3 tools/synth_ecg.py data/ecg
"""
import sys
from pathlib import Path

import numpy as np

FS = 360
SECONDS = 60
GAIN = 200.0
OFFSET = 1024

# record id -> (seed, heart rate bpm, QRS width scale, R amplitude mV, T amplitude mV)
RECORDS = {
    "100": (100, 74, 1.0, 1.6, 0.30),
    "104": (104, 78, 1.3, 1.3, 0.25),
    "111": (111, 70, 1.6, 1.1, -0.20),
    "210": (210, 92, 1.2, 1.4, 0.35),
    "230": (230, 82, 1.1, 1.5, 0.28),
}


def record(seed, hr, qrs, r_amp, t_amp):
    rng = np.random.default_rng(seed)
    n = FS * SECONDS
    t = np.arange(n) / FS
    x = np.zeros(n)
    # (offset s, amplitude mV, width s)
    waves = [
        (-0.20, 0.12, 0.030),
        (-0.045 * qrs, -0.10, 0.012 * qrs),
        (0.0, r_amp, 0.014 * qrs),
        (0.045 * qrs, -0.25, 0.014 * qrs),
        (0.30, t_amp, 0.060),
    ]
    rr = 60.0 / hr
    beat = 0.25
    while beat < t[-1] + 1.0:
        for off, amp, w in waves:
            x += amp * np.exp(-((t - beat - off) ** 2) / (2 * w * w))
        beat += rr * (1.0 + 0.04 * rng.standard_normal())
    x += 0.08 * np.sin(2 * np.pi * 0.2 * t + rng.uniform(0, 2 * np.pi))
    x += 0.004 * rng.standard_normal(n)
    return np.clip(np.round(OFFSET + GAIN * x), 0, 2047).astype(int)


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for rid, params in RECORDS.items():
        s = record(*params)
        with open(out / f"{rid}.txt", "w") as f:
            f.write(f"# {rid} {FS} 11\n")
            f.write("\n".join(str(v) for v in s))
            f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/ecg")
