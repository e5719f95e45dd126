"""Least-squares fit of the synthetic renderer's frame-cost model.

frame_time_ms = fixed_overhead_ms
              + base_cost_ms * (splats + animation_penalty * animated_splats) / (tflops * 1e6)

Fitted to the RTX 4090 column of the reference frame-rate table (static and
animated rows), with tflops set to the simulated device's throughput at the
4090 tier operating point. Residuals are relative FPS errors.
"""
import json
import numpy as np
from scipy.optimize import least_squares

TFLOPS_4090 = 54.5634  # simulated throughput at (450 W, 2520 MHz, 10501 MHz)
LODS = [3448340, 2795038, 1834311, 580604]
ANIMATED = 38844
STATIC_FPS = [44.8, 47.9, 51.3, 58.8]
ANIMATED_FPS = [38.9, 41.2, 45.3, 49.6]


def fps(params, splats, anim):
    overhead, base, penalty = params
    ms = overhead + base * (splats + penalty * anim) / (TFLOPS_4090 * 1e6)
    return 1000.0 / ms


def residuals(params):
    r = [(fps(params, s, 0) - y) / y for s, y in zip(LODS, STATIC_FPS)]
    r += [(fps(params, s, ANIMATED) - y) / y for s, y in zip(LODS, ANIMATED_FPS)]
    return np.array(r)


def main():
    fit = least_squares(residuals, x0=[15.0, 100.0, 40.0], bounds=([0, 0, 0], [1000, 1e5, 1e4]))
    overhead, base, penalty = fit.x
    out = {
        "fixed_overhead_ms": round(overhead, 4),
        "base_cost_ms": round(base, 4),
        "animation_penalty": round(penalty, 4),
    }
    rounded = [out["fixed_overhead_ms"], out["base_cost_ms"], out["animation_penalty"]]
    out["static_fps"] = [round(fps(rounded, s, 0), 2) for s in LODS]
    out["animated_fps"] = [round(fps(rounded, s, ANIMATED), 2) for s in LODS]
    out["residuals_pct"] = [round(100 * v, 2) for v in residuals(rounded)]
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
