"""Regenerate the bundled example spaces and the synthetic reduction trace.

Runtimes in the trace come from a simple analytic model with seeded noise,
not from hardware.
"""
import json
import math
import random
from pathlib import Path

from ktune.space import parse_space_definition
from ktune.search import Status
from ktune.trace import Trace, TraceRow

DATA = Path(__file__).resolve().parent.parent / "src" / "ktune" / "data"

REDUCTION = {
    "parameters": [
        {"name": "WORK_GROUP_SIZE_X", "values": [32, 64, 128, 256, 512]},
        {"name": "VECTOR_SIZE", "values": [1, 2, 4, 8, 16]},
        {"name": "UNBOUNDED_WG", "values": [0, 1]},
        {"name": "WG_NUM", "values": [0, 30, 60, 90]},
        {"name": "USE_ATOMICS", "values": [0, 1]},
    ],
    "constraints": [
        "UNBOUNDED_WG == 1 && WG_NUM == 0 && USE_ATOMICS == 0 || UNBOUNDED_WG == 0 && WG_NUM != 0"
    ],
}

EXAMPLE = {
    "parameters": [
        {"name": "WG_X", "values": [16, 32, 64]},
        {"name": "WG_Y", "values": [1, 2, 4, 8]},
    ],
    "constraints": ["WG_X * WG_Y <= 128"],
}


def reduction_runtime(c, rng, n=1 << 24, peak=256.0):
    eff = 0.9
    eff *= {32: 0.55, 64: 0.8, 128: 0.95, 256: 1.0, 512: 0.92}[c["WORK_GROUP_SIZE_X"]]
    eff *= {1: 0.6, 2: 0.8, 4: 1.0, 8: 0.97, 16: 0.85}[c["VECTOR_SIZE"]]
    if c["UNBOUNDED_WG"]:
        eff *= 0.7  # second launch over many partial sums
    else:
        eff *= {30: 0.85, 60: 0.97, 90: 1.0}[c["WG_NUM"]]
        eff *= 1.02 if c["USE_ATOMICS"] else 0.98
    noise = math.exp(rng.gauss(0, 0.03))
    return int(round(4 * n / (eff * peak) * noise))


def main():
    DATA.mkdir(exist_ok=True)
    (DATA / "reduction_space.json").write_text(json.dumps(REDUCTION, indent=2) + "\n")
    (DATA / "example_space.json").write_text(json.dumps(EXAMPLE, indent=2) + "\n")
    space = parse_space_definition(json.dumps(REDUCTION))
    rng = random.Random(2019)
    rows = [TraceRow(c.as_dict(), reduction_runtime(c, rng), 150_000_000, Status.OK)
            for c in space.configurations()]
    Trace("synthetic-gpu", space.sha256(), rows).write(DATA / "reduction_synthetic.jsonl")
    print(f"{space.cardinality()} configurations written")


if __name__ == "__main__":
    main()
