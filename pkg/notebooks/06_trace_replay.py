"""
Traces, digests and replay
==========================

A run is a pure function of (scenario, seed). The trace digest is computed
even when the trace itself is not kept, and the command line ``replay``
subcommand re-runs a recorded trace and reports the first differing line.
"""

# %%
import tempfile
from pathlib import Path

from permitbft.cli import main
from permitbft.fuzz import random_scenario
from permitbft.simnet import run

sc = random_scenario(7)
a, b = run(sc), run(sc, keep_trace=False)
print(a.trace_digest == b.trace_digest, a.trace_digest[:16])
print(run(sc.with_seed(8)).trace_digest[:16])

# %%
ROOT = Path(__file__).resolve().parents[1]
scenario = str(ROOT / "scenarios" / "partition_async.toml")
with tempfile.TemporaryDirectory() as tmp:
    trace = Path(tmp) / "trace.txt"
    print("run:", main(["run", "--scenario", scenario, "--trace", str(trace)]))
    print("replay:", main(["replay", "--scenario", scenario, "--trace", str(trace)]))
    lines = trace.read_text().splitlines()
    lines[10] += " tampered"
    trace.write_text("\n".join(lines) + "\n")
    print("replay after edit:", main(["replay", "--scenario", scenario, "--trace", str(trace)]))
