"""Run the flagship composite scenario and summarise the artifacts.

Equivalent to ``pleonet run scenarios/flagship.yaml --out out/flagship``.
"""

import csv
import sys
from pathlib import Path

from pleonet.simkit.runner import run
from pleonet.simkit.scenario import load_scenario

root = Path(__file__).resolve().parents[1]
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "out" / "flagship"
report = run(load_scenario(str(root / "scenarios" / "flagship.yaml")), str(out))

print("events:", report.events_by_kind)
for fid, f in report.flows.items():
    print(f"flow {fid:>9}: delivered {f['delivery_ratio']:.4f}, mean delay {1e3 * f['mean_delay_s']:.2f} ms")
print("SLA:", report.sla)
print("training:", report.training)

with open(out / "links.csv") as fh:
    rows = [r for r in csv.DictReader(fh) if r["gt_id"] == "london"]
outage = sum(r["outage"] == "1" for r in rows) / len(rows)
print(f"london access link in outage {outage:.1%} of fade updates")
print("artifacts:", ", ".join(report.outputs), "in", out)
