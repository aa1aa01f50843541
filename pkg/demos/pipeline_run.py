"""
The whole workflow from one config file
=======================================

The bundled synthetic config generates a 20-neuron network with a central
neuron and its membrane potential.  It then runs every stage from ingestion
to depth validation.  Each stage writes its outputs to the run directory, and
their hashes are listed in ``manifest.json``.
"""

import json
import tempfile
from pathlib import Path

from hawkesneuro.cli import bundled_config
from hawkesneuro.config import apply_overrides, loads_toml
from hawkesneuro.pipeline import run_pipeline

cfg = loads_toml(bundled_config())
# fewer Monte-Carlo repetitions than the bundled defaults, to keep this quick
apply_overrides(cfg, ["depth.mc=3", "depth.nrep=30", "gof.subsamples=30"])

out = Path(tempfile.mkdtemp()) / "run"
manifest = run_pipeline(cfg, out, threads=2)
for stage in manifest["stages"]:
    print(f"{stage['name']:18s} {stage['status']}  {', '.join(stage['outputs'])}")

print(json.loads((out / "subnetwork.json").read_text()))
print(json.loads((out / "compare.json").read_text()))
