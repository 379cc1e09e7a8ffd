"""Drive the full command-line pipeline programmatically.

The same five subcommands work from a shell::

    atrellis simulate --fixture camera --duration 1800 --seed 3 -o t.jsonl
    atrellis profile t.jsonl -o profile.json
    atrellis train t.jsonl profile.json -o ensemble.json
    atrellis detect t.jsonl ensemble.json -o verdicts.jsonl
    atrellis eval t.jsonl verdicts.jsonl -o metrics.json

All artifacts are JSON / JSON-lines and byte-identical across reruns
with the same seeds.
"""

import json
import tempfile
from pathlib import Path

from atrellis.cli import main

work = Path(tempfile.mkdtemp(prefix="atrellis-demo-"))
clean = str(work / "clean.jsonl")
trace = str(work / "trace.jsonl")
profile = str(work / "profile.json")
ensemble = str(work / "ensemble.json")
verdicts = str(work / "verdicts.jsonl")
metrics = str(work / "metrics.json")

attack = json.dumps({"kind": "HttpMasqCnc", "start": 100, "rate": 0.05,
                     "duration": 400,
                     "target": {"domain": "api.cam-vendor.com",
                                "ip": "203.0.113.11"}})

# Train on clean traffic, detect on a trace with an injected attack.
for args in (
    ["simulate", "--fixture", "camera", "--duration", "1800",
     "--seed", "3", "-o", clean],
    ["simulate", "--fixture", "camera", "--duration", "1800",
     "--seed", "3", "--attack", attack, "-o", trace],
    ["profile", clean, "-o", profile],
    ["train", clean, profile, "--epochs", "80", "--seed", "3",
     "-o", ensemble],
    ["detect", trace, ensemble, "-o", verdicts],
    ["eval", trace, verdicts, "-o", metrics],
):
    print("\n$ atrellis", " ".join(args))
    rc = main(args)
    assert rc == 0, rc

doc = json.loads(Path(metrics).read_text())
print(f"\nfinal metrics: TPR {doc['tpr']:.2f} at FPR {doc['fpr']:.3f} "
      f"over {doc['n_attack']} attack / {doc['n_benign']} benign flows")
print("artifacts in", work)
