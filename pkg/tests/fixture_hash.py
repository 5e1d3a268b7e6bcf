import hashlib
import json
from pathlib import Path

from cmix import cli

FIXTURES = Path(__file__).parent / "fixtures"


def verify_hash(config_name, workers, out_dir):
    """sha256 of report + reps.csv for one fixture config."""
    kind = "tail" if "tail" in config_name else "rate"
    out = str(Path(out_dir) / f"{kind}{workers}")
    code = cli.main([f"verify-{kind}", "--config", str(FIXTURES / config_name), "--workers", str(workers),
                     "--out", out])
    assert code == 0
    data = Path(out + ".jsonl").read_bytes() + Path(out + ".reps.csv").read_bytes()
    return hashlib.sha256(data).hexdigest()


def frozen_hashes():
    return json.loads((FIXTURES / "hashes.json").read_text())
