"""Regenerate the packaged preset tables."""

import json
from pathlib import Path

from horbit.lie import build_sl_preset

OUT = Path(__file__).resolve().parents[1] / "src" / "horbit" / "presets"

for n in (2, 3):
    p = build_sl_preset(n)
    (OUT / f"{p.name.lower()}.json").write_text(json.dumps(p.to_json(), indent=1) + "\n")
    print("wrote", p.name)
