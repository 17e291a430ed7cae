#!/usr/bin/env python3
"""Write the daemon's published command list where the console build can
check its command constructors against it (frontend/schema/commands.json)."""

import json
from pathlib import Path

from picontrol.api import COMMAND_SCHEMA

out = Path(__file__).resolve().parent.parent / "frontend" / "schema" / "commands.json"
out.parent.mkdir(parents=True, exist_ok=True)
out.write_text(json.dumps({"commands": COMMAND_SCHEMA}, indent=2, sort_keys=True) + "\n")
print(f"wrote {out}")
