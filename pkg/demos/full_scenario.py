"""Everything at once: offloading figures, latency, gas and the sharing log."""
# %%
from __future__ import annotations

import sys
import tempfile
from pathlib import Path

from medshare.scenario import emit_report, load_config, run_all

cfg = load_config(seed=7)
report = run_all(cfg)
for name, (header, rows) in report.tables.items():
    print(f"{name}: {len(rows)} rows, columns {', '.join(header)}")

# %%
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="medshare-"))
written = emit_report(report, out)
print(f"wrote {len(written)} files under {out}")
print((out / "table2_gas.csv").read_text())
