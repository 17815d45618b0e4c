#!/usr/bin/env python3
"""Quick end-to-end smoke run: simulate the bundled smoke config and print
the summary table plus the manifest hash.  Finishes in a few seconds."""

import json
import pathlib
import sys
import tempfile

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from lilab import cli  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parents[1]


def main() -> int:
    out = pathlib.Path(tempfile.mkdtemp(prefix="lilab_smoke_"))
    rc = cli.main(["simulate", "--config", str(ROOT / "configs" / "smoke.json"),
                   "--out", str(out)])
    if rc != 0:
        return rc
    print((out / "summary.csv").read_text())
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"config sha256: {manifest['config_sha256']}")
    print(f"outputs in {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
