import json
import subprocess
import sys

import pytest

from phasecurv import cli


def test_core_does_not_import_matplotlib():
    code = "import sys, phasecurv.cli, phasecurv.minimize, phasecurv.recovery; print('matplotlib' in sys.modules)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"


def test_plot_flag_renders(tmp_path):
    pytest.importorskip("matplotlib")
    out = tmp_path / "c"
    assert cli.main(["convexify", "--phi", "cos4", "--beta", "0.9", "--n-dirs", "256", "--plot", "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["figures"]
    for f in man["figures"]:
        assert (out / f).stat().st_size > 0
