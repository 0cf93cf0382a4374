"""Smoke test for the driftcast Python bindings.

Imports an installed `driftcast_py` if there is one; otherwise builds the
extension with cargo and loads it from a temporary directory.
"""

import importlib
import math
import pathlib
import shutil
import subprocess
import sys
import sysconfig
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        return importlib.import_module("driftcast_py")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "driftcast-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "libdriftcast_py.so"
    tmp = pathlib.Path(tempfile.mkdtemp())
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(built, tmp / f"driftcast_py{suffix}")
    sys.path.insert(0, str(tmp))
    return importlib.import_module("driftcast_py")


def main():
    m = load()

    dt = m.rest_state_cfl(500, 300, 2220.0, 2220.0)
    expected = 0.8 * 0.25 * 2220.0 / math.sqrt(9.806 * 230.0)
    assert abs(dt - expected) < 1e-3 * expected, (dt, expected)

    assert m.solve_alpha(0.0, 100.0, 100.0) == 1.0
    assert m.solve_alpha(3.0, 100.0, 100.0) < 1.0
    assert abs(m.lambert_w0(math.e) - 1.0) < 1e-12

    eta, hu, hv = m.double_jet(100, 60, 11100.0, 11100.0, steps=10)
    assert len(eta) == len(hu) == len(hv) == 6000
    assert max(abs(v) for v in hu) > 10.0

    cfg = m.desk_config()
    assert "[grid]" in cfg
    small = cfg.replace("nx = 100", "nx = 40").replace("duration = 216000.0", "duration = 90000.0")
    lines = m.truth_observations(small, seed=1)
    assert lines and all(len(l.split(",")) == 7 for l in lines)

    assert m.compute_rank(1e9, [0.0] * 5) == 5

    try:
        m.rest_state_cfl(4, 4, 1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("tiny grid accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
