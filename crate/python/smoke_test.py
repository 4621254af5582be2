"""Smoke test for the stochlod_py extension.

Build first, e.g. `cargo build -p stochlod-py --features extension-module --release`,
then run `python python/smoke_test.py`. The script looks for the built
library under target/ unless `stochlod_py` is already importable.
"""

import glob
import importlib
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))


def import_module():
    try:
        return importlib.import_module("stochlod_py")
    except ImportError:
        pass
    libs = []
    for profile in ("release", "debug"):
        libs += glob.glob(os.path.join(ROOT, "target", profile, "libstochlod_py.so"))
        libs += glob.glob(os.path.join(ROOT, "target", profile, "libstochlod_py.dylib"))
    if not libs:
        sys.exit("stochlod_py not built; run cargo build -p stochlod-py --features extension-module")
    tmp = tempfile.mkdtemp()
    shutil.copy(libs[0], os.path.join(tmp, "stochlod_py.so"))
    sys.path.insert(0, tmp)
    return importlib.import_module("stochlod_py")


def main():
    sl = import_module()
    assert sl.split_counts(300) == (240, 30, 30)
    assert abs(sl.matern_cov(1.0, 1.0, 0.1, 0.0) - 1.0) < 1e-15

    d = sl.Discretization(0.25, 1 / 16, 1 / 32, 1)
    assert (d.num_elements, d.input_len, d.output_len) == (16, 144, 64)

    z = d.sample_gaussian(0.5, 1.0, 1 / 16, seed=3)
    assert len(z) == d.num_field_cells
    assert sl.contrast([math.exp(v) for v in z]) > 1.0

    locals_ = d.local_surrogates(z)
    assert len(locals_) == 16 and all(len(v) == 64 for v in locals_)

    u_pg = d.pglod_solve(z)
    u_fem = d.fem_solve(z)
    err = d.coarse_l2_norm([a - b for a, b in zip(u_pg, u_fem)])
    ref = d.coarse_l2_norm(u_fem)
    assert ref > 0 and err / ref < 0.5, (err, ref)

    net = sl.Mlp([d.input_len, 32, d.output_len], seed=1)
    out = net.forward(d.patch_inputs(z))
    assert len(out) == 16 and len(out[0]) == d.output_len

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ckpt")
        net.save(path)
        back = sl.Mlp.load(path)
        assert back.widths == net.widths
        assert back.forward([[0.5] * d.input_len]) == net.forward([[0.5] * d.input_len])

    try:
        sl.Discretization(0.3, 0.1, 0.05)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid mesh accepted")

    print("stochlod_py smoke test passed")


if __name__ == "__main__":
    main()
