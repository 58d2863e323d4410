"""Smoke test for the proxrec Python extension.

Build the extension first:

    cargo build --release -p proxrec-py

The script copies target/release/libproxrec_py.so to a temporary directory as
proxrec.so and imports it from there unless `proxrec` is already importable.
"""

import importlib
import math
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def load():
    try:
        return importlib.import_module("proxrec")
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libproxrec_py.so"
        if lib.exists():
            tmp = Path(tempfile.mkdtemp())
            shutil.copy(lib, tmp / "proxrec.so")
            sys.path.insert(0, str(tmp))
            return importlib.import_module("proxrec")
    sys.exit("build the extension with: cargo build --release -p proxrec-py")


def main():
    px = load()

    mask = px.Mask.generate(32, 32, 0.3, seed=1)
    assert abs(mask.fraction - 0.3) < 1e-2, mask.fraction
    op = px.Operator.masked_fourier(mask)
    assert op.image_shape == [2, 32, 32]

    x = px.phantom(32, seed=4)
    assert x.shape == [1, 2, 32, 32]
    y = op.forward(x)

    # Adjointness on the phantom itself.
    lhs = sum(a * b for a, b in zip(y.tolist(), y.tolist()))
    rhs = sum(a * b for a, b in zip(x.tolist(), op.adjoint(y).tolist()))
    assert math.isclose(lhs, rhs, rel_tol=1e-10), (lhs, rhs)

    zf = op.initial_estimate(y)
    cs = px.cs_solve(op, y, 1e-4, solver="fista", transform="tv", iters=100)
    zf_snr, cs_snr = px.snr(x, zf), px.snr(x, cs)
    print(f"zero-fill {zf_snr:.2f} dB, cs-tv {cs_snr:.2f} dB")
    assert cs_snr > zf_snr

    model = px.Model(2, residual_blocks=1, feature_maps=4, seed=0)
    assert len(model.alphas()) == 2
    out = model.reconstruct(op, y, zf)
    assert out.shape == x.shape
    assert 0.0 <= px.ssim(x, out)[0] <= 1.0

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "model.prxm"
        model.save(str(path))
        again = px.Model.load(str(path))
        assert again.copies == 2

    tex = px.texture(16, seed=2)
    box = px.Operator.box_downsample(3, 16, 16)
    init = box.initial_estimate(box.forward(tex))
    assert init.shape == [1, 3, 16, 16]
    print("ok")


if __name__ == "__main__":
    main()
