"""Smoke test for the clear_refit extension module.

Build and run:
    cargo build --release -p clear-py --features extension-module
    cp target/release/libclear_refit.so crates/py/python/clear_refit.so
    python3 crates/py/python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import clear_refit as cr


def rel_err(a, b):
    num = sum((x - y) ** 2 for ra, rb in zip(a, b) for x, y in zip(ra, rb))
    den = sum(y * y for rb in b for y in rb)
    return math.sqrt(num / den)


def main():
    print("clear_refit", cr.__version__)

    x0 = cr.phantom("squares_2d", 24)
    assert len(x0) == 24 and len(x0[0]) == 24

    y = [[(i * 37 + j * 11) % 200 - 100.0 for j in range(8)] for i in range(8)]
    out = cr.restore(y, "soft", 30.0)
    assert out.rho == 1.0
    assert out.refit == cr.hard_threshold(y, 30.0)

    out = cr.restore(x0, "tv_iso", 15.0, sigma=20.0, seed=3)
    assert out.iters > 0 and out.rho > 0.0
    print(out, "psnr estimate %.2f refit %.2f" % (cr.psnr(out.estimate, x0), cr.psnr(out.refit, x0)))

    again = cr.restore(x0, "tv_iso", 15.0, sigma=20.0, seed=3)
    assert again.refit == out.refit

    fd = cr.restore(x0, "tv_iso", 15.0, sigma=20.0, seed=3, rel_tol=1e-12, max_iters=200000, jvp="fd")
    alg = cr.restore(x0, "tv_iso", 15.0, sigma=20.0, seed=3, rel_tol=1e-12, max_iters=200000)
    assert rel_err(fd.refit, alg.refit) <= 1e-4

    est, jvp = cr.nlm_jvp(out.observation, [[1.0] * 24 for _ in range(24)], 5000.0, s=3, sigma_noise=20.0)
    assert all(abs(v - 1.0) < 1e-12 for row in jvp for v in row)
    assert 0.0 < cr.ssim(est, x0) <= 1.0

    ok, checks = cr.validate("thresholding")
    assert ok, checks

    try:
        cr.restore(x0, "nope", 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown estimator accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
