#!/usr/bin/env python3
"""Reference values frozen into the C++ tests.

Independent of the C++ code: numpy/scipy for the image metrics (cross-checked
against scikit-image where its conventions coincide) and mpmath for scalars.
Run: python3 tests/oracles/oracles.py
"""
import mpmath
import numpy as np
from scipy.signal import correlate2d

mpmath.mp.dps = 40

C1, C2 = 0.01**2, 0.03**2


def gaussian(size, sigma=1.5):
    c = (size - 1) / 2.0
    y, x = np.mgrid[0:size, 0:size] - c
    g = np.exp(-(x * x + y * y) / (2 * sigma * sigma))
    return g / g.sum()


def ssim_plane(a, b):
    size = min(11, *a.shape)
    if size % 2 == 0:
        size -= 1
    g = gaussian(size)
    f = lambda z: correlate2d(z, g, mode="valid")
    ma, mb = f(a), f(b)
    va = f(a * a) - ma * ma
    vb = f(b * b) - mb * mb
    cov = f(a * b) - ma * mb
    s = ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma**2 + mb**2 + C1) * (va + vb + C2))
    return s.mean()


def ssim(a, b):
    return float(np.mean([ssim_plane(a[c], b[c]) for c in range(a.shape[0])]))


def psnr(a, b):
    mse = np.mean((a - b) ** 2)
    return 99.0 if mse <= 0 else min(99.0, -10 * np.log10(mse))


def lowpass(p, f):
    if f <= 1:
        return p
    before = (f - 1) // 2
    after = f - 1 - before
    padded = np.pad(p, ((before, after + f), (before, after + f)), mode="symmetric")
    box = np.ones((f, f)) / (f * f)
    filt = correlate2d(padded, box, mode="valid")
    return filt[: p.shape[0] : f, : p.shape[1] : f]


def ssim_fivek(a, b):
    f = max(1, int(np.floor(min(a.shape[1:]) / 256 + 0.5)))
    return float(np.mean([ssim_plane(lowpass(a[c], f), lowpass(b[c], f)) for c in range(a.shape[0])]))


def check_against_skimage():
    from skimage.metrics import structural_similarity

    rng = np.random.default_rng(3)
    a = rng.random((32, 32))
    b = np.clip(a + 0.1 * rng.standard_normal((32, 32)), 0, 1)
    ref = structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False, win_size=11)
    mine = ssim_plane(a, b)
    assert abs(ref - mine) < 1e-12, (ref, mine)


# Toy images; the C++ tests rebuild them from the same formulas.
def toy(kind, c=1, h=4, w=4):
    y, x = np.mgrid[0:h, 0:w].astype(float)
    i = y * w + x
    if kind == "ramp":
        p = i / (h * w - 1)
    elif kind == "ramp_rev":
        p = 1 - i / (h * w - 1)
    elif kind == "ramp_shift":
        p = i / (h * w - 1) + 0.05
    elif kind == "checker":
        p = 0.25 + 0.5 * ((x + y) % 2)
    elif kind == "flat":
        p = np.full((h, w), 0.5)
    elif kind == "hash":
        p = ((i * 37 + 11) % 64) / 63
    else:
        raise ValueError(kind)
    return np.stack([p + 0.01 * k for k in range(c)])


def main():
    check_against_skimage()
    print("# metric oracles (numpy)")
    pairs = [("ramp", "ramp_rev", 4, 4), ("ramp", "ramp_shift", 4, 4), ("checker", "flat", 4, 4),
             ("ramp", "hash", 4, 4), ("ramp", "hash", 16, 16)]
    for a, b, h, w in pairs:
        A, B = toy(a, 1, h, w), toy(b, 1, h, w)
        print(f"{a} {b} {h}x{w}: psnr {psnr(A, B):.12f} ssim {ssim(A, B):.12f}")
    A, B = toy("ramp", 3, 6, 5), toy("hash", 3, 6, 5)
    print(f"ramp hash 3ch 6x5: psnr {psnr(A, B):.12f} ssim {ssim(A, B):.12f}")
    A, B = toy("ramp", 1, 520, 600), toy("hash", 1, 520, 600)
    print(f"ramp hash 520x600 fivek (f=2): ssim {ssim_fivek(A, B):.12f}")
    print(f"ramp hash 520x600 original: ssim {ssim(A, B):.12f}")
    print("# scalar oracles (mpmath, 40 digits)")
    print("pow(0.25, 1/2.2) =", mpmath.nstr(mpmath.power(mpmath.mpf(1) / 4, 1 / mpmath.mpf("2.2")), 15))
    print("sigmoid(2) =", mpmath.nstr(1 / (1 + mpmath.exp(-2)), 15))


if __name__ == "__main__":
    main()
