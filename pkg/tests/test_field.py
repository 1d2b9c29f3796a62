import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from matplotlib.colors import rgb_to_hsv

from safedesc.errors import FormatError, ParameterError
from safedesc.field import (
    ComplexField,
    Image,
    convolve,
    convolve_direct,
    hsv_render,
    make_symmetry_filter,
    read_field,
    read_image,
    write_field,
    write_image,
)


def naive_same_conv(data, kernel, pad_mode=None):
    # independent oracle: loop over output pixels, flip kernel explicitly
    H, W = data.shape
    kh, kw = kernel.shape
    cy, cx = kh // 2, kw // 2
    if pad_mode is not None:
        src = np.pad(data, ((cy, cy), (cx, cx)), mode=pad_mode)
    else:
        src = np.pad(data, ((cy, cy), (cx, cx)))
    flipped = kernel[::-1, ::-1]
    out = np.zeros((H, W), dtype=np.complex128)
    for y in range(H):
        for x in range(W):
            out[y, x] = np.sum(src[y:y + kh, x:x + kw] * flipped)
    return out


@given(n=st.integers(-4, 4), sigma2=st.floats(0.3, 30.0))
@settings(max_examples=60, deadline=None)
def test_filter_unit_norm(n, sigma2):
    f = make_symmetry_filter(n, sigma2)
    assert abs(np.sqrt(np.sum(np.abs(f.kernel) ** 2)) - 1.0) < 1e-12
    h = f.truncation_radius
    assert f.kernel.shape == (2 * h + 1, 2 * h + 1)
    assert h == math.ceil(4 * math.sqrt(sigma2))


def test_gaussian_is_real():
    f = make_symmetry_filter(0, 3.7)
    assert np.all(f.kernel.imag == 0)


def test_first_order_arguments():
    f = make_symmetry_filter(1, 2.0)
    h = f.truncation_radius
    # (x, y) = (0, 1) is one row down from the centre
    assert np.angle(f.kernel[h + 1, h]) == pytest.approx(math.pi / 2, abs=1e-12)
    assert np.angle(f.kernel[h, h + 1]) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, -1, -2, -3])
def test_argument_equals_n_phi(n):
    f = make_symmetry_filter(n, 4.0)
    h = f.truncation_radius
    ax = np.arange(-h, h + 1)
    x, y = np.meshgrid(ax, ax)
    nz = (x != 0) | (y != 0)
    d = np.angle(f.kernel[nz] * np.exp(-1j * n * np.arctan2(y, x)[nz]))
    assert np.abs(d).max() < 1e-9
    assert abs(f.kernel[h, h]) == 0.0


def test_second_order_peak_radius():
    sigma = 4.0
    f = make_symmetry_filter(2, sigma**2)
    h = f.truncation_radius
    ax = np.arange(-h, h + 1)
    x, y = np.meshgrid(ax, ax)
    r = np.hypot(x, y)
    r_arg = r.ravel()[np.argmax(np.abs(f.kernel).ravel())]
    # 1D brute-force scan of r^2 exp(-r^2 / 2 sigma^2)
    rs = np.linspace(0, 4 * sigma, 200001)
    r_star = rs[np.argmax(rs**2 * np.exp(-(rs**2) / (2 * sigma**2)))]
    assert r_star == pytest.approx(math.sqrt(2) * sigma, abs=1e-3)
    assert abs(r_arg - r_star) <= 1.0


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_filter_rejects_bad_parameters(bad):
    with pytest.raises(ParameterError):
        make_symmetry_filter(1, bad)
    with pytest.raises(ParameterError):
        make_symmetry_filter(1, 1.0, truncation_factor=bad)


def test_impulse_returns_kernel():
    f = make_symmetry_filter(1, 2.0)
    h = f.truncation_radius
    img = np.zeros((31, 31))
    img[15, 15] = 1.0
    out = convolve(Image(img), f).data
    np.testing.assert_allclose(out[15 - h:16 + h, 15 - h:16 + h], f.kernel, atol=1e-12)


def test_constant_annihilated_in_interior():
    f = make_symmetry_filter(1, 2.0)
    h = f.truncation_radius
    out = convolve(Image(np.full((40, 40), 3.0)), f).data
    assert np.abs(out[h:-h, h:-h]).max() < 1e-10


def test_matches_naive_oracle(rng):
    data = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    kern = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    want = naive_same_conv(data, kern)
    np.testing.assert_allclose(convolve(data, kern).data, want, atol=1e-10)
    np.testing.assert_allclose(convolve_direct(data, kern), want, atol=1e-10)
    np.testing.assert_allclose(convolve(data, kern, "reflect").data, naive_same_conv(data, kern, "reflect"), atol=1e-10)


def test_spectral_relative_error(rng):
    data = rng.normal(size=(33, 29))
    f = make_symmetry_filter(2, 3.0)
    want = naive_same_conv(data, f.kernel)
    got = convolve(Image(data), f).data
    assert np.linalg.norm(got - want) / np.linalg.norm(want) < 1e-8


def test_linearity(rng):
    f, g = rng.normal(size=(2, 16, 16)) + 1j * rng.normal(size=(2, 16, 16))
    k = make_symmetry_filter(1, 1.5)
    a, b = 0.7 - 0.2j, -1.3
    lhs = convolve(a * f + b * g, k).data
    rhs = a * convolve(f, k).data + b * convolve(g, k).data
    assert np.abs(lhs - rhs).max() < 1e-9


def test_kernel_too_large():
    with pytest.raises(ParameterError):
        convolve(Image(np.zeros((5, 5))), make_symmetry_filter(1, 4.0))
    with pytest.raises(ParameterError):
        convolve(np.zeros((9, 9)), np.ones((4, 3)))
    with pytest.raises(ParameterError):
        convolve(np.zeros((9, 9)), np.ones((3, 3)), boundary="wrap")


def test_hsv_fixed_points():
    z = np.array([[0, 1, np.exp(1j * np.pi)]], dtype=np.complex128)
    rgb = hsv_render(z, 1.0)
    assert rgb[0, 0].tolist() == [0, 0, 0]
    assert rgb[0, 1].tolist() == [255, 0, 0]
    hsv = rgb_to_hsv(rgb[0, 2] / 255.0)
    assert hsv[0] == pytest.approx(0.5, abs=1 / 255)
    assert hsv[2] == pytest.approx(1.0)


def test_hsv_nan_is_black():
    rgb = hsv_render(np.array([[np.nan + 0j, 1.0]]), 1.0)
    assert rgb[0, 0].tolist() == [0, 0, 0]


def test_hsv_hue_bijection():
    ang = np.linspace(-np.pi, np.pi, 721, endpoint=False)
    rgb = hsv_render(np.exp(1j * ang)[None, :], 1.0)
    hue = rgb_to_hsv(rgb[0] / 255.0)[:, 0]
    back = hue * 2 * np.pi
    err = np.abs(np.angle(np.exp(1j * (back - ang))))
    assert err.max() <= 2 * np.pi / 256


def test_hsv_ceiling_validation():
    with pytest.raises(ParameterError):
        hsv_render(np.ones((2, 2)), 0.0)


def test_field_roundtrip_bitwise(tmp_path, rng):
    data = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    f = ComplexField(data, "raw")
    p = tmp_path / "f.cfld"
    write_field(f, p)
    g = read_field(p)
    assert g.kind == "raw"
    assert g.data.tobytes() == f.data.tobytes()


def test_field_header_layout(tmp_path):
    f = ComplexField(np.full((2, 3), 0.5 + 0.25j), "normalized")
    p = tmp_path / "f.cfld"
    write_field(f, p)
    blob = p.read_bytes()
    assert blob[:4] == b"CFLD"
    assert struct.unpack("<III", blob[4:16]) == (1, 3, 2)
    assert blob[16] == 1 and blob[17:20] == b"\0\0\0"
    assert len(blob) == 20 + 3 * 2 * 16
    assert struct.unpack("<dd", blob[20:36]) == (0.5, 0.25)


def _header(w, h, kind=0, magic=b"CFLD", version=1):
    return struct.pack("<4sIIIB3x", magic, version, w, h, kind)


@pytest.mark.parametrize(
    "blob",
    [
        _header(2, 2, magic=b"XFLD") + bytes(64),
        _header(2, 2, version=2) + bytes(64),
        _header(2, 2, kind=5) + bytes(64),
        _header(10, 10) + bytes(50 * 16),
        _header(0, 3),
        b"CFL",
    ],
)
def test_field_format_errors(tmp_path, blob):
    p = tmp_path / "bad.cfld"
    p.write_bytes(blob)
    with pytest.raises(FormatError):
        read_field(p)


def test_field_invariants():
    with pytest.raises(ParameterError):
        ComplexField(np.array([[2.0 + 0j]]), "normalized")
    with pytest.raises(ParameterError):
        ComplexField(np.array([[np.inf + 0j]]))
    with pytest.raises(ParameterError):
        Image(np.array([[np.nan]]))
    with pytest.raises(ParameterError):
        Image(np.zeros((0, 3)))
    f = ComplexField(np.ones((2, 2)), "normalized")
    with pytest.raises(ValueError):
        f.data[0, 0] = 0


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_image_io(tmp_path, suffix):
    a = np.arange(48, dtype=np.float64).reshape(6, 8)
    p = tmp_path / f"im{suffix}"
    write_image(Image(a), p)
    b = read_image(p).data
    np.testing.assert_allclose(b, np.round(a / a.max() * 255))


def test_missing_image_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.png"):
        read_image(tmp_path / "nope.png")
