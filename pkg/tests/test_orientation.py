import math

import numpy as np
import pytest

from safedesc.field import ComplexField, Image
from safedesc.orientation import compute_ilst, compute_lst, orientation_field
from safedesc.synthesis import rotate_image

OMEGA = 2 * math.pi / 8


def grid(n=64):
    y, x = np.mgrid[0:n, 0:n].astype(float)
    return x, y


def interior(a, m=12):
    return a[m:-m, m:-m]


def test_constant_image_has_no_gradient():
    ilst = compute_ilst(Image(np.full((48, 48), 7.0)))
    assert np.abs(interior(ilst.data, 8)).max() < 1e-10


def test_vertical_stripes_argument_zero():
    x, _ = grid()
    ilst = compute_ilst(Image(np.cos(OMEGA * x))).data
    a = interior(ilst)
    strong = np.abs(a) > 0.05 * np.abs(a).max()
    assert np.abs(np.angle(a[strong])).max() < 1e-6


def test_horizontal_stripes_argument_pi():
    _, y = grid()
    a = interior(compute_ilst(Image(np.cos(OMEGA * y))).data)
    strong = np.abs(a) > 0.05 * np.abs(a).max()
    assert np.abs(np.abs(np.angle(a[strong])) - math.pi).max() < 1e-6


def test_linear_pattern_is_fully_coherent():
    x, _ = grid()
    of = orientation_field(Image(np.cos(OMEGA * x)), 1.0, 25.0)
    assert interior(np.abs(of.i20_normalized.data), 22).min() >= 0.99


def test_white_noise_is_incoherent():
    rng = np.random.default_rng(7)
    of = orientation_field(Image(rng.normal(size=(128, 128))), 1.0, 64.0)
    # calibrated by simulation: about 0.06 for this size and scale
    assert interior(np.abs(of.i20_normalized.data), 32).mean() < 0.2


def test_zero_ilst_gives_zero_field():
    of = compute_lst(ComplexField(np.zeros((30, 30))), 4.0)
    assert np.all(of.i20_normalized.data == 0)
    assert np.all(of.i11 == 0)


def test_tensor_invariants():
    rng = np.random.default_rng(3)
    of = orientation_field(Image(rng.normal(size=(50, 60))), 1.0, 9.0)
    assert of.i11.min() >= 0
    assert np.all(np.abs(of.i20.data) <= of.i11 + 1e-9)
    assert np.abs(of.i20_normalized.data).max() <= 1 + 1e-9


def test_contrast_floor():
    img = np.zeros((60, 60))
    img[:, :20] = np.cos(OMEGA * np.arange(20))[None, :]
    of = orientation_field(Image(img), 1.0, 4.0)
    weak = of.i11 <= 1e-6 * of.i11.max()
    assert weak.any()
    assert np.all(of.i20_normalized.data[weak] == 0)


def test_scale_invariance():
    rng = np.random.default_rng(11)
    f = rng.normal(size=(40, 40))
    a = orientation_field(Image(f), 1.0, 9.0).i20_normalized.data
    b = orientation_field(Image(37.5 * f), 1.0, 9.0).i20_normalized.data
    assert np.abs(a - b).max() < 1e-9


def test_quarter_turn_flips_argument():
    x, y = grid(97)
    img = np.cos(0.6 * (x * math.cos(0.3) + y * math.sin(0.3))) + 0.5 * np.cos(0.4 * (x - 2 * y))
    a = orientation_field(Image(img), 1.0, 9.0).i20_normalized.data
    b = orientation_field(rotate_image(Image(img), math.pi / 2), 1.0, 9.0).i20_normalized.data
    # the rotated image at (x, y) shows the original at the pre-image point
    a_rot = np.rot90(a, k=-1)
    m = 20
    d = np.angle(interior(b, m) * np.conj(interior(a_rot, m)))
    strong = interior(np.abs(a_rot), m) > 0.3
    assert np.abs(np.abs(d[strong]) - math.pi).max() < 0.05


def test_reflect_boundary_runs():
    x, _ = grid(40)
    of = orientation_field(Image(np.cos(OMEGA * x)), 1.0, 4.0, boundary="reflect")
    assert np.abs(of.i20_normalized.data[:, 10:-10]).min() > 0.9
