import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image as PILImage

from endorestore.errors import DecodeError, ShapeError
from endorestore.image import (
    Image,
    Kernel2D,
    convolve,
    extract_patches,
    load_image,
    save_image,
    sobel_magnitude,
)
from oracles import correlate_loop


def test_image_invariants():
    img = Image(np.zeros((3, 4, 5)))
    assert (img.channels, img.height, img.width) == (3, 4, 5)
    assert img.data.size == 3 * 4 * 5
    with pytest.raises(ValueError):
        Image(np.full((1, 2, 2), np.nan))
    with pytest.raises(ValueError):
        Image(np.zeros((1, 2, 2)), peak=0)
    with pytest.raises(ShapeError):
        Image(np.zeros((2, 3, 3)))


def test_image_is_immutable():
    img = Image(np.zeros((1, 2, 2)))
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0


def test_grayscale_stays_single_channel(tmp_path):
    img = Image(np.full((1, 8, 8), 0.5))
    save_image(img, tmp_path / "g.png")
    assert load_image(tmp_path / "g.png").channels == 1


def test_load_ppm_red(tmp_path):
    path = tmp_path / "red.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes([255, 0, 0]) * 4)
    img = load_image(path)
    assert img.channels == 3
    np.testing.assert_array_equal(img.data[0], 1.0)
    np.testing.assert_array_equal(img.data[1:], 0.0)
    assert img.peak == 1.0


def test_load_zero_png(tmp_path):
    PILImage.fromarray(np.zeros((5, 7, 3), np.uint8)).save(tmp_path / "z.png")
    assert np.all(load_image(tmp_path / "z.png").data == 0.0)


def test_load_matches_byte_reader(tmp_path, rng):
    raw = rng.integers(0, 256, (9, 11, 3), dtype=np.uint8)
    PILImage.fromarray(raw).save(tmp_path / "r.png")
    img = load_image(tmp_path / "r.png")
    for c in range(3):
        for y in range(9):
            for x in range(11):
                assert img.data[c, y, x] == raw[y, x, c] / 255.0


def test_load_errors_name_path(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not an image")
    with pytest.raises(DecodeError, match="bad.png"):
        load_image(bad)
    PILImage.fromarray(np.zeros((4, 4), np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(DecodeError, match="deep.png"):
        load_image(tmp_path / "deep.png")


def test_save_half_and_one(tmp_path):
    save_image(Image(np.full((3, 4, 4), 0.5)), tmp_path / "h.png")
    assert np.all(np.abs(load_image(tmp_path / "h.png").data - 0.5) <= 1 / 510)
    save_image(Image(np.ones((1, 2, 2))), tmp_path / "one.png")
    assert np.asarray(PILImage.open(tmp_path / "one.png")).max() == 255


@pytest.mark.parametrize("ext", [".png", ".ppm"])
def test_round_trip_bound_100_images(tmp_path, rng, ext):
    for i in range(100):
        x = rng.uniform(-0.2, 1.2, (3, 6, 5))
        path = tmp_path / f"x{i}{ext}"
        save_image(Image(x), path)
        back = load_image(path).data
        assert np.max(np.abs(back - np.clip(x, 0, 1))) <= 1 / 510 + 1e-12


def test_convolve_impulse_response(rng):
    k = Kernel2D(rng.random((3, 5)))
    data = np.zeros((1, 11, 11))
    data[0, 5, 5] = 1.0
    out = convolve(Image(data), k).data[0]
    # correlation reproduces the flipped kernel around the impulse
    np.testing.assert_allclose(out[4:7, 3:8], k.weights[::-1, ::-1], atol=1e-12)


def test_convolve_constant_preserved(rng):
    w = rng.random((5, 5))
    out = convolve(Image(np.full((3, 9, 9), 0.3)), Kernel2D(w / w.sum()))
    np.testing.assert_allclose(out.data, 0.3, atol=1e-12)


def test_convolve_matches_loop_oracle(rng):
    img = rng.random((1, 7, 7))
    k = rng.standard_normal((3, 3))
    out = convolve(Image(img), Kernel2D(k)).data[0]
    np.testing.assert_allclose(out, correlate_loop(img[0], k), atol=1e-6)


def test_convolve_rejects_large_kernel():
    with pytest.raises(ShapeError):
        convolve(Image(np.zeros((1, 4, 4))), Kernel2D(np.ones((5, 5))))


def test_kernel_must_be_odd():
    with pytest.raises(ShapeError):
        Kernel2D(np.ones((2, 3)))


def test_convolve_linearity(rng):
    k = Kernel2D(rng.standard_normal((3, 3)))
    for _ in range(20):
        x, y = rng.random((2, 3, 16, 16))
        a, b = rng.standard_normal(2)
        lhs = convolve(Image(a * x + b * y), k).data
        rhs = a * convolve(Image(x), k).data + b * convolve(Image(y), k).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_identity_kernel(h, w, seed):
    x = np.random.default_rng(seed).random((1, h, w))
    np.testing.assert_allclose(convolve(Image(x), Kernel2D.identity()).data, x, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.integers(3, 10), st.integers(3, 10))
def test_sobel_constant_is_exactly_zero(v, h, w):
    assert np.all(sobel_magnitude(Image(np.full((3, h, w), v))).data == 0.0)


def test_sobel_ramp():
    a = 0.01
    ramp = np.tile(a * np.arange(10.0), (1, 8, 1))
    mag = sobel_magnitude(Image(ramp)).data[0]
    np.testing.assert_allclose(mag[1:-1, 1:-1], 8 * a, rtol=1e-12)


def test_sobel_step_edge_support():
    step = np.zeros((1, 8, 12))
    step[:, :, 6:] = 1.0
    mag = sobel_magnitude(Image(step)).data[0]
    cols = np.nonzero(mag.any(axis=0))[0]
    assert set(cols) == {5, 6}


def test_patches_full_size(rand_image):
    img = rand_image(32, 32)
    (p,) = extract_patches(img, 32, 1, seed=0, count=1)
    np.testing.assert_array_equal(p.data, img.data)


def test_patches_deterministic(rand_image):
    img = rand_image(64, 64)
    a = extract_patches(img, 16, 4, seed=7, count=10)
    b = extract_patches(img, 16, 4, seed=7, count=10)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a, b))


def test_patches_are_sub_rectangles(rng):
    src = rng.random((3, 256, 256))
    patches = extract_patches(Image(src), 64, 8, seed=3, count=100)
    assert len(patches) == 100
    for p in patches:
        # locate the patch by its top-left sample, then compare the block
        found = False
        for y, x in zip(*np.nonzero(src[0] == p.data[0, 0, 0])):
            if y + 64 <= 256 and x + 64 <= 256 and np.array_equal(src[:, y:y + 64, x:x + 64], p.data):
                found = True
                break
        assert found


def test_patch_errors(rand_image):
    img = rand_image(16, 16)
    with pytest.raises(ShapeError):
        extract_patches(img, 32, 1, 0, 1)
    with pytest.raises(ValueError):
        extract_patches(img, 8, 1, 0, 0)
