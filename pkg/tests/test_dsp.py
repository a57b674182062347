import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spoofdet.dsp import (
    AudioSignal,
    DegenerateSignalError,
    SignalTooShortError,
    SizeError,
    SpectrogramFormatError,
    SpectrogramParams,
    featurize,
    fft,
    fft_real,
    frame_count,
    frame_signal,
    hann,
    magnitudes_to_db,
    minmax_normalize,
    naive_dft,
    read_raw,
    shape_to_target,
    write_pgm,
    write_raw,
)

SR = 16000


def tone(freq=1000.0, seconds=1.0, amp=0.5, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return AudioSignal(amp * np.sin(2 * np.pi * freq * t), sr)


# -- framing -------------------------------------------------------------------

def test_single_frame_boundary():
    assert frame_signal(AudioSignal(np.zeros(512), SR)).shape == (1, 512)


def test_one_second_frame_count():
    # (16000 - 512) // 384 + 1
    assert frame_signal(AudioSignal(np.zeros(16000), SR)).shape == (41, 512)
    assert frame_count(16000) == 41


def test_too_short():
    with pytest.raises(SignalTooShortError):
        frame_signal(AudioSignal(np.zeros(511), SR))


def test_frames_start_at_hop_multiples_and_are_windowed():
    x = np.arange(2000) / 2000.0
    frames = frame_signal(AudioSignal(x, SR))
    w = hann(512)
    for i in range(frames.shape[0]):
        np.testing.assert_allclose(frames[i], x[i * 384 : i * 384 + 512] * w)


def test_params_validation():
    assert SpectrogramParams().hop == 384
    with pytest.raises(ValueError):
        SpectrogramParams(overlap=512)
    with pytest.raises(ValueError):
        SpectrogramParams(fft_size=1024)


def test_audio_signal_clamps_and_rejects_nonfinite():
    s = AudioSignal(np.array([2.0, -3.0, 0.5]), SR)
    assert s.samples.tolist() == [1.0, -1.0, 0.5]
    with pytest.raises(ValueError):
        AudioSignal(np.array([np.nan]), SR)


# -- FFT -----------------------------------------------------------------------

def test_fft_impulse():
    x = np.zeros(512)
    x[0] = 1.0
    np.testing.assert_allclose(fft_real(x), np.ones(257), atol=1e-15)


def test_fft_constant():
    out = fft_real(np.ones(512))
    assert out[0] == pytest.approx(512.0)
    assert np.abs(out[1:]).max() < 1e-9


def test_fft_matches_naive_dft_512(rng=np.random.default_rng(7)):
    x = rng.normal(size=512)
    assert np.abs(fft_real(x) - naive_dft(x)[:257]).max() < 1e-9


@pytest.mark.parametrize("n", [3, 6, 500, 0])
def test_fft_rejects_non_power_of_two(n):
    with pytest.raises(SizeError):
        fft(np.zeros(n))


def test_parseval():
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(size=512)
        spec = fft(x)
        lhs = (x * x).sum()
        rhs = (np.abs(spec) ** 2).sum() / 512
        assert abs(lhs - rhs) / lhs < 1e-6


def test_fft_batched_rows_independent():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(5, 64))
    batched = fft(x)
    for i in range(5):
        np.testing.assert_allclose(batched[i], fft(x[i]), atol=1e-12)


# -- dB and shaping ------------------------------------------------------------

def test_db_conversion_rules():
    mags = np.array([[10.0, 1.0], [0.0, 5.0]])
    db = magnitudes_to_db(mags)
    assert db[0, 0] == 0.0
    assert db[0, 1] == pytest.approx(-20.0)
    assert db[1, 0] == -80.0
    assert -80.0 <= db.min() and db.max() == 0.0


def test_db_all_zero_is_degenerate():
    with pytest.raises(DegenerateSignalError):
        magnitudes_to_db(np.zeros((3, 3)))


def test_shape_identity_time_axis():
    rng = np.random.default_rng(5)
    grid = rng.uniform(-80, 0, size=(257, 128))
    out = shape_to_target(grid)
    expected = grid[:256].reshape(128, 2, 128).mean(axis=1)
    np.testing.assert_allclose(out, expected)


def test_shape_pads_41_frames():
    grid = np.zeros((257, 41))
    out = shape_to_target(grid, db_floor=-80.0)
    assert out.shape == (128, 128)
    # 87 pad columns: 43 on the left, 44 on the right
    assert (out[:, :43] == -80.0).all() and (out[:, 43:84] == 0.0).all() and (out[:, 84:] == -80.0).all()


def test_shape_center_crops_long_input():
    grid = np.tile(np.arange(131, dtype=float), (257, 1))
    out = shape_to_target(grid)
    # 3 extra frames: start at 1
    assert out[0, 0] == 1.0 and out[0, -1] == 128.0


def test_shape_constant_stays_constant():
    out = shape_to_target(np.full((257, 60), -12.5), db_floor=-12.5)
    np.testing.assert_array_equal(out, -12.5)


def test_shape_wrong_bin_count():
    with pytest.raises(ValueError):
        shape_to_target(np.zeros((256, 10)))


def test_minmax_affine_map():
    grid = np.full((128, 128), -40.0)
    grid[0, 0], grid[1, 1] = -80.0, 0.0
    out = minmax_normalize(grid)
    assert out[0, 0] == 0.0 and out[1, 1] == 1.0 and out[5, 5] == 0.5


def test_minmax_identity_on_unit_grid():
    rng = np.random.default_rng(6)
    grid = rng.random((128, 128))
    grid[0, 0], grid[0, 1] = 0.0, 1.0
    np.testing.assert_allclose(minmax_normalize(grid), grid, atol=1e-15)


def test_minmax_constant_is_degenerate():
    with pytest.raises(DegenerateSignalError):
        minmax_normalize(np.ones((128, 128)))


# -- featurize -----------------------------------------------------------------

def test_sine_peak_row():
    # 1 kHz is FFT bin 1000 / (16000 / 512) = 32; rows average bin pairs -> row 16
    grid = featurize(tone(1000.0))
    assert int(grid.mean(axis=1).argmax()) == 16


def test_silence_is_degenerate():
    with pytest.raises(DegenerateSignalError):
        featurize(AudioSignal(np.zeros(16000), SR))


def test_featurize_deterministic():
    s = tone(440.0, 1.5)
    a, b = featurize(s), featurize(s)
    assert a.tobytes() == b.tobytes()


@settings(max_examples=20, deadline=None)
@given(st.integers(512, 60000), st.integers(0, 2**32 - 1))
def test_featurize_output_contract(n, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, size=n)
    grid = featurize(AudioSignal(x, SR))
    assert grid.shape == (128, 128)
    assert grid.min() == 0.0 and grid.max() == 1.0


@pytest.mark.parametrize("c", [0.1, 0.5, 2.0])
def test_amplitude_scale_invariance(c):
    rng = np.random.default_rng(11)
    x = 0.4 * rng.normal(size=20000).clip(-1.2, 1.2)
    base = featurize(AudioSignal(x, SR))
    scaled = featurize(AudioSignal(c * x, SR))
    np.testing.assert_allclose(scaled, base, atol=1e-9)


# -- serialisation ---------------------------------------------------------------

def test_raw_roundtrip(tmp_path):
    grid = featurize(tone(700.0))
    write_raw(grid, tmp_path / "a.spg")
    data = (tmp_path / "a.spg").read_bytes()
    assert data[:4] == b"SPGM" and len(data) == 8 + 128 * 128 * 4
    back = read_raw(tmp_path / "a.spg")
    np.testing.assert_allclose(back, grid, atol=1e-7)
    assert back[0, 1] == np.float32(grid[0, 1])


def test_raw_layout_is_row_major_little_endian(tmp_path):
    grid = np.zeros((128, 128))
    grid[1, 0] = 0.5
    write_raw(grid, tmp_path / "b.spg")
    payload = np.frombuffer((tmp_path / "b.spg").read_bytes()[8:], dtype="<f4")
    assert payload[128] == 0.5


def test_raw_rejects_bad_files(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOPE" + b"\x01\x00\x00\x00")
    with pytest.raises(SpectrogramFormatError):
        read_raw(tmp_path / "bad")
    (tmp_path / "ver").write_bytes(b"SPGM" + b"\x09\x00\x00\x00" + bytes(128 * 128 * 4))
    with pytest.raises(SpectrogramFormatError, match="version"):
        read_raw(tmp_path / "ver")
    (tmp_path / "short").write_bytes(b"SPGM" + b"\x01\x00\x00\x00" + bytes(10))
    with pytest.raises(SpectrogramFormatError):
        read_raw(tmp_path / "short")


def test_pgm_header_and_orientation(tmp_path):
    grid = np.zeros((128, 128))
    grid[0, :] = 1.0  # lowest frequency row
    write_pgm(grid, tmp_path / "g.pgm")
    data = (tmp_path / "g.pgm").read_bytes()
    header = b"P5\n128 128\n255\n"
    assert data.startswith(header)
    pixels = np.frombuffer(data[len(header) :], dtype=np.uint8).reshape(128, 128)
    assert (pixels[-1] == 255).all() and (pixels[0] == 0).all()
