import math
import struct

import numpy as np
import pytest

from clickdetect.audio_io import SampleBuffer, WavFormatError, _mono, read_wav, slice_buffer, write_wav

from conftest import RATE, raw_wav_bytes, tone


class TestSampleBuffer:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="full scale"):
            SampleBuffer(np.array([0.0, 1.5]), RATE)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="finite"):
            SampleBuffer(np.array([0.0, np.nan]), RATE)

    def test_rejects_low_rate_and_2d(self):
        with pytest.raises(ValueError):
            SampleBuffer(np.zeros(10), 4000)
        with pytest.raises(ValueError):
            SampleBuffer(np.zeros((2, 5)), RATE)

    def test_duration_exact(self):
        buf = SampleBuffer(np.zeros(96000), RATE)
        assert buf.duration_s == 96000 / RATE
        assert len(buf) == 96000

    def test_samples_immutable(self):
        buf = SampleBuffer(np.zeros(8), RATE)
        with pytest.raises(ValueError):
            buf.samples[0] = 1.0


class TestReadWav:
    def test_one_second_of_16bit_silence(self, tmp_path):
        path = tmp_path / "silence.wav"
        path.write_bytes(raw_wav_bytes(b"\x00\x00" * RATE))
        buf = read_wav(path)
        assert buf.sample_rate_hz == RATE
        assert len(buf) == RATE
        assert not buf.samples.any()

    def test_full_scale_square_wave_mapping(self, tmp_path):
        # two's-complement scaling: +32767 -> 32767/32768, -32768 -> -1.0
        payload = struct.pack("<4h", 32767, -32768, 32767, -32768)
        path = tmp_path / "square.wav"
        path.write_bytes(raw_wav_bytes(payload))
        buf = read_wav(path)
        assert set(np.round(buf.samples, 10)) == {round(32767 / 32768, 10), -1.0}

    def test_stereo_averages_to_mono(self, tmp_path):
        left, right = 16384, -16384  # +0.5 / -0.5
        payload = struct.pack("<8h", *([left, right] * 4))
        path = tmp_path / "stereo.wav"
        path.write_bytes(raw_wav_bytes(payload, channels=2))
        buf = read_wav(path)
        assert len(buf) == 4
        assert not buf.samples.any()

    def test_24_bit_scaling(self, tmp_path):
        # +2^22 -> 0.5, -2^23 -> -1.0
        def pack24(value):
            return struct.pack("<i", value)[:3]

        payload = pack24(1 << 22) + pack24(-(1 << 23))
        path = tmp_path / "deep.wav"
        path.write_bytes(raw_wav_bytes(payload, bits=24))
        buf = read_wav(path)
        np.testing.assert_allclose(buf.samples, [0.5, -1.0])

    def test_float32_clamped(self, tmp_path):
        payload = struct.pack("<3f", 0.25, 1.75, -2.0)
        path = tmp_path / "float.wav"
        path.write_bytes(raw_wav_bytes(payload, fmt=3, bits=32))
        buf = read_wav(path)
        np.testing.assert_allclose(buf.samples, [0.25, 1.0, -1.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_wav(tmp_path / "nope.wav")

    def test_non_riff_rejected(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"OggS" + b"\x00" * 64)
        with pytest.raises(WavFormatError, match="RIFF"):
            read_wav(path)

    def test_non_pcm_codec_names_format_tag(self, tmp_path):
        path = tmp_path / "alaw.wav"
        path.write_bytes(raw_wav_bytes(b"\x00\x00", fmt=6))
        with pytest.raises(WavFormatError, match="wFormatTag"):
            read_wav(path)

    def test_unsupported_bit_depth_named(self, tmp_path):
        path = tmp_path / "8bit.wav"
        path.write_bytes(raw_wav_bytes(b"\x00", bits=8))
        with pytest.raises(WavFormatError, match="wBitsPerSample"):
            read_wav(path)

    def test_truncated_data_chunk(self, tmp_path):
        good = raw_wav_bytes(b"\x00\x00" * 100)
        path = tmp_path / "cut.wav"
        path.write_bytes(good[:-40])
        with pytest.raises(WavFormatError, match="data chunk"):
            read_wav(path)

    def test_too_many_channels(self, tmp_path):
        path = tmp_path / "quad.wav"
        path.write_bytes(raw_wav_bytes(b"\x00\x00" * 8, channels=4))
        with pytest.raises(WavFormatError, match="nChannels"):
            read_wav(path)


class TestWriteWav:
    def test_round_trip_quantization_bound(self, tmp_path):
        buf = tone(1000.0, 1.0, amplitude=0.25)
        path = tmp_path / "sine.wav"
        write_wav(buf, path)
        back = read_wav(path)
        assert back.sample_rate_hz == RATE
        assert np.max(np.abs(back.samples - buf.samples)) <= 1 / 32768

    def test_empty_buffer_round_trip(self, tmp_path):
        path = tmp_path / "empty.wav"
        write_wav(SampleBuffer(np.zeros(0), RATE), path)
        back = read_wav(path)
        assert len(back) == 0

    def test_pink_noise_energy_preserved(self, tmp_path):
        from clickdetect.soundscape import SimConfig, pink_noise

        buf = pink_noise(SimConfig(seed=1, duration_s=4.0))
        path = tmp_path / "pink.wav"
        write_wav(buf, path)
        back = read_wav(path)

        def rms_db(x):
            return 10 * math.log10(float(np.mean(x**2)))

        assert abs(rms_db(back.samples) - rms_db(buf.samples)) <= 0.01

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_wav(SampleBuffer(np.zeros(4), RATE), tmp_path / "no" / "dir" / "x.wav")


class TestSlice:
    def test_identity(self):
        buf = tone(440.0, 1.0, 0.5)
        out = slice_buffer(buf, 0.0, buf.duration_s)
        np.testing.assert_array_equal(out.samples, buf.samples)

    def test_sample_count_exact(self):
        buf = SampleBuffer(np.zeros(10 * RATE), RATE)
        out = slice_buffer(buf, 2.0, 4.0)
        assert len(out) == 96000

    def test_empty_range_rejected(self):
        buf = SampleBuffer(np.zeros(RATE), RATE)
        with pytest.raises(ValueError):
            slice_buffer(buf, 1.0, 1.0)

    def test_out_of_range_rejected(self):
        buf = SampleBuffer(np.zeros(RATE), RATE)
        with pytest.raises(ValueError):
            slice_buffer(buf, 0.5, 1.5)
        with pytest.raises(ValueError):
            slice_buffer(buf, -0.1, 0.5)

    def test_slicing_composes(self, rng):
        buf = SampleBuffer(rng.uniform(-0.5, 0.5, 6 * RATE), RATE)
        nested = slice_buffer(slice_buffer(buf, 1.0, 5.0), 1.0, 2.0)
        direct = slice_buffer(buf, 2.0, 3.0)
        np.testing.assert_array_equal(nested.samples, direct.samples)


def test_mono_conversion_is_linear(rng):
    a = rng.uniform(-0.4, 0.4, (64, 2))
    b = rng.uniform(-0.4, 0.4, (64, 2))
    np.testing.assert_allclose(_mono(a + b), _mono(a) + _mono(b), atol=1e-15)
