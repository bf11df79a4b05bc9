import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from freeunmix import (
    MatrixStack,
    ObjectiveKind,
    ParseError,
    UnsupportedCodecError,
    fcf,
    unmixing_error,
)
from freeunmix.io_formats import (
    SUMMARY_KEYS,
    read_audio_wav,
    read_image_pgm,
    read_manifest,
    read_matrix,
    write_audio_wav,
    write_image_pgm,
    write_matrix,
    write_result,
)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
matrices = hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=6), elements=finite)


def _wav_bytes(tag, channels, bits, payload, rate=8000, extensible_subtag=None):
    block = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    if extensible_subtag is not None:
        fmt += struct.pack("<HHI", 22, bits, 0) + struct.pack("<H", extensible_subtag) + bytes(14)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


class TestMatrix:
    def test_csv_example(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(read_matrix(p), [[1, 2], [3, 4]])

    def test_f64le_example(self, tmp_path):
        p = tmp_path / "m.f64"
        p.write_bytes(struct.pack("<QQ", 2, 2) + struct.pack("<4d", 1, 2, 3, 4))
        np.testing.assert_array_equal(read_matrix(p), [[1, 2], [3, 4]])

    def test_ragged_row_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(ParseError) as info:
            read_matrix(p)
        assert info.value.line == 2

    def test_non_numeric_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,4\n5,x\n")
        with pytest.raises(ParseError) as info:
            read_matrix(p)
        assert info.value.line == 3
        assert "'x'" in str(info.value)

    def test_truncated_binary_offset(self, tmp_path):
        p = tmp_path / "m.f64le"
        p.write_bytes(struct.pack("<QQ", 2, 2) + struct.pack("<3d", 1, 2, 3))
        with pytest.raises(ParseError) as info:
            read_matrix(p)
        assert info.value.offset == 16 + 24

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "m.bin"
        p.write_bytes(b"\x01\x00")
        with pytest.raises(ParseError) as info:
            read_matrix(p)
        assert info.value.offset == 2

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "m.f64"
        p.write_bytes(struct.pack("<QQ", 1, 1) + struct.pack("<2d", 1, 2))
        with pytest.raises(ParseError):
            read_matrix(p)

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(ParseError):
            read_matrix(tmp_path / "m.txt")

    @given(matrices)
    def test_round_trip_f64le_bit_exact(self, tmp_path_factory, X):
        p = tmp_path_factory.mktemp("rt") / "m.f64"
        write_matrix(p, X)
        Y = read_matrix(p)
        assert Y.tobytes() == X.tobytes() and Y.shape == X.shape

    @given(matrices)
    def test_round_trip_csv(self, tmp_path_factory, X):
        p = tmp_path_factory.mktemp("rt") / "m.csv"
        write_matrix(p, X)
        # repr gives the shortest string that round-trips, i.e. <= 17 digits
        np.testing.assert_array_equal(read_matrix(p), X)

    def test_complex_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_matrix(tmp_path / "m.csv", np.ones((2, 2)) * 1j)


class TestPGM:
    def test_p2_example(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_text("P2 2 2 255\n0 255\n255 0\n")
        np.testing.assert_array_equal(read_image_pgm(p), [[0, 1], [1, 0]])

    def test_p5_equivalent(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n# comment\n2 2\n255\n" + bytes([0, 255, 255, 0]))
        np.testing.assert_array_equal(read_image_pgm(p), [[0, 1], [1, 0]])

    def test_sixteen_bit(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5 2 1 65535\n" + struct.pack(">HH", 0, 65535))
        np.testing.assert_array_equal(read_image_pgm(p), [[0, 1]])

    def test_truncated_raster(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5 2 2 255\n" + bytes([0, 255, 255]))
        with pytest.raises(ParseError):
            read_image_pgm(p)

    def test_p2_pixel_count(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_text("P2 2 2 255\n0 255 255\n")
        with pytest.raises(ParseError):
            read_image_pgm(p)

    @pytest.mark.parametrize("content", [b"P6 2 2 255\n", b"P2 2 x 255\n0 0 0 0", b"P2 2 2 0\n0 0 0 0", b"P5 2"])
    def test_malformed_header(self, tmp_path, content):
        p = tmp_path / "a.pgm"
        p.write_bytes(content)
        with pytest.raises(ParseError):
            read_image_pgm(p)

    def test_pixel_above_maxval(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_text("P2 1 1 10\n11\n")
        with pytest.raises(ParseError):
            read_image_pgm(p)

    def test_write_clips_and_quantizes(self, tmp_path, rng):
        X = rng.uniform(-0.5, 1.5, (5, 7))
        p = tmp_path / "a.pgm"
        write_image_pgm(p, X)
        np.testing.assert_array_equal(read_image_pgm(p), np.rint(np.clip(X, 0, 1) * 255) / 255)


class TestWAV:
    def test_single_sample(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(1, 1, 16, struct.pack("<h", 16384)))
        signal, rate = read_audio_wav(p)
        np.testing.assert_array_equal(signal, [0.5])
        assert rate == 8000

    def test_stereo_first_channel(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(1, 2, 16, struct.pack("<4h", 100, -1, 200, -2)))
        signal, _ = read_audio_wav(p)
        np.testing.assert_array_equal(signal, np.array([100, 200]) / 32768)

    def test_float_rejected_with_codec_name(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(3, 1, 32, struct.pack("<f", 0.5)))
        with pytest.raises(UnsupportedCodecError) as info:
            read_audio_wav(p)
        assert "IEEE float" in str(info.value)

    def test_extensible_float_rejected(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(0xFFFE, 1, 32, struct.pack("<f", 0.5), extensible_subtag=3))
        with pytest.raises(UnsupportedCodecError, match="IEEE float"):
            read_audio_wav(p)

    def test_compressed_rejected(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(0x55, 1, 16, bytes(4)))
        with pytest.raises(UnsupportedCodecError, match="MPEG"):
            read_audio_wav(p)

    def test_eight_bit_rejected(self, tmp_path):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(1, 1, 8, bytes(4)))
        with pytest.raises(UnsupportedCodecError):
            read_audio_wav(p)

    @pytest.mark.parametrize("cut", [4, 20, 30])
    def test_truncated(self, tmp_path, cut):
        p = tmp_path / "a.wav"
        p.write_bytes(_wav_bytes(1, 1, 16, struct.pack("<4h", 1, 2, 3, 4))[:cut])
        with pytest.raises(ParseError):
            read_audio_wav(p)

    def test_round_trip(self, tmp_path):
        x = np.array([0.0, 0.25, -0.5, 32767 / 32768, -1.0])
        p = tmp_path / "a.wav"
        write_audio_wav(p, x, 16000, channels=2)
        signal, rate = read_audio_wav(p)
        np.testing.assert_array_equal(signal, x)
        assert rate == 16000


class TestManifest:
    def _two_csv(self, tmp_path):
        write_matrix(tmp_path / "a.csv", np.eye(2))
        write_matrix(tmp_path / "b.f64", np.ones((2, 2)))

    def test_read(self, tmp_path):
        self._two_csv(tmp_path)
        doc = {"components": ["a.csv", {"path": "b.f64", "kind": "f64le"}],
               "mixing_matrix": [[1, 0], [0, 1]], "seed": 4}
        (tmp_path / "m.json").write_text(json.dumps(doc))
        man = read_manifest(tmp_path / "m.json")
        assert [r.kind for r in man.components] == ["csv", "f64le"]
        assert man.seed == 4
        arrays, rate = man.load_components()
        assert rate is None
        np.testing.assert_array_equal(arrays[1], np.ones((2, 2)))

    @pytest.mark.parametrize("doc", [
        {"components": ["missing.csv"]},
        {"components": []},
        {"components": ["a.csv", "b.f64"], "mixing_matrix": [[1, 0]]},
        {"components": ["a.csv"], "seed": -1},
        {"components": ["a.csv"], "seed": 1.5},
        {"components": [{"path": "a.csv", "kind": "png"}]},
        {"files": ["a.csv"]},
    ])
    def test_invalid(self, tmp_path, doc):
        self._two_csv(tmp_path)
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            read_manifest(tmp_path / "m.json")

    def test_bad_json_line(self, tmp_path):
        (tmp_path / "m.json").write_text('{\n"components": [\n')
        with pytest.raises(ParseError) as info:
            read_manifest(tmp_path / "m.json")
        assert info.value.line is not None

    def test_shape_disagreement(self, tmp_path):
        write_matrix(tmp_path / "a.csv", np.eye(2))
        write_matrix(tmp_path / "b.csv", np.eye(3))
        (tmp_path / "m.json").write_text(json.dumps({"components": ["a.csv", "b.csv"]}))
        with pytest.raises(ParseError):
            read_manifest(tmp_path / "m.json").load_components()


@pytest.mark.filterwarnings("ignore::freeunmix.IdentifiabilityWarning")
class TestWriteResult:
    def _result(self, rng):
        X = MatrixStack(np.stack([rng.uniform(size=(20, 25)) ** 3, rng.standard_normal((20, 25))]))
        return fcf(X.combine(np.array([[1.0, 0.5], [0.2, 1.0]])), ObjectiveKind.RECT_KURTOSIS)

    def test_files_and_summary(self, tmp_path, rng):
        result = self._result(rng)
        written = write_result(result, tmp_path / "out", error=0.1, seed=3, images=True, extra={"method": "x"})
        names = {p.name for p in written}
        assert {"mixing_estimate.csv", "mixing_estimate.f64", "component_1.f64", "component_0.pgm", "summary.json"} <= names
        summary = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert set(SUMMARY_KEYS) <= set(summary)
        assert summary["seed"] == 3 and summary["method"] == "x"
        A = read_matrix(tmp_path / "out" / "mixing_estimate.f64")
        assert A.tobytes() == result.mixing_estimate.tobytes()

    def test_complex_components_split(self, tmp_path, rng):
        result = self._result(rng)
        result.components = result.components.with_data(result.components.data * (1 + 1j))
        names = {p.name for p in write_result(result, tmp_path)}
        assert "component_0_re.f64" in names and "component_0_im.csv" in names

    def test_error_report(self, tmp_path):
        rep = unmixing_error(np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))
        write_result(rep, tmp_path, seed=1)
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["error"] == pytest.approx(np.sqrt(0.5))

    def test_unwritable(self, tmp_path, rng):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            write_result(self._result(rng), blocker / "sub")
