import numpy as np
import pytest

from headswap.config import load_config, parse_floats, parse_key_values
from headswap.errors import InvalidArgument
from headswap.formats import (
    TRACE_HEADER,
    frame_path,
    read_frames,
    read_image,
    read_json,
    read_template,
    read_trace,
    write_frames,
    write_image,
    write_json,
    write_template,
    write_trace,
)
from headswap.geometry import PoseState

from conftest import random_pose


def test_image_round_trip(tmp_path, rng):
    img = np.round(rng.random((12, 9, 3)) * 255) / 255
    write_image(tmp_path / "a.ppm", img)
    assert (tmp_path / "a.ppm").read_bytes()[:2] == b"P6"
    assert np.array_equal(read_image(tmp_path / "a.ppm"), img)


def test_gray_round_trip(tmp_path, rng):
    img = np.round(rng.random((7, 5)) * 255) / 255
    write_image(tmp_path / "m.pgm", img)
    assert (tmp_path / "m.pgm").read_bytes()[:2] == b"P5"
    assert np.array_equal(read_image(tmp_path / "m.pgm", color=False), img)


def test_frames_numbered(tmp_path, rng):
    frames = [rng.random((4, 4, 3)) for _ in range(3)]
    write_frames(tmp_path, frames)
    assert frame_path(tmp_path, 2).name == "frame_000002.ppm"
    assert len(read_frames(tmp_path)) == 3


def test_template_round_trip(tmp_path, template):
    write_template(tmp_path / "t.csv", template)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "x,y,z,nx,ny,nz,t"
    back = read_template(tmp_path / "t.csv")
    assert np.array_equal(back.points, template.points)
    assert np.array_equal(back.normals, template.normals)
    assert np.array_equal(back.intensities, template.intensities)


def test_template_bad_header(tmp_path):
    (tmp_path / "t.csv").write_text("a,b\n1,2\n")
    with pytest.raises(InvalidArgument):
        read_template(tmp_path / "t.csv")


def test_trace_round_trip(tmp_path, rng):
    poses = [random_pose(rng) for _ in range(5)]
    write_trace(tmp_path / "p.csv", poses, ["Tracking"] * 4 + ["Lost"])
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER) + ",status"
    assert lines[-1].endswith(",Lost")
    frames, back = read_trace(tmp_path / "p.csv")
    assert frames == list(range(5))
    for a, b in zip(poses, back):
        for f in TRACE_HEADER[1:]:
            assert getattr(a, f) == getattr(b, f)


def test_trace_explicit_frames(tmp_path):
    write_trace(tmp_path / "p.csv", [PoseState()] * 3, frames=[0, 4, 9])
    assert read_trace(tmp_path / "p.csv")[0] == [0, 4, 9]
    with pytest.raises(InvalidArgument):
        write_trace(tmp_path / "q.csv", [PoseState()] * 3, frames=[0])


def test_trace_missing_column(tmp_path):
    (tmp_path / "p.csv").write_text("frame,tx\n0,1\n")
    with pytest.raises(InvalidArgument):
        read_trace(tmp_path / "p.csv")


def test_json(tmp_path):
    write_json(tmp_path / "x.json", {"a": 1.5})
    assert read_json(tmp_path / "x.json") == {"a": 1.5}


class TestConfig:
    def test_parse(self):
        text = "# tracker\nparticles = 300\nmotion-std = '1 2 3'  # inline\n\nout=/tmp/x\n"
        assert parse_key_values(text) == {"particles": "300", "motion_std": "1 2 3", "out": "/tmp/x"}

    @pytest.mark.parametrize("text", ["novalue\n", " = 3\n"])
    def test_malformed(self, text):
        with pytest.raises(InvalidArgument):
            parse_key_values(text)

    def test_load(self, tmp_path):
        (tmp_path / "c.conf").write_text("seed = 4\n")
        assert load_config(tmp_path / "c.conf") == {"seed": "4"}

    def test_floats(self):
        assert parse_floats("1, 2.5 3") == (1.0, 2.5, 3.0)
