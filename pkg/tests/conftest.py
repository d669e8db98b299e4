import dataclasses
import json

import numpy as np
import pytest

from headswap.facebank import build_bank
from headswap.geometry import PoseState
from headswap.synth import STANDARD_CAMERA, STANDARD_MODEL, Renderer, TextureSpec, render_sequence, standard_script
from headswap.tracker import calibrate_template

ACCEPTANCE_LINES = []


def record(number, title, passed, detail=""):
    """Register one acceptance verdict line; printed again in the terminal summary."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(':'))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cam():
    return STANDARD_CAMERA


@pytest.fixture(scope="session")
def model():
    return STANDARD_MODEL


@pytest.fixture(scope="session")
def script():
    return standard_script()


@pytest.fixture(scope="session")
def frontal(script, model, cam):
    return Renderer(script, model, cam).frontal()


@pytest.fixture(scope="session")
def template(frontal, model, cam):
    return calibrate_template(frontal, model, cam, 200)


@pytest.fixture(scope="session")
def frontal_b(script, model, cam):
    other = dataclasses.replace(script, texture=TextureSpec(seed=7, tint=(1.0, 0.8, 0.65)))
    return Renderer(other, model, cam).frontal()


@pytest.fixture(scope="session")
def bank(frontal_b, model, cam):
    return build_bank(frontal_b, model, cam)


@pytest.fixture(scope="session")
def short_clip(script, model, cam):
    """First 100 frames of the benchmark clip."""
    return render_sequence(dataclasses.replace(script, duration=100), model, cam)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, max_angle=170.0, **fixed):
    values = dict(
        tx=rng.uniform(-30, 30),
        ty=rng.uniform(-30, 30),
        s=rng.uniform(0.5, 1.5),
        rx=rng.uniform(-max_angle, max_angle),
        ry=rng.uniform(-max_angle, max_angle),
        rz=rng.uniform(-max_angle, max_angle),
        alpha=rng.uniform(0.5, 1.5),
    )
    values.update(fixed)
    return PoseState(**values)


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Artifacts of ``synth`` + ``calibrate`` + ``build-bank`` on the benchmark clip."""
    from headswap.cli import main

    root = tmp_path_factory.mktemp("cli")
    clip = root / "clip"
    assert main(["synth", "--out", str(clip), "--seed", "0"]) == 0
    assert main(["calibrate", "--image", str(clip / "frontal.ppm"), "--out", str(root / "template.csv")]) == 0
    # Subject B: same geometry, another texture seed and skin tint.
    script = clip / "script.json"
    b_script = root / "subject_b.json"
    d = json.loads(script.read_text())
    d["texture"].update(seed=7, tint=[1.0, 0.8, 0.65])
    d["duration"] = 1
    b_script.write_text(json.dumps(d))
    assert main(["synth", "--script", str(b_script), "--out", str(root / "subject_b")]) == 0
    assert main(["build-bank", "--image", str(root / "subject_b" / "frontal.ppm"), "--out", str(root / "bank")]) == 0
    return root
