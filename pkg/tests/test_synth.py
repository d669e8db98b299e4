import dataclasses
import math

import numpy as np
import pytest

from headswap.errors import InvalidCoverage, InvalidScript, OverlapError
from headswap.geometry import PoseState, in_frame, project_points, rotation_matrix, sample_bilinear, silhouette_mask
from headswap.synth import (
    BackgroundSpec,
    Constant,
    DistractorSpec,
    OcclusionSpec,
    Ramp,
    Renderer,
    SceneScript,
    Sinusoid,
    TextureSpec,
    face_bbox,
    ground_truth,
    inject_distractor,
    inject_occlusion,
    occluder_rect,
    pitch_ramp_script,
    render_sequence,
    script_from_dict,
    script_to_dict,
    standard_script,
)
from headswap.tracker import to_gray

# Poses whose projections of calibration pixels land exactly on the pixel grid.
GRID_ALIGNED = [
    PoseState(),
    PoseState(tx=7.0, ty=-12.0),
    PoseState(rz=90.0, tx=3.0),
    PoseState(rz=-90.0),
    PoseState(rz=-180.0, ty=5.0),
    PoseState(s=2.0),
]


def render_consistency(renderer, template, pose, cam):
    frame = to_gray(renderer.render(pose, noise=False))
    uv = project_points(template.points, pose, cam)
    r = rotation_matrix(pose.rx, pose.ry, pose.rz)
    ok = in_frame(uv[:, 0], uv[:, 1], cam.width, cam.height) & ((template.normals @ r.T)[:, 2] > 0)
    return np.abs(sample_bilinear(frame, uv[ok, 0], uv[ok, 1]) - template.intensities[ok])


class TestTrajectories:
    def test_sinusoid_quarter_period(self):
        script = SceneScript(100, {"ry": Sinusoid(40.0, 100.0)})
        assert ground_truth(script)[25].ry == pytest.approx(40.0, abs=1e-12)

    def test_velocities_are_derivatives(self):
        script = SceneScript(60, {"ry": Sinusoid(30.0, 50.0, 0.3), "tx": Ramp(-10.0, 20.0), "ty": Constant(4.0)})
        trace = ground_truth(script)
        assert all(p.tx_dot == pytest.approx(30.0 / 59) for p in trace)
        assert all(p.ty_dot == 0.0 for p in trace)
        h = 1e-4
        for k in (0, 13, 40):
            s = Sinusoid(30.0, 50.0, 0.3)
            numeric = (s.value_at(k + h, 60) - s.value_at(k - h, 60)) / (2 * h)
            assert trace[k].ry_dot == pytest.approx(float(numeric), rel=1e-6)

    def test_ramp_endpoints(self):
        trace = ground_truth(pitch_ramp_script())
        assert trace[0].rx == 0.0 and trace[-1].rx == pytest.approx(70.0)

    def test_standard_clip_speed(self):
        trace = ground_truth(standard_script())
        assert len(trace) == 300
        ry = np.array([p.ry for p in trace])
        rx = np.array([p.rx for p in trace])
        assert ry.max() == pytest.approx(40.0, abs=0.1) and rx.min() == pytest.approx(-40.0, abs=0.1)
        assert np.abs(np.diff(ry)).max() <= 2.0 and np.abs(np.diff(rx)).max() <= 2.0

    @pytest.mark.parametrize(
        "script",
        [
            SceneScript(0),
            SceneScript(10, {"ry_dot": Constant(1.0)}),
            SceneScript(10, {"s": Constant(-1.0)}),
            SceneScript(10, {"ry": Sinusoid(200.0, 10.0)}),
            SceneScript(10, background=BackgroundSpec(kind="plaid")),
            SceneScript(10, noise_std=-0.1),
        ],
    )
    def test_invalid_scripts(self, script, model, cam):
        with pytest.raises(InvalidScript):
            render_sequence(script, model, cam)


class TestRender:
    def test_constant_pose_constant_frames(self, model, cam):
        script = SceneScript(5, {"ry": Constant(12.0), "tx": Constant(-3.0)})
        frames, trace = render_sequence(script, model, cam)
        assert all(np.array_equal(f, frames[0]) for f in frames)
        assert all(p == trace[0] for p in trace)

    def test_deterministic(self, model, cam):
        script = standard_script(duration=4, background=BackgroundSpec(kind="noise", seed=3))
        a, _ = render_sequence(script, model, cam)
        b, _ = render_sequence(script, model, cam)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a, b))

    def test_frames_are_8bit_levels(self, short_clip, cam):
        frame = short_clip[0][3]
        assert frame.shape == (cam.height, cam.width, 3)
        assert np.array_equal(np.round(frame * 255) / 255, frame)

    def test_alpha_scales_face(self, model, cam):
        r = Renderer(SceneScript(1), model, cam)
        a = r.render(PoseState(), noise=False)
        b = r.render(PoseState(alpha=0.5), noise=False)
        np.testing.assert_allclose(b, np.round(a * 0.5 * 255) / 255, atol=1 / 255 + 1e-12)

    def test_face_pixels_follow_silhouette(self, model, cam):
        pose = PoseState(ry=30.0, tx=10.0)
        flat = TextureSpec(low=0.8, high=0.8, shading=0.0)
        frame = Renderer(SceneScript(1, texture=flat), model, cam).render(pose, noise=False)
        mask = silhouette_mask(model, pose, cam).astype(bool)
        assert np.all(frame[mask] == 204 / 255)
        assert np.all(frame[~mask] == 128 / 255)

    @pytest.mark.parametrize("pose", GRID_ALIGNED, ids=lambda p: f"tx{p.tx:g}_rz{p.rz:g}_s{p.s:g}")
    def test_template_consistency_on_grid(self, script, template, model, cam, pose):
        err = render_consistency(Renderer(script, model, cam), template, pose, cam)
        assert err.size > 150
        assert err.max() <= 1 / 255

    def test_template_consistency_general(self, script, template, model, cam, rng):
        # Off-grid the bilinear resampling of a sharp checker dominates; bound its typical size.
        renderer = Renderer(script, model, cam)
        errs = []
        for _ in range(10):
            pose = PoseState(tx=rng.uniform(-20, 20), ty=rng.uniform(-20, 20), s=rng.uniform(0.8, 1.2), rx=rng.uniform(-40, 40), ry=rng.uniform(-40, 40), rz=rng.uniform(-20, 20))
            errs.append(render_consistency(renderer, template, pose, cam))
        e = np.concatenate(errs)
        assert np.median(e) <= 0.015 and e.mean() <= 0.02


@pytest.fixture(scope="module")
def clip(model, cam):
    return render_sequence(standard_script(duration=12), model, cam)


class TestOcclusion:
    def test_zero_coverage(self, clip, model, cam):
        frames, trace = clip
        out = inject_occlusion(frames, OcclusionSpec(coverage=0.0), trace, model, cam)
        assert all(np.array_equal(a, b) for a, b in zip(out, frames))

    @pytest.mark.parametrize("coverage", [-0.1, 1.0, 1.5])
    def test_invalid_coverage(self, clip, model, cam, coverage):
        with pytest.raises(InvalidCoverage):
            inject_occlusion(clip[0], OcclusionSpec(coverage=coverage), clip[1], model, cam)

    def test_covered_area(self, clip, model, cam):
        frames, trace = clip
        out = inject_occlusion(frames, OcclusionSpec(coverage=0.2), trace, model, cam)
        for k in (0, 7):
            c0, r0, c1, r1 = face_bbox(model, trace[k], cam)
            area = (c1 - c0 + 1) * (r1 - r0 + 1)
            left, top, width, height = occluder_rect((c0, r0, c1, r1), 0.2)
            assert abs(width * height - 0.2 * area) <= height / 2 + 0.5
            changed = np.any(out[k] != frames[k], axis=2)
            inside = np.zeros_like(changed)
            inside[top : top + height, left : left + width] = True
            assert not np.any(changed & ~inside)
            assert np.all(out[k][inside] == np.round(np.array([0.55, 0.45, 0.4]) * 255) / 255)
            # The rectangle lies inside the face box.
            assert c0 <= left and left + width - 1 <= c1 and r0 <= top and top + height - 1 <= r1

    def test_onset(self, model, cam):
        frames, trace = render_sequence(standard_script(duration=100, noise_std=0.0), model, cam)
        out = inject_occlusion(frames, OcclusionSpec(coverage=0.2, onset=50), trace, model, cam)
        assert all(out[k] is frames[k] for k in range(50))
        assert all(not np.array_equal(out[k], frames[k]) for k in range(50, 100, 7))

    def test_script_occlusion_applied(self, model, cam):
        plain, _ = render_sequence(standard_script(duration=3), model, cam)
        occl, _ = render_sequence(standard_script(duration=3, occlusion=OcclusionSpec(0.2, onset=1)), model, cam)
        assert np.array_equal(plain[0], occl[0]) and not np.array_equal(plain[2], occl[2])

    def test_rect_arithmetic(self):
        left, top, width, height = occluder_rect((0, 0, 99, 99), 0.25)
        assert (width, height) == (50, 50)
        assert left == 25
        assert occluder_rect((0, 0, 99, 99), 0.0)[2:] == (0, 0)


class TestDistractor:
    def test_no_distractor_same_frames(self, model, cam):
        script = standard_script(duration=3)
        a, _ = render_sequence(script, model, cam)
        b, _ = render_sequence(dataclasses.replace(script, distractors=()), model, cam)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_background_layer_only(self, model, cam):
        static = SceneScript(2, {"ry": Constant(20.0)})
        with_d = inject_distractor(static, DistractorSpec(tx=-125.0, ty=-75.0), model, cam)
        base, _ = render_sequence(static, model, cam)
        dist, _ = render_sequence(with_d, model, cam)
        mask = silhouette_mask(model, PoseState(ry=20.0), cam).astype(bool)
        assert np.array_equal(base[0][mask], dist[0][mask])
        assert not np.array_equal(base[0][~mask], dist[0][~mask])

    def test_overlap_rejected(self, model, cam):
        with pytest.raises(OverlapError):
            inject_distractor(standard_script(), DistractorSpec(tx=60.0, ty=0.0), model, cam)

    def test_standard_placement_is_clear(self, model, cam):
        script = inject_distractor(standard_script(), DistractorSpec(tx=-125.0, ty=-75.0), model, cam)
        assert len(script.distractors) == 1


class TestSerialization:
    def test_round_trip(self, model, cam):
        script = inject_distractor(
            standard_script(occlusion=OcclusionSpec(0.2, onset=100), background=BackgroundSpec("noise", seed=2)),
            DistractorSpec(tx=-125.0, ty=-75.0),
            model,
            cam,
        )
        script = dataclasses.replace(script, trajectories={**script.trajectories, "tx": Ramp(-5.0, 5.0), "s": Constant(1.1)})
        assert script_from_dict(script_to_dict(script)) == script

    @pytest.mark.parametrize("d", [{}, {"duration": 5, "trajectories": {"ry": {"type": "spiral"}}}, {"duration": 5, "bogus": 1}])
    def test_malformed(self, d):
        with pytest.raises(InvalidScript):
            script_from_dict(d)


def test_sinusoid_phase_in_radians():
    assert Sinusoid(1.0, 4.0, math.pi / 2).value_at(0, 1) == pytest.approx(1.0)
