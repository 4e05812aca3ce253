import json

import numpy as np
import numpy.testing as npt
import pytest

from dsrlab import models
from dsrlab.models import (
    ALRNNParams,
    ShPLRNNParams,
    RCParams,
    ObservationModel,
    default_observation,
    observe,
    infer_state,
    alrnn_step,
    shplrnn_step,
    rc_step,
    rc_readout,
    model_jacobian,
    generate,
    init_model,
    save_checkpoint,
    load_checkpoint,
    spectral_radius,
)
from dsrlab.systems import DivergenceError


def small_alrnn(M=4, P=2, seed=0):
    return init_model("alrnn", M, 2, P=P, seed=seed)


class TestALRNNStep:
    def test_all_linear_case(self):
        p = small_alrnn(P=0)
        rng = np.random.default_rng(1)
        z = rng.standard_normal(4)
        npt.assert_allclose(alrnn_step(p, z), (np.diag(p.A) + p.W) @ z + p.h, rtol=1e-14)

    def test_scalar_hand_case(self):
        p = ALRNNParams(A=[0.5], W=[[1.0]], h=[0.0], P=1)
        assert alrnn_step(p, np.array([-1.0]))[0] == pytest.approx(-0.5)
        assert alrnn_step(p, np.array([2.0]))[0] == pytest.approx(3.0)

    def test_zero_state_returns_bias(self):
        p = small_alrnn()
        h = np.array([1.0, -2.0, 0.5, 3.0])
        p = ALRNNParams(p.A, p.W, h, p.P)
        npt.assert_array_equal(alrnn_step(p, np.zeros(4)), h)


class TestShPLRNNStep:
    def test_dead_relu_returns_bias(self):
        p = init_model("shplrnn", 3, 2, H=5, seed=0)
        p = ShPLRNNParams(p.A, p.W1, p.W2, np.array([1.0, 2.0, 3.0]), -np.ones(5))
        npt.assert_array_equal(shplrnn_step(p, np.zeros(3)), p.h1)

    def test_scalar_hand_case(self):
        p = ShPLRNNParams(A=[0.0], W1=[[2.0]], W2=[[1.0]], h1=[0.0], h2=[0.0])
        assert shplrnn_step(p, np.array([3.0]))[0] == pytest.approx(6.0)

    def test_saturated_relu_is_affine(self):
        p = init_model("shplrnn", 3, 2, H=5, seed=1)
        p = ShPLRNNParams(p.A, p.W1, p.W2, p.h1, 100.0 * np.ones(5))  # always active
        rng = np.random.default_rng(2)
        for _ in range(10):
            z = rng.standard_normal(3)
            affine = p.A * z + p.W1 @ (p.W2 @ z + p.h2) + p.h1
            npt.assert_allclose(shplrnn_step(p, z), affine, rtol=1e-12)


class TestRCStep:
    def test_alpha_one_is_pure_leak(self):
        p = init_model("rc", 10, 2, seed=0)
        p = RCParams(1.0, p.W, p.W_in, p.b, p.W_out, p.spectral_radius_target)
        r = np.random.default_rng(0).standard_normal(10)
        npt.assert_array_equal(rc_step(p, r, np.ones(2)), r)

    def test_zero_fixed_point(self):
        p = init_model("rc", 10, 2, seed=0)
        npt.assert_array_equal(rc_step(p, np.zeros(10), np.zeros(2)), np.zeros(10))

    def test_scalar_tanh(self):
        p = RCParams(0.0, [[0.0]], [[1.0]], [0.0], [[0.0]], 1.0)
        out = rc_step(p, np.array([0.0]), np.array([0.5]))
        assert out[0] == pytest.approx(np.tanh(0.5), abs=1e-12)


class TestJacobians:
    def test_alrnn_all_linear(self):
        p = small_alrnn(P=0)
        rng = np.random.default_rng(0)
        for _ in range(5):
            J = model_jacobian(p, rng.standard_normal(4))
            npt.assert_allclose(J, np.diag(p.A) + p.W, rtol=1e-14)

    def test_scalar_indicator(self):
        p = ALRNNParams(A=[0.5], W=[[1.0]], h=[0.0], P=1)
        assert model_jacobian(p, np.array([1.0]))[0, 0] == pytest.approx(1.5)
        assert model_jacobian(p, np.array([-1.0]))[0, 0] == pytest.approx(0.5)

    @pytest.mark.parametrize("family,kw", [
        ("alrnn", {"P": 2}),
        ("shplrnn", {"H": 7}),
        ("rc", {}),
    ])
    def test_finite_difference_agreement(self, family, kw):
        model = init_model(family, 5, 2, seed=3, **kw)
        rng = np.random.default_rng(4)
        h = 1e-6
        for _ in range(100):
            z = rng.standard_normal(5)
            u = rng.standard_normal(2)
            if family == "rc":
                J = model_jacobian(model, z, u)
                stepf = lambda s: rc_step(model, s, u)
            else:
                J = model_jacobian(model, z)
                stepf = lambda s: models.step(model, s)
            J_fd = np.empty((5, 5))
            for j in range(5):
                e = np.zeros(5)
                e[j] = h
                J_fd[:, j] = (stepf(z + e) - stepf(z - e)) / (2 * h)
            npt.assert_allclose(J, J_fd, rtol=1e-5, atol=1e-5)

    def test_alrnn_region_count(self):
        p = small_alrnn(M=6, P=3)
        rng = np.random.default_rng(5)
        seen = {tuple((rng0 > 0).astype(int)) for rng0 in rng.standard_normal((500, 6))[:, 3:]}
        jacs = set()
        for z in rng.standard_normal((500, 6)):
            jacs.add(model_jacobian(p, z).tobytes())
        assert len(jacs) <= 2**3
        assert seen  # the sampled sign patterns genuinely vary

    def test_alrnn_affine_within_region(self):
        # states sharing a ReLU sign pattern see exactly the same affine map
        p = small_alrnn(M=5, P=2)
        rng = np.random.default_rng(6)
        for _ in range(20):
            z1 = rng.standard_normal(5)
            z2 = z1.copy()
            z2[:3] += rng.standard_normal(3)  # only linear units differ
            z2[3:] = z1[3:] * rng.uniform(0.5, 2.0, 2)  # same signs on ReLU units
            pred = alrnn_step(p, z1) + model_jacobian(p, z1) @ (z2 - z1)
            npt.assert_allclose(alrnn_step(p, z2), pred, rtol=1e-12, atol=1e-12)


class TestObservation:
    def test_orthonormal_rows_projection(self):
        B = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        om = ObservationModel(B)
        z = np.array([2.0, -3.0, 7.0])
        npt.assert_allclose(infer_state(om, observe(om, z)), [2.0, -3.0, 0.0], atol=1e-12)

    def test_identity_square(self):
        om = ObservationModel(np.eye(3))
        z = np.array([1.0, 2.0, 3.0])
        npt.assert_allclose(infer_state(om, observe(om, z)), z, atol=1e-14)

    def test_row_vector_pinv(self):
        om = ObservationModel(np.array([[1.0, 0.0]]))
        npt.assert_allclose(infer_state(om, np.array([3.0])), [3.0, 0.0], atol=1e-14)

    def test_pinv_axioms_random_shapes(self):
        rng = np.random.default_rng(7)
        for N, M in [(1, 5), (3, 8), (4, 4), (5, 3)]:
            B = rng.standard_normal((N, M))
            om = ObservationModel(B)
            npt.assert_allclose(om.B @ om.B_pinv @ om.B, om.B, atol=1e-10)
            npt.assert_allclose(om.B_pinv @ om.B @ om.B_pinv, om.B_pinv, atol=1e-10)

    def test_bad_cached_pinv_rejected(self):
        with pytest.raises(ValueError, match="pseudo-inverse"):
            ObservationModel(np.eye(2), B_pinv=np.ones((2, 2)))


class TestGenerate:
    def test_constant_after_one_step(self):
        h = np.array([1.0, -1.0, 0.5])
        p = ALRNNParams(np.zeros(3), np.zeros((3, 3)), h, 1)
        om = default_observation(2, 3)
        latent, obs = generate(p, om, np.array([5.0, 5.0, 5.0]), 10)
        npt.assert_array_equal(latent.samples, np.tile(h, (10, 1)))
        npt.assert_array_equal(obs.samples, np.tile(h[:2], (10, 1)))

    def test_single_step_equals_step_map(self):
        p = small_alrnn()
        om = default_observation(2, 4)
        z0 = np.array([0.1, -0.2, 0.3, 0.4])
        latent, _ = generate(p, om, z0, 1)
        npt.assert_array_equal(latent.samples[0], alrnn_step(p, z0))

    def test_divergence_reports_step(self):
        p = ALRNNParams(np.full(3, 4.0), np.zeros((3, 3)), np.zeros(3), 0)  # expanding
        om = default_observation(2, 3)
        with pytest.raises(DivergenceError):
            generate(p, om, np.ones(3), 100)

    def test_rc_closed_loop_feedback(self):
        p = init_model("rc", 20, 2, seed=1)
        rng = np.random.default_rng(2)
        W_out = rng.standard_normal((2, 20)) * 0.1
        p = RCParams(p.alpha, p.W, p.W_in, p.b, W_out, p.spectral_radius_target)
        r0 = rng.standard_normal(20) * 0.1
        latent, obs = generate(p, None, r0, 3)
        r = r0
        for t in range(3):
            r = rc_step(p, r, rc_readout(p, r))
            npt.assert_allclose(latent.samples[t], r, rtol=1e-14)
        npt.assert_allclose(obs.samples, rc_readout(p, latent.samples), rtol=1e-14)


class TestInit:
    def test_seed_reproducibility(self):
        for fam, kw in [("alrnn", {"P": 3}), ("shplrnn", {"H": 10}), ("rc", {})]:
            a = init_model(fam, 12, 3, seed=9, **kw)
            b = init_model(fam, 12, 3, seed=9, **kw)
            for k, v in vars(a).items():
                if isinstance(v, np.ndarray):
                    npt.assert_array_equal(v, getattr(b, k))

    def test_rc_spectral_radius_matches_power_iteration(self):
        p = init_model("rc", 100, 3, seed=11)
        # independent oracle: block power (orthogonal) iteration with block
        # size 2, which converges even when the dominant eigenvalue is a
        # complex-conjugate pair; the modulus comes from the projected 2x2
        rng = np.random.default_rng(0)
        Q = np.linalg.qr(rng.standard_normal((100, 2)))[0]
        for _ in range(2000):
            Q = np.linalg.qr(p.W @ Q)[0]
        T2 = Q.T @ p.W @ Q
        rho_pi = float(np.max(np.abs(np.linalg.eigvals(T2))))
        assert abs(rho_pi - 0.95) < 1e-6
        assert abs(spectral_radius(p.W) - 0.95) < 1e-9

    def test_alrnn_diagonal_range(self):
        p = init_model("alrnn", 50, 3, P=5, seed=2)
        assert p.A.min() >= 0.5 and p.A.max() <= 0.95

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            init_model("alrnn", 4, 2, P=9)
        with pytest.raises(ValueError):
            init_model("unknown", 4, 2)


class TestCheckpoint:
    def test_roundtrip_all_families(self, tmp_path):
        om = default_observation(2, 6)
        for fam, kw in [("alrnn", {"P": 2}), ("shplrnn", {"H": 9}), ("rc", {})]:
            model = init_model(fam, 6, 2, seed=13, **kw)
            path = tmp_path / f"{fam}.json"
            save_checkpoint(model, path, om=None if fam == "rc" else om, seed=13)
            loaded, om2, meta = load_checkpoint(path)
            assert meta["seed"] == 13
            for k, v in vars(model).items():
                if isinstance(v, np.ndarray):
                    npt.assert_array_equal(v, getattr(loaded, k))
            if fam != "rc":
                npt.assert_array_equal(om2.B, om.B)

    def test_checkpoint_is_self_describing_json(self, tmp_path):
        model = small_alrnn()
        save_checkpoint(model, tmp_path / "m.json", seed=1)
        doc = json.loads((tmp_path / "m.json").read_text())
        assert doc["family"] == "alrnn"
        assert doc["M"] == 4 and doc["P"] == 2
        assert len(doc["W"]) == 16
