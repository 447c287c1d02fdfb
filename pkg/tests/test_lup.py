import numpy as np
import pytest
from scipy.linalg import subspace_angles

from itattack.attacks import SimbaConfig, it_simba_attack
from itattack.candidates import PixelBasis, SequenceSource
from itattack.errors import ConfigError, ShapeError
from itattack.lup import (
    ExploitConfig,
    exploit_phase,
    extract_components,
    leak_phase,
    load_bundle,
    project_total_queries,
    save_bundle,
)
from itattack.oracle import QueryLedger, SyntheticOracleSpec, make_synthetic_oracle
from itattack.tensor import AttackObjective, ImageTensor, RngStream, zeros

from conftest import ScriptedLossOracle


def _image(rng, dims=(3, 8, 8), amp=0.5, value_range=(-1.0, 1.0)):
    return ImageTensor(rng.uniform(-amp, amp, size=dims).astype(np.float32), value_range)


def _identity_objective(x, threshold=0.0, direction="minimize"):
    return AttackObjective(target=x, loss_kind="mse", direction=direction,
                           threshold=threshold)


class TestExtractComponents:
    def test_identical_set_yields_nothing(self, rng):
        p = _image(rng, dims=(3, 4, 4))
        comps, variances = extract_components([p, p, p])
        assert comps == [] and variances == []

    def test_single_perturbation_yields_nothing(self, rng):
        comps, variances = extract_components([_image(rng, dims=(3, 4, 4))])
        assert comps == [] and variances == []

    def test_empty_input_rejected(self):
        with pytest.raises(ConfigError):
            extract_components([])

    def test_dims_mismatch_rejected(self, rng):
        with pytest.raises(ShapeError):
            extract_components([_image(rng, dims=(3, 4, 4)), _image(rng, dims=(3, 5, 5))])

    def test_recovers_planted_direction(self):
        gen = RngStream(31).generator()
        dims = (3, 8, 8)
        d = int(np.prod(dims))
        u = gen.standard_normal(d)
        u /= np.linalg.norm(u)
        samples = []
        for _ in range(50):
            coeff = gen.normal(scale=1.0)
            noise = gen.normal(scale=0.05, size=d)
            samples.append(ImageTensor((coeff * u + noise).reshape(dims), (-10.0, 10.0)))
        comps, variances = extract_components(samples)
        top = comps[0].flat().astype(np.float64)
        assert abs(float(top @ u)) > 0.99
        assert variances[0] > 5 * variances[1]

    def test_matches_covariance_eigendecomposition(self):
        gen = RngStream(8).generator()
        dims = (3, 8, 8)
        d = int(np.prod(dims))
        raw = gen.standard_normal((30, d)) @ np.diag(gen.uniform(0.1, 2.0, size=d))
        samples = [ImageTensor(row.reshape(dims), (-50.0, 50.0)) for row in raw]
        comps, variances = extract_components(samples)

        # brute-force path sees the same float32-stored rows
        mat = np.stack([s.flat().astype(np.float64) for s in samples])
        centered = mat - mat.mean(axis=0, keepdims=True)
        cov = centered.T @ centered / (len(mat) - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]

        k = len(comps)
        got = np.stack([c.flat().astype(np.float64) for c in comps], axis=1)
        # eigenvalues match the explained variances
        assert np.allclose(variances, evals[:k], rtol=1e-8, atol=1e-10)
        # per-component principal angle against the brute-force eigenvector
        for j in range(k):
            angle = subspace_angles(got[:, [j]], evecs[:, [j]])[0]
            assert angle < 1e-4

    def test_components_orthonormal_and_ordered(self, rng):
        samples = [_image(rng, dims=(3, 6, 6)) for _ in range(20)]
        comps, variances = extract_components(samples)
        got = np.stack([c.flat().astype(np.float64) for c in comps])
        gram = got @ got.T
        # components are stored as float32, so orthonormal to f32 precision
        assert np.allclose(gram, np.eye(len(comps)), atol=1e-6)
        assert all(b <= a for a, b in zip(variances, variances[1:]))

    def test_sign_convention(self, rng):
        samples = [_image(rng, dims=(3, 6, 6)) for _ in range(20)]
        comps, _ = extract_components(samples)
        for c in comps:
            flat = c.flat()
            assert flat[np.argmax(np.abs(flat))] > 0


class TestLeakPhase:
    def _setup(self, n_images=5):
        spec = SyntheticOracleSpec(
            "affine", (3, 6, 6), seed=2, params={"rank": 3, "offset_scale": 0.3}
        )
        oracle = make_synthetic_oracle(spec)
        gen = RngStream(55).generator()
        dataset = [
            ImageTensor(gen.uniform(-0.5, 0.5, size=(3, 6, 6)).astype(np.float32))
            for _ in range(n_images)
        ]
        return oracle, dataset

    def test_totals_and_collection(self):
        oracle, dataset = self._setup()
        report = leak_phase(
            oracle,
            dataset,
            lambda x, ledger: _identity_objective(x, threshold=1e-3),
            SimbaConfig(step=0.2),
            budget_per_image=60,
            rng=RngStream(1),
        )
        assert len(report.perturbations) == len(dataset)
        assert len(report.per_image_outcomes) == len(dataset)
        assert report.total_leak_queries == sum(
            o.queries_used for o in report.per_image_outcomes
        )
        assert all(o.queries_used <= 60 for o in report.per_image_outcomes)

    def test_failed_attacks_still_contribute(self):
        oracle, dataset = self._setup()
        # threshold 0 is unreachable within a 30-query budget
        report = leak_phase(
            oracle,
            dataset,
            lambda x, ledger: _identity_objective(x, threshold=0.0),
            SimbaConfig(step=0.2),
            budget_per_image=30,
            rng=RngStream(1),
        )
        assert not any(o.success for o in report.per_image_outcomes)
        assert len(report.perturbations) == len(dataset)
        assert len(report.components) > 0

    def test_empty_dataset_rejected(self):
        oracle, _ = self._setup()
        with pytest.raises(ConfigError):
            leak_phase(oracle, [], lambda x, ledger: _identity_objective(x),
                       SimbaConfig(), budget_per_image=10)

    def test_deterministic(self):
        oracle, dataset = self._setup()
        runs = []
        for _ in range(2):
            report = leak_phase(
                oracle,
                dataset,
                lambda x, ledger: _identity_objective(x, threshold=1e-3),
                SimbaConfig(step=0.2),
                budget_per_image=60,
                rng=RngStream(1),
            )
            runs.append(report)
        assert runs[0].total_leak_queries == runs[1].total_leak_queries
        for a, b in zip(runs[0].components, runs[1].components):
            assert np.array_equal(a.data, b.data)


def _unit(coord, dims=(1, 2, 2)):
    flat = np.zeros(int(np.prod(dims)), dtype=np.float32)
    flat[coord] = 1.0
    return ImageTensor(flat.reshape(dims), (-10.0, 10.0))


class TestExploitPhase:
    def test_components_tried_in_stored_order(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        # every first probe commits; threshold met on the third component
        oracle = ScriptedLossOracle(x, [1.0, 0.9, 0.8, 0.7])
        obj = _identity_objective(x, threshold=0.75)
        comps = [_unit(0), _unit(1), _unit(2)]
        cfg = ExploitConfig(step=0.5, n_sat=20)
        out = exploit_phase(oracle, QueryLedger(budget=50), obj, x, comps,
                            SequenceSource([_unit(3)]), cfg)
        assert out.success
        assert not out.fallback_engaged
        expected = 0.5 * (_unit(0).data + _unit(1).data + _unit(2).data)
        assert np.allclose(out.eta.data, expected)
        assert out.queries_used == 4

    def test_saturation_triggers_fallback(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        # component fails both probes, then the pixel candidate succeeds
        oracle = ScriptedLossOracle(x, [1.0, 2.0, 2.0, 0.0])
        obj = _identity_objective(x, threshold=0.0)
        cfg = ExploitConfig(step=0.5, n_sat=2)
        out = exploit_phase(oracle, QueryLedger(budget=50), obj, x,
                            [_unit(0), _unit(1)], SequenceSource([_unit(3)]), cfg)
        assert out.success
        assert out.fallback_engaged
        assert np.allclose(out.eta.data, 0.5 * _unit(3).data)

    def test_high_n_sat_keeps_trying_components(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        # first component fails twice; second commits and reaches the threshold
        oracle = ScriptedLossOracle(x, [1.0, 2.0, 2.0, 0.0])
        obj = _identity_objective(x, threshold=0.0)
        cfg = ExploitConfig(step=0.5, n_sat=20)
        out = exploit_phase(oracle, QueryLedger(budget=50), obj, x,
                            [_unit(0), _unit(1)], SequenceSource([_unit(3)]), cfg)
        assert out.success
        assert not out.fallback_engaged
        assert np.allclose(out.eta.data, 0.5 * _unit(1).data)

    def test_commit_resets_saturation(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        # comp0: + fails, - commits (reset); comp1: both fail -> saturation 2
        # hits n_sat - 1 = 2 -> fallback; pixel candidate finishes the attack.
        oracle = ScriptedLossOracle(x, [1.0, 2.0, 0.9, 2.0, 2.0, 0.0])
        obj = _identity_objective(x, threshold=0.0)
        cfg = ExploitConfig(step=0.5, n_sat=3)
        out = exploit_phase(oracle, QueryLedger(budget=50), obj, x,
                            [_unit(0), _unit(1), _unit(2)], SequenceSource([_unit(3)]), cfg)
        assert out.success
        assert out.fallback_engaged
        expected = -0.5 * _unit(0).data + 0.5 * _unit(3).data
        assert np.allclose(out.eta.data, expected)

    def test_minimal_n_sat_falls_back_after_first_dead_candidate(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        # n_sat=1: a commit after one failed probe must NOT trigger fallback,
        # a fully failed candidate must.
        oracle = ScriptedLossOracle(x, [1.0, 2.0, 0.9, 2.0, 2.0, 0.0])
        obj = _identity_objective(x, threshold=0.0)
        cfg = ExploitConfig(step=0.5, n_sat=1)
        out = exploit_phase(oracle, QueryLedger(budget=50), obj, x,
                            [_unit(0), _unit(1), _unit(2)], SequenceSource([_unit(3)]), cfg)
        assert out.success
        assert out.fallback_engaged
        expected = -0.5 * _unit(0).data + 0.5 * _unit(3).data
        assert np.allclose(out.eta.data, expected)

    def test_component_exhaustion_switches_to_pixel_basis(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        oracle = ScriptedLossOracle(x, [1.0, 0.9, 0.0])
        obj = _identity_objective(x, threshold=0.0)
        cfg = ExploitConfig(step=0.5, n_sat=20)
        out = exploit_phase(oracle, QueryLedger(budget=50), obj, x, [_unit(0)],
                            SequenceSource([_unit(3)]), cfg)
        assert out.success
        assert out.fallback_engaged
        expected = 0.5 * (_unit(0).data + _unit(3).data)
        assert np.allclose(out.eta.data, expected)

    def test_budget_exhaustion(self):
        x = zeros((1, 2, 2), (-10.0, 10.0))
        oracle = ScriptedLossOracle(x, [1.0, 2.0])
        obj = _identity_objective(x, threshold=0.0)
        out = exploit_phase(oracle, QueryLedger(budget=2), obj, x, [_unit(0)],
                            SequenceSource([_unit(3)]), ExploitConfig(step=0.5))
        assert not out.success
        assert out.queries_used == 2

    def test_empty_components_identical_to_plain_local_search(self):
        spec = SyntheticOracleSpec(
            "affine", (3, 6, 6), seed=6, params={"rank": 3, "offset_scale": 0.3}
        )
        oracle = make_synthetic_oracle(spec)
        for seed in range(20):
            gen = RngStream(700 + seed).generator()
            x = ImageTensor(gen.uniform(-0.5, 0.5, size=(3, 6, 6)).astype(np.float32))
            obj = _identity_objective(x, threshold=1e-3)

            ledger_a = QueryLedger(budget=300)
            out_a = exploit_phase(
                oracle, ledger_a, obj, x, [],
                PixelBasis((3, 6, 6), RngStream(900 + seed)),
                ExploitConfig(step=0.2, n_sat=20),
            )
            ledger_b = QueryLedger(budget=300)
            out_b = it_simba_attack(
                oracle, ledger_b, obj, x, SimbaConfig(step=0.2),
                PixelBasis((3, 6, 6), RngStream(900 + seed)),
            )
            assert out_a.queries_used == out_b.queries_used
            assert out_a.success == out_b.success
            assert np.array_equal(out_a.eta.data, out_b.eta.data)
            assert out_a.loss_trace == out_b.loss_trace
            assert out_a.fallback_engaged


class TestProjection:
    def test_known_values(self):
        assert project_total_queries(83952, 393, 100000) == 39383952
        assert project_total_queries(0, 551, 100000) == 55100000

    def test_trivial(self):
        assert project_total_queries(0, 0, 5) == 0
        assert project_total_queries(10, 2.5, 4) == 20

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            project_total_queries(-1, 1, 1)


class TestBundleIO:
    def test_round_trip(self, tmp_path, rng):
        samples = [_image(rng, dims=(3, 6, 6)) for _ in range(12)]
        comps, variances = extract_components(samples)
        bundle = tmp_path / "bundle"
        save_bundle(str(bundle), comps, variances, leak_queries=123, seed=9)
        loaded, manifest = load_bundle(str(bundle))
        assert manifest["count"] == len(comps)
        assert manifest["dims"] == [3, 6, 6]
        assert manifest["leak_queries"] == 123
        assert manifest["seed"] == 9
        assert manifest["source_attack"] == "it-simba"
        assert manifest["explained_variance"] == pytest.approx(variances)
        for a, b in zip(loaded, comps):
            assert np.array_equal(a.data, b.data)

    def test_empty_bundle_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            save_bundle(str(tmp_path / "b"), [], [], leak_queries=0, seed=0)

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_bundle(str(tmp_path))
