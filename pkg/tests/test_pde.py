import mpmath as mp
import numpy as np
import pytest

from pikan import approximator as ap
from pikan import autodiff as ad
from pikan import burgers_fd, pde
from pikan.autodiff import Jet2, Tape

PI = np.pi


def fd2(f, x, t, h=1e-4):
    """u_tt - u_xx by central second differences."""
    return ((f(x, t + h) - 2 * f(x, t) + f(x, t - h)) - (f(x + h, t) - 2 * f(x, t) + f(x - h, t))) / h ** 2


def const_jet(tape, X, c):
    return Jet2.constant(tape, np.full(len(X), float(c)))


class ExactNet:
    """Stands in for a network: returns the problem's closed-form jet."""

    def __init__(self, problem):
        self.problem = problem

    def register(self, tape):
        return {}

    def forward(self, X, tape, jet=True, params=None):
        u = self.problem.exact_jet(tape, X)
        return u if jet else u.v


class TestKleinGordon:
    def test_exact_values(self):
        assert pde.kg_exact(1.0, 0.0) == 1.0
        np.testing.assert_array_equal(pde.kg_exact(0.0, np.linspace(0, 1, 5)), 0.0)
        assert abs(pde.kg_exact(1.0, 1.0)) < 1e-15

    def test_forcing_special_lines(self):
        t = np.linspace(0, 1, 7)
        np.testing.assert_array_equal(pde.kg_forcing(0.0, t), 0.0)
        x = np.linspace(0, 1, 7)
        np.testing.assert_allclose(pde.kg_forcing(x, 0.0), -25 * PI ** 2 * x + x ** 3,
                                   rtol=1e-14)

    def test_forcing_against_differences(self):
        rng = np.random.default_rng(0)
        x, t = rng.uniform(0.05, 0.95, (2, 100))
        fd = fd2(pde.kg_exact, x, t) + pde.kg_exact(x, t) ** 3
        assert np.max(np.abs(fd - pde.kg_forcing(x, t))) / np.max(np.abs(fd)) < 1e-5

    def test_forcing_at_centre_high_precision_differences(self):
        # f(0.5, 0.5) is ~4e-6, far below the fp64 rounding noise of a 1e-4 stencil,
        # so the same stencil is evaluated with 40 digits
        mp.mp.dps = 40

        def u(x, t):
            return x * mp.cos(5 * mp.pi * t) + (x * t) ** 3

        x = t = mp.mpf("0.5")
        h = mp.mpf("1e-4")
        fd = ((u(x, t + h) - 2 * u(x, t) + u(x, t - h))
              - (u(x + h, t) - 2 * u(x, t) + u(x - h, t))) / h ** 2 + u(x, t) ** 3
        assert abs(float(fd) - pde.kg_forcing(0.5, 0.5)) / abs(float(fd)) < 1e-5

    def test_velocity_against_differences(self):
        x, t = 0.7, 0.3
        fd = (pde.kg_exact(x, t + 1e-6) - pde.kg_exact(x, t - 1e-6)) / 2e-6
        assert pde.kg_velocity(x, t) == pytest.approx(fd, rel=1e-8)

    def test_exact_residual(self):
        P = pde.KleinGordon()
        X = np.random.default_rng(1).random((100, 2))
        r = P.residual(P.exact_jet(Tape(), X), X)
        assert np.max(np.abs(r.value)) < 1e-6

    def test_zero_and_constant_networks(self):
        X = np.random.default_rng(2).random((10, 2))
        f = pde.kg_forcing(X[:, 0], X[:, 1])
        tape = Tape()
        np.testing.assert_allclose(pde.kg_residual(const_jet(tape, X, 0), X[:, 0], X[:, 1]).value,
                                   -f)
        np.testing.assert_allclose(pde.kg_residual(const_jet(tape, X, 1), X[:, 0], X[:, 1]).value,
                                   1 - f)


class TestBurgers:
    def test_residual_examples(self):
        tape = Tape()
        X = np.random.default_rng(3).uniform(-1, 1, (8, 2))
        nu = pde.BURGERS_NU
        assert np.all(pde.burgers_residual(const_jet(tape, X, 2.5), nu).value == 0)
        u = ad.jet_eval(lambda x, t: x, X, tape)
        np.testing.assert_allclose(pde.burgers_residual(u, nu).value, X[:, 0])
        u = ad.jet_eval(lambda x, t: ad.jet_sin(x), X, tape)
        x = X[:, 0]
        np.testing.assert_allclose(pde.burgers_residual(u, nu).value,
                                   np.sin(x) * np.cos(x) + nu * np.sin(x), rtol=1e-13)

    def test_reference_initial_condition(self):
        x = np.linspace(-1, 1, 33)
        np.testing.assert_allclose(pde.burgers_reference(x, 0.0), -np.sin(PI * x), atol=1e-6)

    def test_reference_odd_symmetry(self):
        t = np.linspace(0.0, 1.0, 11)
        assert np.max(np.abs(pde.burgers_reference(0.0, t))) < 1e-12
        x = np.linspace(0.1, 0.9, 9)
        np.testing.assert_allclose(pde.burgers_reference(-x, 0.4), -pde.burgers_reference(x, 0.4),
                                   atol=1e-12)

    def test_reference_needs_enough_nodes(self):
        with pytest.raises(ValueError):
            pde.burgers_reference(0.1, 0.1, nodes=50)

    def test_reference_quadrature_converged(self):
        X, _ = pde.Burgers().eval_grid((64, 20))
        a = pde.burgers_reference(X[:, 0], X[:, 1], nodes=128)
        b = pde.burgers_reference(X[:, 0], X[:, 1], nodes=512)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_reference_satisfies_pde(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(-0.9, 0.9, 100)
        t = rng.uniform(0.1, 1.0, 100)
        # keep away from the steep front at x = 0
        x = np.where(np.abs(x) < 0.1, x + 0.2 * np.sign(x + 1e-12), x)
        h = 1e-4
        u = pde.burgers_reference
        ut = (u(x, t + h) - u(x, t - h)) / (2 * h)
        ux = (u(x + h, t) - u(x - h, t)) / (2 * h)
        uxx = (u(x + h, t) - 2 * u(x, t) + u(x - h, t)) / h ** 2
        r = ut + u(x, t) * ux - pde.BURGERS_NU * uxx
        assert np.max(np.abs(r)) < 1e-3

    @pytest.mark.slow
    def test_reference_agrees_with_crank_nicolson(self):
        X, (nx, nt) = pde.Burgers().eval_grid((256, 100))
        ref = pde.burgers_reference(X[:, 0], X[:, 1]).reshape(nx, nt)
        fd = burgers_fd.solve_burgers(np.linspace(-1, 1, nx), np.linspace(0, 1, nt),
                                      pde.BURGERS_NU)
        assert np.linalg.norm(ref - fd) / np.linalg.norm(fd) < 1e-3

    def test_crank_nicolson_coarse_sanity(self):
        x = np.linspace(-1, 1, 41)
        out = burgers_fd.solve_burgers(x, [0.0, 0.1], 0.05, cells=256, dt_max=1e-3)
        np.testing.assert_allclose(out[:, 0], -np.sin(PI * x), atol=1e-12)
        assert out[0, 1] == 0.0 and out[-1, 1] == 0.0
        ref = pde.burgers_reference(x, 0.1, nu=0.05)
        assert np.max(np.abs(out[:, 1] - ref)) < 1e-3

    def test_reference_cache(self, tmp_path):
        P = pde.Burgers(cache_dir=tmp_path)
        X, u = P.reference((16, 5))
        files = list(tmp_path.iterdir())
        assert len(files) == 1
        X2, u2 = pde.Burgers(cache_dir=tmp_path).reference((16, 5))
        np.testing.assert_array_equal(u, u2)
        # a different viscosity never reuses the file
        pde.Burgers(nu=0.02, cache_dir=tmp_path).reference((16, 5))
        assert len(list(tmp_path.iterdir())) == 2


class TestHelmholtz:
    def test_exact_values(self):
        assert pde.helmholtz_exact(0.5, 0.125) == pytest.approx(1.0)
        assert abs(pde.helmholtz_exact(0.5, 0.5)) < 1e-15
        edge = np.linspace(-1, 1, 9)
        for x, y in [(edge, -1.0), (edge, 1.0), (-1.0, edge), (1.0, edge)]:
            assert np.max(np.abs(pde.helmholtz_exact(x, y))) < 1e-14

    def test_forcing(self):
        assert pde.helmholtz_forcing(0.5, 0.125) == pytest.approx(1 - 17 * PI ** 2)
        rng = np.random.default_rng(5)
        x, y = rng.uniform(-1, 1, (2, 100))
        ratio = pde.helmholtz_forcing(x, y) / pde.helmholtz_exact(x, y)
        np.testing.assert_allclose(ratio, 1 - 17 * PI ** 2, rtol=1e-12)
        assert ratio[0] == pytest.approx(-166.78, abs=1e-2)

    def test_forcing_against_differences(self):
        rng = np.random.default_rng(6)
        x, y = rng.uniform(-1, 1, (2, 100))
        h = 1e-4
        u = pde.helmholtz_exact
        lap = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h ** 2
        q = lap + u(x, y)
        assert np.max(np.abs(q - pde.helmholtz_forcing(x, y))) / np.max(np.abs(q)) < 1e-5

    def test_exact_residual(self):
        P = pde.Helmholtz()
        X = np.random.default_rng(7).uniform(-1, 1, (100, 2))
        assert np.max(np.abs(P.residual(P.exact_jet(Tape(), X), X).value)) < 1e-6

    def test_simple_residuals(self):
        X = np.random.default_rng(8).uniform(-1, 1, (10, 2))
        tape = Tape()
        q = pde.helmholtz_forcing(X[:, 0], X[:, 1])
        np.testing.assert_allclose(
            pde.helmholtz_residual(const_jet(tape, X, 0), X[:, 0], X[:, 1]).value, -q)
        u = ad.jet_eval(lambda x, y: x * x, X, tape)
        r = u.dxx + u.dyy + u.v
        np.testing.assert_allclose(r.value, 2 + X[:, 0] ** 2)


class TestSampling:
    def test_helmholtz_counts_and_edges(self):
        b = pde.Helmholtz().sample_batch({"n_r": 5000, "n_bc": 400}, seed=0)
        assert b.interior.shape == (5000, 2)
        assert np.all(np.abs(b.interior) <= 1.0)
        B = b.boundary
        assert B.shape == (400, 2)
        edges = [B[:, 0] == -1, B[:, 0] == 1, B[:, 1] == -1, B[:, 1] == 1]
        assert [int(e.sum()) for e in edges] == [100, 100, 100, 100]
        assert b.initial is None
        np.testing.assert_array_equal(b.bc_target, 0.0)

    def test_transient_sets(self):
        P = pde.KleinGordon()
        b = P.sample_batch({"n_r": 50, "n_bc": 21, "n_ic": 13}, seed=1)
        assert b.boundary.shape == (21, 2)
        assert set(np.unique(b.boundary[:, 0])) == {0.0, 1.0}
        assert np.all(b.initial[:, 1] == 0.0)
        np.testing.assert_array_equal(b.ic_target, b.initial[:, 0])
        np.testing.assert_allclose(b.ic_velocity, 0.0, atol=1e-15)
        np.testing.assert_allclose(b.bc_target, pde.kg_exact(*b.boundary.T))

    def test_deterministic(self):
        P = pde.Burgers()
        a, b = P.sample_batch(seed=5), P.sample_batch(seed=5)
        for f in ("interior", "boundary", "initial", "ic_target"):
            np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
        assert not np.array_equal(a.interior, P.sample_batch(seed=6).interior)

    def test_invalid_counts(self):
        with pytest.raises(ValueError):
            pde.Helmholtz().sample_batch({"n_r": 0})

    def test_eval_grids(self):
        X, shape = pde.Helmholtz().eval_grid()
        assert shape == (256, 256) and X.shape == (65536, 2)
        X, shape = pde.KleinGordon().eval_grid()
        assert shape == (256, 100)
        assert X[0].tolist() == [0.0, 0.0] and X[-1].tolist() == [1.0, 1.0]


class TestLossTerms:
    @pytest.mark.parametrize("name", ["klein_gordon", "helmholtz"])
    def test_exact_solution_has_tiny_losses(self, name):
        P = pde.get_problem(name)
        b = P.sample_batch({"n_r": 200, "n_bc": 40, "n_ic": 40}, seed=2)
        out = P.loss_terms(ExactNet(P), b)
        assert set(out) == set(P.tasks)
        for v in out.values():
            assert float(v.value) < 1e-10

    def test_zero_network_on_helmholtz(self):
        P = pde.Helmholtz()
        net = ap.build_network("mlp", [2, 3, 1])
        b = P.sample_batch({"n_r": 300, "n_bc": 40}, seed=3)
        out = P.loss_terms(net, b)
        assert float(out["bc"].value) == 0.0
        q = pde.helmholtz_forcing(*b.interior.T)
        assert float(out["r"].value) == pytest.approx(np.mean(q ** 2), rel=1e-14)

    def test_duplicated_points_leave_mean_unchanged(self):
        P = pde.Burgers()
        net = ap.init_params(ap.build_network("kan", [2, 3, 1], 4, 4, P.lo, P.hi), 0)
        b = P.sample_batch({"n_r": 64, "n_bc": 8, "n_ic": 8}, seed=4)
        L1 = float(P.loss_terms(net, b)["r"].value)
        b.interior = np.concatenate([b.interior, b.interior])
        L2 = float(P.loss_terms(net, b)["r"].value)
        assert L2 == pytest.approx(L1, rel=1e-13)

    def test_kg_initial_loss_includes_velocity(self):
        P = pde.KleinGordon()
        b = P.sample_batch({"n_r": 10, "n_bc": 4, "n_ic": 6}, seed=5)

        class Linear:
            def register(self, tape):
                return {}

            def forward(self, X, tape, jet=True, params=None):
                # u = x + t: matches h(x) = x, but u_t = 1 instead of 0
                u = ad.jet_eval(lambda x, t: x + t, X, tape)
                return u if jet else u.v

        out = P.loss_terms(Linear(), b)
        assert float(out["ic"].value) == pytest.approx(1.0)

    def test_unknown_problem(self):
        with pytest.raises(ValueError):
            pde.get_problem("navier_stokes")
        assert isinstance(pde.get_problem("KG"), pde.KleinGordon)

    def test_empty_batch(self):
        with pytest.raises(ValueError, match="empty"):
            pde.PointBatch(np.zeros((0, 2)), np.zeros((3, 2)), np.zeros(3))
