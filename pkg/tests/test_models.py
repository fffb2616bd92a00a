import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_matrix, random_feasible
from saddlesgd import data, models


def conjugate_grid_oracle(loss, alpha, i=0, lo=-60.0, hi=60.0):
    """sup_u (-alpha * u - l(u)) by coarse grid search plus one refinement
    pass around the coarse argmax — an independent check of the closed-form
    conjugate value at -alpha."""

    def objective(u):
        if loss.kind == models.HINGE:
            vals = np.maximum(0.0, 1.0 - u)
        elif loss.kind == models.LOGISTIC:
            vals = np.maximum(0.0, -u) + np.log1p(np.exp(-np.abs(u)))
        else:
            vals = 0.5 * (loss.targets[i] - u) ** 2
        return -alpha * u - vals

    coarse = np.linspace(lo, hi, 200_001)
    k = int(np.argmax(objective(coarse)))
    step = coarse[1] - coarse[0]
    fine = np.linspace(coarse[k] - 2 * step, coarse[k] + 2 * step, 100_001)
    return float(max(objective(coarse).max(), objective(fine).max()))


class TestLossValues:
    def test_hinge_at_zero(self):
        assert models.LossModel(models.HINGE).value(0.0) == 1.0

    def test_logistic_at_zero(self):
        assert models.LossModel(models.LOGISTIC).value(0.0) == pytest.approx(math.log(2))

    def test_squared(self):
        loss = models.LossModel(models.SQUARED, targets=np.array([2.0]))
        assert loss.value(0.5, 0) == pytest.approx(1.125)

    def test_vectorized_matches_scalar(self):
        u = np.linspace(-3, 3, 13)
        targets = np.arange(13, dtype=float) / 7.0
        for kind in (models.HINGE, models.LOGISTIC):
            loss = models.LossModel(kind)
            np.testing.assert_allclose(
                loss.values(u), [loss.value(x) for x in u], rtol=1e-14
            )
            np.testing.assert_allclose(
                loss.grads(u), [loss.grad(x) for x in u], rtol=1e-14
            )
        loss = models.LossModel(models.SQUARED, targets=targets)
        np.testing.assert_allclose(
            loss.values(u), [loss.value(x, i) for i, x in enumerate(u)], rtol=1e-14
        )


class TestConjugates:
    def test_hinge_example(self):
        loss = models.LossModel(models.HINGE)
        assert loss.conjugate(0.3) == pytest.approx(-0.3)
        assert loss.conjugate(0.3) == pytest.approx(
            conjugate_grid_oracle(loss, 0.3), abs=1e-6
        )

    def test_logistic_example(self):
        loss = models.LossModel(models.LOGISTIC)
        assert loss.conjugate(0.5) == pytest.approx(math.log(0.5))
        assert loss.conjugate(0.5) == pytest.approx(
            conjugate_grid_oracle(loss, 0.5), abs=1e-6
        )

    def test_out_of_interval_raises(self):
        with pytest.raises(models.DomainError):
            models.LossModel(models.HINGE).conjugate(1.5)
        with pytest.raises(models.DomainError):
            models.LossModel(models.HINGE).conjugate(-0.1)

    @pytest.mark.parametrize("alpha", np.linspace(0.02, 0.98, 25).tolist())
    def test_hinge_matches_grid_oracle(self, alpha):
        loss = models.LossModel(models.HINGE)
        assert loss.conjugate(alpha) == pytest.approx(
            conjugate_grid_oracle(loss, alpha), abs=1e-6
        )

    @pytest.mark.parametrize("alpha", np.linspace(0.05, 0.95, 19).tolist())
    def test_logistic_matches_grid_oracle(self, alpha):
        loss = models.LossModel(models.LOGISTIC)
        assert loss.conjugate(alpha) == pytest.approx(
            conjugate_grid_oracle(loss, alpha), abs=1e-6
        )

    @pytest.mark.parametrize("alpha", np.linspace(-3.0, 3.0, 13).tolist())
    def test_squared_matches_grid_oracle(self, alpha):
        loss = models.LossModel(models.SQUARED, targets=np.array([1.7]))
        assert loss.conjugate(alpha, 0) == pytest.approx(
            conjugate_grid_oracle(loss, alpha), abs=1e-6
        )

    def test_vectorized_matches_scalar(self):
        loss = models.LossModel(models.LOGISTIC)
        a = np.linspace(0.01, 0.99, 21)
        np.testing.assert_allclose(
            loss.conjugates(a), [loss.conjugate(x) for x in a], rtol=1e-14
        )


class TestConjugateGradients:
    def test_logistic_midpoint(self):
        assert models.LossModel(models.LOGISTIC).conjugate_grad(0.5) == 0.0

    def test_logistic_at_point_nine(self):
        assert models.LossModel(models.LOGISTIC).conjugate_grad(0.9) == pytest.approx(
            math.log(1.0 / 9.0)
        )

    def test_squared(self):
        loss = models.LossModel(models.SQUARED, targets=np.array([1.0]))
        assert loss.conjugate_grad(0.25, 0) == pytest.approx(0.75)

    @pytest.mark.parametrize(
        "kind,points",
        [
            (models.HINGE, np.linspace(0.05, 0.95, 15)),
            (models.LOGISTIC, np.linspace(0.05, 0.95, 15)),
            (models.SQUARED, np.linspace(-3.0, 3.0, 15)),
        ],
    )
    def test_matches_finite_differences(self, kind, points):
        targets = np.array([0.4]) if kind == models.SQUARED else None
        loss = models.LossModel(kind, targets=targets)
        h = 1e-6
        for a in points:
            fd = (loss.conjugate(a + h, 0) - loss.conjugate(a - h, 0)) / (2 * h)
            # d/d(alpha) lstar(-alpha) = -lstar'(-alpha)
            got = -loss.conjugate_grad(float(a), 0)
            assert got == pytest.approx(fd, rel=1e-5, abs=1e-7)


class TestRegularizers:
    def test_l2(self):
        reg = models.RegularizerModel(models.L2, w_bound=5.0)
        assert reg.value(2.0) == 2.0
        assert reg.grad(2.0) == 2.0

    def test_l1(self):
        reg = models.RegularizerModel(models.L1, w_bound=5.0)
        assert reg.value(-0.5) == 0.5
        assert reg.grad(-0.5) == -1.0
        assert reg.grad(0.0) == 0.0

    def test_default_bounds(self):
        lam = 0.04
        assert models.default_w_bound(models.HINGE, models.L2, lam) == pytest.approx(5.0)
        assert models.default_w_bound(models.LOGISTIC, models.L2, lam) == pytest.approx(
            math.sqrt(math.log(2.0) / lam)
        )
        assert models.default_w_bound(models.SQUARED, models.L1, lam) == pytest.approx(5.0)


class TestObjectives:
    def test_primal_at_zero_is_one(self, tiny4x3_folded):
        params = models.make_params(tiny4x3_folded, 0.1)
        assert models.primal_objective(params, np.zeros(3)) == 1.0

    def test_primal_squared_at_zero(self):
        ds = data.parse_libsvm("2 1:1.0\n-1 2:1.0\n0.5 1:0.5", task="regression")
        params = models.make_params(ds, 0.1, models.SQUARED, models.L1)
        y = ds.labels
        assert models.primal_objective(params, np.zeros(ds.d)) == pytest.approx(
            0.5 * np.mean(y * y)
        )

    def test_primal_matches_dense_evaluation(self, tiny4x3_folded):
        params = models.make_params(tiny4x3_folded, 0.1)
        w = np.array([0.1, -0.2, 0.0])
        x = dense_matrix(tiny4x3_folded)
        expected = 0.1 * 0.5 * float(w @ w) + float(
            np.mean(np.maximum(0.0, 1.0 - x @ w))
        )
        assert models.primal_objective(params, w) == pytest.approx(expected, rel=1e-12)

    def test_dual_at_zero_alpha_is_zero(self, tiny4x3_folded):
        params = models.make_params(tiny4x3_folded, 0.1)
        assert models.dual_objective(params, np.zeros(4)) == pytest.approx(0.0)

    def test_scalar_problem_dual_value(self, one_by_one):
        params = models.make_params(one_by_one, 1.0)
        # alpha=1: minimizing 0.5 w^2 - w + 1 over the box gives w*=1, value 0.5
        assert models.dual_objective(params, np.array([1.0])) == pytest.approx(0.5)

    def test_dual_closed_form_is_the_true_minimum(self, tiny4x3_folded):
        rng = np.random.default_rng(17)
        for reg_kind in (models.L2, models.L1):
            params = models.make_params(tiny4x3_folded, 0.3, reg_kind=reg_kind)
            _, alpha = random_feasible(params, rng)
            d_val = models.dual_objective(params, alpha)
            lo, hi = params.reg.w_box
            for _ in range(200):
                w = rng.uniform(lo, hi, size=tiny4x3_folded.d)
                assert models.saddle_value(params, w, alpha) >= d_val - 1e-12

    def test_weak_duality_random_pairs(self, tiny4x3_folded):
        rng = np.random.default_rng(3)
        for loss_kind in (models.HINGE, models.LOGISTIC):
            params = models.make_params(tiny4x3_folded, 0.2, loss_kind=loss_kind)
            for _ in range(100):
                w, alpha = random_feasible(params, rng)
                assert models.duality_gap(params, w, alpha) >= 0.0

    def test_gap_at_origin(self, tiny4x3_folded):
        params = models.make_params(tiny4x3_folded, 0.1)
        gap = models.duality_gap(params, np.zeros(3), np.zeros(4))
        assert gap == pytest.approx(1.0)

    def test_gap_zero_at_scalar_saddle(self, one_by_one):
        params = models.make_params(one_by_one, 1.0)
        # stationarity: w = alpha * x / (lam * m) and the hinge subgradient
        # interval at margin 1 contains alpha = 1
        gap = models.duality_gap(params, np.array([1.0]), np.array([1.0]))
        assert abs(gap) <= 1e-9


class TestGradients:
    def test_scalar_stochastic_gradient(self, one_by_one):
        params = models.make_params(one_by_one, 1.0)
        gw, ga = models.stochastic_gradient(
            params, np.array([0.0]), np.array([1.0]), 0, 0
        )
        assert gw == pytest.approx(-1.0)
        assert ga == pytest.approx(1.0)

    def test_balanced_point_zeroes_primal_component(self, one_by_one):
        params = models.make_params(one_by_one, 1.0)
        # lam * w / col_nnz == alpha * x / m exactly when w == alpha here
        gw, _ = models.stochastic_gradient(
            params, np.array([0.7]), np.array([0.7]), 0, 0
        )
        assert gw == pytest.approx(0.0)

    def test_off_support_raises(self, tiny4x3_folded):
        params = models.make_params(tiny4x3_folded, 0.1)
        with pytest.raises(models.IndexNotInSupportError):
            models.stochastic_gradient(params, np.zeros(3), np.zeros(4), 1, 0)

    @pytest.mark.parametrize("loss_kind", [models.HINGE, models.LOGISTIC])
    @pytest.mark.parametrize("reg_kind", [models.L2, models.L1])
    def test_unbiased_over_support(self, tiny4x3_folded, loss_kind, reg_kind):
        params = models.make_params(tiny4x3_folded, 0.25, loss_kind, reg_kind)
        ds = tiny4x3_folded
        rng = np.random.default_rng(9)
        for _ in range(20):
            w, alpha = random_feasible(params, rng)
            gw_sum = np.zeros(ds.d)
            ga_sum = np.zeros(ds.m)
            for i in range(ds.m):
                cols, _ = ds.row(i)
                for j in cols.tolist():
                    gw, ga = models.stochastic_gradient(params, w, alpha, i, j)
                    gw_sum[j] += gw
                    ga_sum[i] += ga
            exact_w, exact_a = models.saddle_gradient(params, w, alpha)
            np.testing.assert_allclose(gw_sum / ds.nnz_total, exact_w, atol=1e-12)
            np.testing.assert_allclose(ga_sum / ds.nnz_total, exact_a, atol=1e-12)

    def test_batch_gradient_hinge_at_zero(self, tiny4x3_folded):
        ds = tiny4x3_folded
        params = models.make_params(ds, 0.1)
        x = dense_matrix(ds)
        np.testing.assert_allclose(
            models.batch_gradient(params, np.zeros(ds.d)),
            -x.mean(axis=0),
            atol=1e-14,
        )

    def test_batch_gradient_logistic_at_zero(self, tiny4x3_folded):
        ds = tiny4x3_folded
        params = models.make_params(ds, 0.1, models.LOGISTIC)
        x = dense_matrix(ds)
        np.testing.assert_allclose(
            models.batch_gradient(params, np.zeros(ds.d)),
            -0.5 * x.mean(axis=0),
            atol=1e-14,
        )

    def test_batch_gradient_finite_differences(self, tiny4x3_folded):
        params = models.make_params(tiny4x3_folded, 0.1, models.LOGISTIC)
        rng = np.random.default_rng(5)
        w = rng.standard_normal(3) * 0.3
        g = models.batch_gradient(params, w)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (
                models.primal_objective(params, w + e)
                - models.primal_objective(params, w - e)
            ) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


@settings(max_examples=50, deadline=None)
@given(
    alpha=st.floats(0.01, 0.99),
    kind=st.sampled_from([models.HINGE, models.LOGISTIC]),
)
def test_conjugate_grad_consistent_with_value(alpha, kind):
    loss = models.LossModel(kind)
    h = 1e-6
    a0 = min(max(alpha, 2 * h), 1.0 - 2 * h)
    fd = (loss.conjugate(a0 + h) - loss.conjugate(a0 - h)) / (2 * h)
    assert -loss.conjugate_grad(a0) == pytest.approx(fd, rel=1e-4, abs=1e-6)
