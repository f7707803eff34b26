#include "doctest.h"

#include "gaplab/semiclassical_fd.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

using namespace gaplab;
using namespace gaplab::semiclassical;

namespace {

// Independent oracle: dense tridiagonal Dirichlet Schrodinger operator, plain Eigen solve.
double dense_quartic_gap(double lambda, int n) {
    const double L = 1.2, h = 2 * L / (n + 1);
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const double x = -L + (i + 1) * h;
        const double g = x + x * x * x, lap = 1 + 3 * x * x;
        a(i, i) = 2 / (h * h) + 0.25 * lambda * lambda * g * g - 0.5 * lambda * lap;
        if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -1 / (h * h);
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(1) - es.eigenvalues()(0);
}

double trapezoid_laplace_quartic(double lambda) {
    const int n = 200000;
    const double L = 2.0, h = 2 * L / n;
    double z = 0;
    for (int i = 0; i <= n; ++i) {
        const double x = -L + i * h, e = 0.5 * x * x + 0.25 * x * x * x * x;
        z += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(-lambda * e);
    }
    return z * h * std::sqrt(lambda / (2 * M_PI));
}

}  // namespace

TEST_CASE("presets and validation") {
    auto q = WeightedPotential::quartic();
    Vec x = Vec::Constant(1, 0.7);
    CHECK(q.E(x) == doctest::Approx(0.5 * 0.49 + 0.25 * 0.2401));
    CHECK(q.grad(x)(0) == doctest::Approx(0.7 + 0.343));
    auto p = WeightedPotential::polynomial({0, 0, 0.5, 0, 0.25});
    CHECK(p.E(x) == doctest::Approx(q.E(x)));
    CHECK(p.grad(x)(0) == doctest::Approx(q.grad(x)(0)));
    CHECK(p.hess(x)(0, 0) == doctest::Approx(q.hess(x)(0, 0)));
    CHECK(p.sigma1() == doctest::Approx(1.0));
    CHECK(WeightedPotential::aniso({1, 4}).sigma1() == doctest::Approx(1.0));
    CHECK_THROWS_AS(WeightedPotential::polynomial({1, 0, 1}), InvalidInput);
    CHECK_THROWS_AS(WeightedPotential::polynomial({0, 0, -1}), InvalidInput);
    CHECK_THROWS_AS(WeightedPotential::aniso({1, -1}), InvalidInput);
    CHECK_THROWS_AS(WeightedPotential::from_json({{"preset", "double_well"}}), InvalidInput);
    auto j = WeightedPotential::from_json({{"preset", "aniso"}, {"diag", {1.0, 4.0}}});
    CHECK(j.N == 2);
    // a double well has a second zero, so E > 0 away from 0 fails
    auto dw = WeightedPotential::polynomial({0, 0, 1, -2, 1});  // x^2 (1 - x)^2
    CHECK_THROWS_AS(dw.validate(2.0), InvalidInput);
}

TEST_CASE("auto box meets the boundary energy target") {
    auto p = WeightedPotential::ou(1);
    const double L = auto_box(p, 10.0);
    CHECK(10.0 * p.E(Vec::Constant(1, L)) == doctest::Approx(36.0).epsilon(1e-9));
    CHECK(tail_mass(p, 10.0, L) < 1e-8);
}

TEST_CASE("OU gap equals lambda") {
    for (double l : {1.0, 10.0, 100.0}) {
        auto r = spectral_gap(WeightedPotential::ou(1), l);
        CHECK(r.e2_over_lambda == doctest::Approx(1.0).epsilon(1e-3));
        CHECK(std::abs(r.e1) < 1e-8 * l);
        CHECK(r.realization_gap < 5e-3);
        CHECK(r.outside_mass < 1e-8);
    }
    auto r2 = spectral_gap(WeightedPotential::ou(2), 10.0);
    CHECK(r2.e2_over_lambda == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("quartic gap against a dense oracle") {
    auto q = WeightedPotential::quartic();
    auto r = spectral_gap(q, 100.0);
    const double oracle = dense_quartic_gap(100.0, 1500);
    CHECK(r.e2 == doctest::Approx(oracle).epsilon(2e-3));
    CHECK(std::abs(r.e2_over_lambda - 1.0) < 0.1);
    auto a = gap_asymptotics(q, {10.0, 30.0, 100.0});
    CHECK(a.rows[0].e2_over_lambda > a.rows[1].e2_over_lambda);
    CHECK(a.rows[1].e2_over_lambda > a.rows[2].e2_over_lambda);
    CHECK(a.rows[2].e2_over_lambda > 1.0);
    CHECK(std::abs(a.extrapolated - 1.0) < std::abs(a.rows[2].e2_over_lambda - 1.0));
    CHECK_THROWS_AS(gap_asymptotics(q, {10.0, 30.0}), InvalidInput);
    CHECK_THROWS_AS(gap_asymptotics(q, {30.0, 10.0, 100.0}), InvalidInput);
}

TEST_CASE("h halving and realization agreement") {
    auto q = WeightedPotential::quartic();
    GapOptions fine;
    fine.cells = 1024;
    auto a = spectral_gap(q, 100.0), b = spectral_gap(q, 100.0, fine);
    CHECK(std::abs(a.e2 - b.e2) / b.e2 < 5e-3);
    auto an = WeightedPotential::aniso({1, 4});
    auto r = spectral_gap(an, 50.0);
    CHECK(std::abs(r.e2_over_lambda - 1.0) < 0.05);
    CHECK(r.realization_gap < 5e-3);
}

TEST_CASE("box too small is rejected") {
    GapOptions o;
    o.L = 0.3;
    CHECK_THROWS_AS(spectral_gap(WeightedPotential::ou(1), 10.0, o), InvalidInput);
    CHECK_THROWS_AS(spectral_gap(WeightedPotential::ou(1), -1.0), InvalidInput);
}

TEST_CASE("laplace constant") {
    CHECK(laplace_constant(WeightedPotential::ou(1), 10.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(laplace_constant(WeightedPotential::ou(2), 10.0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(laplace_constant(WeightedPotential::aniso({1, 4}), 100.0) == doctest::Approx(0.5).epsilon(1e-8));
    const double q = laplace_constant(WeightedPotential::quartic(), 100.0);
    CHECK(q == doctest::Approx(trapezoid_laplace_quartic(100.0)).epsilon(1e-6));
    CHECK(std::abs(q - 1.0) < 0.02);
}

TEST_CASE("tail mass") {
    auto p = WeightedPotential::ou(1);
    CHECK(tail_mass(p, 10.0, 2.0) == doctest::Approx(std::erfc(2.0 * std::sqrt(5.0))).epsilon(1e-6));
    CHECK(tail_mass(p, 10.0, 0.0) == doctest::Approx(1.0));
    CHECK(tail_mass(p, 10.0, 1e-6) == doctest::Approx(1.0).epsilon(1e-5));
    auto p2 = WeightedPotential::ou(2);
    CHECK(tail_mass(p2, 10.0, 1.0) == doctest::Approx(std::exp(-5.0)).epsilon(1e-7));
    auto q = WeightedPotential::quartic();
    const double slope = tail_decay_rate(q, {20.0, 40.0, 80.0}, 1.0);
    CHECK(slope >= min_on_sphere(q, 1.0) * 0.95);
    CHECK(slope <= min_on_sphere(q, 1.0) * 1.05);
}

TEST_CASE("GNS inequality") {
    auto p = WeightedPotential::ou(1);
    auto fam = hermite_family(p, 10.0);
    auto eq = gns_check(p, 10.0, [](const Vec&) { return 0.7; }, {constant_function(1.0)});
    CHECK(eq.C == doctest::Approx(2.0));
    CHECK(eq.c_sigma_ge_2);
    CHECK(eq.rows[0].lhs == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(eq.rows[0].rhs == doctest::Approx(0.7).epsilon(1e-10));
    auto zero = gns_check(p, 10.0, [](const Vec&) { return 0.0; }, fam);
    for (const auto& r : zero.rows) {
        CHECK(std::abs(r.rhs) < 1e-12);
        CHECK(r.lhs >= 0.0);
    }
    for (auto pot : {WeightedPotential::ou(1), WeightedPotential::quartic(), WeightedPotential::aniso({1, 4})}) {
        const double l = 10.0;
        const double L = auto_box(pot, l);
        auto family = hermite_family(pot, l, pot.N == 1 ? 3 : 2);
        int bad = 0;
        for (const auto& V : random_bounded_potentials(pot.N, L, 20, 7)) {
            auto g = gns_check(pot, l, V, family);
            REQUIRE_FALSE(g.skipped);
            for (const auto& r : g.rows) bad += r.lhs < r.rhs - 1e-10;
        }
        CHECK(bad == 0);
    }
}

TEST_CASE("GNS skips when the Hessian is not positive on the box") {
    auto p = WeightedPotential::polynomial({0, 0, 0.5, 0, -0.3, 0, 0.1});
    p.L = 3.0;
    auto g = gns_check(p, 10.0, [](const Vec&) { return 0.0; }, {constant_function(1.0)});
    CHECK(g.skipped);
}

TEST_CASE("IMS localization") {
    auto p = WeightedPotential::ou(1);
    auto fam = hermite_family(p, 10.0);
    auto trivial = ims_check(fam[2], ChiPair{0.0}, p, 10.0);
    CHECK(trivial.residual < 1e-12);
    CHECK(trivial.cross_term == 0.0);
    auto a = ims_check(fam[2], ChiPair{0.3}, p, 10.0);
    auto b = ims_check(fam[2], ChiPair{0.15}, p, 10.0);
    CHECK(a.residual < 1e-6);
    CHECK(b.residual < 1e-6);
    CHECK(b.cross_sup / a.cross_sup == doctest::Approx(4.0));
    // integrated cross term scales like kappa^(N-2); in 1D with a flat density that is a factor 2
    auto c = ims_check(constant_function(1.0), ChiPair{0.01}, p, 10.0);
    auto d = ims_check(constant_function(1.0), ChiPair{0.005}, p, 10.0);
    CHECK(d.cross_term / c.cross_term == doctest::Approx(2.0).epsilon(0.01));
    auto p2 = WeightedPotential::aniso({1, 4});
    auto f2 = hermite_family(p2, 10.0, 2);
    CHECK(ims_check(f2[1], ChiPair{0.2}, p2, 10.0).residual < 1e-6);
}

TEST_CASE("trial upper bound") {
    auto ou = trial_upper_bound(WeightedPotential::ou(1), 10.0);
    CHECK(ou.quotient == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(std::abs(ou.mean) < 1e-10);
    CHECK(ou.norm == doctest::Approx(1.0).epsilon(1e-8));
    auto q = trial_upper_bound(WeightedPotential::quartic(), 100.0);
    CHECK(std::abs(q.quotient - 1.0) < 0.05);
    auto an = trial_upper_bound(WeightedPotential::aniso({1, 4}), 100.0);
    CHECK(std::abs(an.v(0)) == doctest::Approx(1.0));
    CHECK(an.quotient == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gap CSV row") {
    auto p = WeightedPotential::ou(1);
    auto r = spectral_gap(p, 10.0);
    const std::string row = gap_csv_row(p, r);
    CHECK(row.rfind("ou,1,10,", 0) == 0);
    const std::string head = gap_csv_header();
    CHECK(std::count(row.begin(), row.end(), ',') == std::count(head.begin(), head.end(), ','));
}
