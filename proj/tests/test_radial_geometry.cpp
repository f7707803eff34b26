#include "doctest.h"

#include "gaplab/radial_geometry.hpp"

#include <cmath>

using namespace gaplab;
using namespace gaplab::geometry;

namespace {
// long-double closed forms, independent of the series/asymptotic switch in the library
long double phi_hyp_ref(long double a, long double r) {
    const long double s = std::sqrt(a) * r;
    return std::log(std::sinh(s) / s);
}
long double dphi_hyp_ref(long double a, long double r) {
    const long double s = std::sqrt(a) * r;
    return std::sqrt(a) * (1.0L / std::tanh(s) - 1.0L / s);
}
// five-point derivative of a callable
template <class F>
double d5(F f, double x, double h) {
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}
}  // namespace

TEST_CASE("flat and hyperbolic presets") {
    auto flat = RadialProfile::flat();
    CHECK(flat.phi(3.0) == 0.0);
    CHECK(flat.f(2.5) == 2.5);
    for (int k = 1; k <= 4; ++k) CHECK(flat.deriv(k, 1.7) == 0.0);

    auto hyp = RadialProfile::hyperbolic(1.0);
    for (double r : {0.8, 1.0, 2.0, 7.5})
        CHECK(hyp.f(r) == doctest::Approx(std::sinh(r)).epsilon(1e-13));
    CHECK(hyp.f(0.0) == 0.0);
    // f'(0) = 1
    CHECK((hyp.f(1e-6) / 1e-6) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("hyperbolic derivatives match closed forms on both sides of the series switch") {
    for (double a : {0.25, 1.0, 4.0}) {
        auto p = RadialProfile::hyperbolic(a);
        for (double r : {1e-4, 0.05, 0.2, 0.24, 0.26, 0.6, 1.3, 5.0, 40.0}) {
            const double sr = std::sqrt(a) * r;
            if (sr > 1e-3) {
                CHECK(p.phi(r) == doctest::Approx(static_cast<double>(phi_hyp_ref(a, r))).epsilon(1e-12));
                CHECK(p.deriv(1, r) == doctest::Approx(static_cast<double>(dphi_hyp_ref(a, r))).epsilon(1e-11));
            }
            // derivative chain by differentiating the previous order numerically
            const double h = std::min(1e-3, r / 4);
            if (r > 0.01) {
                for (int k = 2; k <= 4; ++k) {
                    const double num = d5([&](double x) { return p.deriv(k - 1, x); }, r, h);
                    CHECK(p.deriv(k, r) == doctest::Approx(num).epsilon(1e-6).scale(1e-8));
                }
            }
        }
    }
}

TEST_CASE("mixture profile is the weighted sum") {
    auto mix = RadialProfile::mixture({0.5, 0.5}, {RadialProfile::flat(), RadialProfile::hyperbolic(1.0)});
    for (double r : {0.1, 1.0, 3.0}) {
        CHECK(mix.phi(r) == doctest::Approx(0.5 * std::log(std::sinh(r) / r)).epsilon(1e-12));
        CHECK(mix.deriv(1, r) == doctest::Approx(0.5 * (1 / std::tanh(r) - 1 / r)).epsilon(1e-11));
    }
    CHECK_THROWS_AS(RadialProfile::mixture({0.6, 0.6}, {RadialProfile::flat(), RadialProfile::flat()}), InvalidInput);
    CHECK_THROWS_AS(RadialProfile::mixture({1.2, -0.2}, {RadialProfile::flat(), RadialProfile::flat()}), InvalidInput);
    CHECK_THROWS_AS(RadialProfile::hyperbolic(0.0), InvalidInput);
    CHECK_THROWS_AS(RadialProfile::hyperbolic(-1.0), InvalidInput);
}

TEST_CASE("custom profile reproduces a known function") {
    auto fn = [](double r) { return std::log(std::sinh(r) / r); };
    auto p = RadialProfile::custom_from_function([&](double r) { return r == 0.0 ? 0.0 : fn(r); }, 10.0, 2000);
    for (double r : {0.003, 0.5, 1.0, 4.0}) {
        CHECK(p.phi(r) == doctest::Approx(fn(r)).epsilon(1e-6));
        CHECK(p.deriv(1, r) == doctest::Approx(1 / std::tanh(r) - 1 / r).epsilon(1e-4));
        CHECK(p.deriv(2, r) == doctest::Approx(1 / (r * r) - 1 / std::pow(std::sinh(r), 2)).epsilon(1e-3));
    }
    // phi'(0) = 0 from the even extension
    CHECK(std::abs(p.deriv(1, 0.0)) < 1e-12);
    CHECK_THROWS_AS(p.deriv(1, 11.0), InvalidInput);
}

TEST_CASE("validate_assumption_c") {
    SUBCASE("hyperbolic(1)") {
        auto rep = validate_assumption_c(RadialProfile::hyperbolic(1.0), 50.0, 400);
        CHECK(rep.c1);
        CHECK(rep.c2_proxy);
        CHECK(rep.c3);
        CHECK(rep.inf_rphi == 0.0);  // r coth r - 1 >= 0
    }
    SUBCASE("flat") {
        auto rep = validate_assumption_c(RadialProfile::flat(), 50.0, 64);
        CHECK((rep.c1 && rep.c2_proxy && rep.c3));
        CHECK(rep.inf_rphi == 0.0);
    }
    SUBCASE("custom profile crossing r phi' = -1/2") {
        // r phi'(r) = -0.6 r^2 / (1 + r^2) -> -0.6
        auto p = RadialProfile::custom_from_function([](double r) { return -0.3 * std::log1p(r * r); }, 60.0, 6000);
        auto rep = validate_assumption_c(p, 50.0, 400);
        CHECK_FALSE(rep.c3);
        // oracle: grid minimization of the closed form
        double best = 0.0;
        for (int i = 0; i <= 4000; ++i) {
            double r = 50.0 * i / 4000.0;
            best = std::min(best, -0.6 * r * r / (1 + r * r));
        }
        CHECK(rep.inf_rphi == doctest::Approx(best).epsilon(1e-3));
    }
    SUBCASE("determinism and errors") {
        auto a = validate_assumption_c(RadialProfile::hyperbolic(2.0), 20.0, 128);
        auto b = validate_assumption_c(RadialProfile::hyperbolic(2.0), 20.0, 128);
        CHECK(a.inf_rphi == b.inf_rphi);
        CHECK(a.sup_deriv == b.sup_deriv);
        CHECK_THROWS_AS(validate_assumption_c(RadialProfile::flat(), 10.0, 10), InvalidInput);
        auto short_custom = RadialProfile::custom_from_function([](double) { return 0.0; }, 1.0, 50);
        CHECK_THROWS_AS(validate_assumption_c(short_custom, 5.0, 64), InvalidInput);
    }
}

TEST_CASE("hessian_k") {
    auto flat = RadialProfile::flat();
    CHECK(hessian_k(flat, 2.0) == std::pair<double, double>(1.0, 1.0));
    auto hyp = RadialProfile::hyperbolic(1.0);
    auto [rad, tan] = hessian_k(hyp, 1.0);
    CHECK(rad == 1.0);
    CHECK(tan == doctest::Approx(1.0 / std::tanh(1.0)).epsilon(1e-14));
    CHECK(tan == doctest::Approx(1.3130352855).epsilon(1e-9));
    CHECK(hessian_k(hyp, 0.0) == std::pair<double, double>(1.0, 1.0));
    CHECK(hessian_k(hyp, 1e-9).second == doctest::Approx(1.0));
    for (double r : {0.1, 0.7, 3.0, 12.0})
        CHECK(hessian_k(hyp, r).second == doctest::Approx(r / std::tanh(r)).epsilon(1e-13));
}

TEST_CASE("radial curvature") {
    CHECK(radial_curvature(RadialProfile::flat(), 1.0) == 0.0);
    for (double a : {0.5, 1.0, 3.0}) {
        auto p = RadialProfile::hyperbolic(a);
        for (double r : {0.0, 0.01, 0.3, 1.0, 2.0, 6.0}) CHECK(radial_curvature(p, r) == doctest::Approx(-a).epsilon(1e-9));
    }
    // oracle: -f''/f by finite differences of f
    auto mix = RadialProfile::mixture({0.3, 0.7}, {RadialProfile::hyperbolic(1.0), RadialProfile::hyperbolic(4.0)});
    for (double r : {0.5, 1.5}) {
        const double h = 1e-3;
        const double fpp = (mix.f(r + h) - 2 * mix.f(r) + mix.f(r - h)) / (h * h);
        CHECK(radial_curvature(mix, r) == doctest::Approx(-fpp / mix.f(r)).epsilon(1e-5));
    }
}

TEST_CASE("H3 heat kernel") {
    for (double t : {0.1, 0.5, 1.0}) CHECK(std::abs(h3_kernel_mass(t) - 1.0) < 1e-8);
    auto rows = h3_kernel_asymptotics({0.1}, {1.0});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].gradient == doctest::Approx(0.1 * std::abs(1.0 - 1.0 / std::tanh(1.0))).epsilon(1e-10));
    CHECK(rows[0].gradient == doctest::Approx(0.0313).epsilon(2e-3));
    // log-derivative of p against finite differences of the kernel itself
    const double t = 0.3, r = 1.2, h = 1e-4;
    auto lp = [&](double x) { return std::log(h3_heat_kernel(t, x)); };
    const double d1 = (lp(r + h) - lp(r - h)) / (2 * h);
    auto row = h3_kernel_asymptotics({t}, {r})[0];
    CHECK(row.gradient == doctest::Approx(std::abs(t * d1 + r)).epsilon(1e-5));
    // linear decay in t
    auto tab = h3_kernel_asymptotics({0.2, 0.1, 0.05, 0.025}, {1.0});
    for (std::size_t i = 0; i + 1 < tab.size(); ++i) {
        CHECK(tab[i].gradient / tab[i + 1].gradient == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(tab[i].radial_hessian / tab[i + 1].radial_hessian == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(tab[i].tangential_hessian / tab[i + 1].tangential_hessian == doctest::Approx(2.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(h3_kernel_asymptotics({0.0}, {1.0}), InvalidInput);
    CHECK_THROWS_AS(h3_kernel_asymptotics({0.1}, {-1.0}), InvalidInput);
}

TEST_CASE("profile serialization round trip") {
    auto mix = RadialProfile::mixture({0.25, 0.75}, {RadialProfile::flat(), RadialProfile::hyperbolic(2.0)});
    auto back = RadialProfile::from_json(mix.to_json());
    CHECK(back.phi(1.3) == mix.phi(1.3));
    auto cus = RadialProfile::custom_from_function([](double r) { return 0.1 * r * r; }, 4.0, 64);
    auto cback = RadialProfile::from_json(cus.to_json());
    CHECK(cback.deriv(2, 1.0) == doctest::Approx(cus.deriv(2, 1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(RadialProfile::from_json(nlohmann::json{{"preset", "spherical"}}), InvalidInput);
    CHECK(assumption_csv_row(RadialProfile::flat(), validate_assumption_c(RadialProfile::flat(), 5.0, 64)) ==
          "flat,5,1,1,1,0");
}
