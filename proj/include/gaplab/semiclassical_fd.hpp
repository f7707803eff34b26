#pragma once

#include "gaplab/common.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace gaplab::semiclassical {

/// Potential E on R^N (N = 1 or 2) defining nu^lambda = exp(-lambda E) dx / Z.
struct WeightedPotential {
    int N = 1;
    std::string name;
    std::function<double(const Vec&)> E;
    std::function<Vec(const Vec&)> grad;
    std::function<Mat(const Vec&)> hess;
    Mat hess0;
    double L = 0.0;  // box half-width; 0 picks one from lambda
    int cells = 0;   // cells per axis; 0 picks a default

    static WeightedPotential ou(int N);
    static WeightedPotential quartic();
    static WeightedPotential aniso(std::vector<double> diag);
    /// E(x) = sum_k c_k x^k in one dimension, c_0 = c_1 = 0, c_2 > 0.
    static WeightedPotential polynomial(std::vector<double> coeffs);
    static WeightedPotential from_json(const nlohmann::json& j);

    double laplacian(const Vec& x) const { return hess(x).trace(); }
    /// Smallest eigenvalue of hess0.
    double sigma1() const;
    /// Checks E(0) = 0, hess0 > 0, E > 0 on samples and on the box boundary.
    void validate(double box) const;
};

struct GapResult {
    double lambda = 0, e1 = 0, e2 = 0, e2_over_lambda = 0;
    double L = 0, h = 0;
    int cells = 0;
    double residual = 0;        // eigensolver residual (divergence form)
    double e2_schrodinger = 0;  // second realization
    double e1_schrodinger = 0;
    double realization_gap = 0; // relative difference of the two e2 values
    double outside_mass = 0;    // nu(|x| >= L), upper bound for the mass outside the box
};

struct GapOptions {
    double L = 0.0;
    int cells = 0;
};

/// Box half-width with lambda * min_{boundary} E >= 36.
double auto_box(const WeightedPotential& pot, double lambda);

GapResult spectral_gap(const WeightedPotential& pot, double lambda, GapOptions opt = {});

struct Asymptotics {
    std::vector<GapResult> rows;
    double extrapolated = 0.0;  // polynomial extrapolation of e2/lambda in 1/lambda to 0
    double sigma1 = 0.0;
};
Asymptotics gap_asymptotics(const WeightedPotential& pot, const std::vector<double>& lambdas);

/// Z_lambda (lambda / 2 pi)^{N/2} by adaptive quadrature over the box.
double laplace_constant(const WeightedPotential& pot, double lambda);

/// nu^lambda(|x| >= r), integrating over the whole space.
double tail_mass(const WeightedPotential& pot, double lambda, double r);
/// Least-squares slope of -log tail_mass against lambda.
double tail_decay_rate(const WeightedPotential& pot, const std::vector<double>& lambdas, double r);
/// min of E on the sphere |x| = r (sampled).
double min_on_sphere(const WeightedPotential& pot, double r);

/// Test function with analytic gradient.
struct TestFunction {
    std::function<double(const Vec&)> f;
    std::function<Vec(const Vec&)> grad;
    std::string label;
};
/// Hermite polynomials He_k(sqrt(lambda) x_1) (times He_j in x_2 when N = 2) with a smooth cutoff.
std::vector<TestFunction> hermite_family(const WeightedPotential& pot, double lambda, int max_degree = 3);
TestFunction constant_function(double c);

struct GnsRow {
    std::string label;
    double lhs = 0, rhs = 0;
};
struct GnsResult {
    double C = 0;          // log-Sobolev constant used (2 / min Hessian eigenvalue over the box)
    bool skipped = false;  // min Hessian eigenvalue <= 0
    bool c_sigma_ge_2 = false;
    std::vector<GnsRow> rows;
};
GnsResult gns_check(const WeightedPotential& pot, double lambda, const std::function<double(const Vec&)>& V,
                    const std::vector<TestFunction>& family);

/// chi_0 = cos(theta(|x|/kappa)), chi_1 = sin(theta(|x|/kappa)); theta rises from 0 to pi/2 on [1, 2].
/// kappa <= 0 selects the trivial pair chi_0 = 1, chi_1 = 0.
/// Bounded test potentials: sums of random Gaussian bumps plus a sigmoid step, scaled to the box.
std::vector<std::function<double(const Vec&)>> random_bounded_potentials(int N, double L, int count, std::uint64_t seed);

struct ChiPair {
    double kappa = 0.0;
};
struct ImsResult {
    double lhs = 0, rhs = 0, residual = 0;
    double cross_term = 0;  // int (|D chi_0|^2 + |D chi_1|^2) F^2 dnu
    double cross_sup = 0;   // sup of |D chi_0|^2 + |D chi_1|^2
};
ImsResult ims_check(const TestFunction& F, ChiPair chi, const WeightedPotential& pot, double lambda);

struct TrialBound {
    double quotient = 0;          // E(F,F) / (lambda Var F)
    double energy_over_lambda = 0;
    double mean = 0, norm = 0;
    Vec v;
};
TrialBound trial_upper_bound(const WeightedPotential& pot, double lambda);

/// Integral of g over the box [-L, L]^N against nu^lambda (normalized on the box), composite Gauss-Legendre.
double box_expectation(const WeightedPotential& pot, double lambda, double L, const std::function<double(const Vec&)>& g);

std::string gap_csv_header();
std::string gap_csv_row(const WeightedPotential& pot, const GapResult& r);

}  // namespace gaplab::semiclassical
