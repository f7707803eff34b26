#pragma once

#include "gaplab/common.hpp"
#include "gaplab/radial_geometry.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gaplab::jacobi {

/// Minimal geodesic from x0 to the pole, described by its curvature operator R(t), t in [0,1],
/// already scaled by d^2 (dimensionless).
struct GeodesicData {
    int n = 1;
    double d = 1.0;
    std::function<Mat(double)> R;
    std::string tag = "custom";

    Mat R_rev(double t) const { return R(1.0 - t); }
};

/// R = kappa d^2 on the directions orthogonal to the geodesic, 0 along it.
/// With n = 1 the single direction is taken orthogonal (tangential-only model).
GeodesicData constant_curvature(int n, double d, double kappa);
/// Radial geodesic of length d ending at the pole of a rotationally symmetric metric.
GeodesicData from_profile(const geometry::RadialProfile& p, int n, double d);
/// Projector onto directions orthogonal to the geodesic (identity when n = 1).
Mat orth_projector(int n);

struct JacobiSolution {
    int n = 1;
    int steps = 0;
    std::vector<double> t;          // t_k = k / steps
    std::vector<Mat> W, Wp;         // Jacobi matrix and derivative
    std::vector<Mat> A;             // Riccati route
    std::vector<Mat> A_direct;      // t W' W^{-1}
    std::vector<Mat> K, Ntil, N, M; // K is NaN at t = 1
    double max_asym = 0.0;          // max ||A - A^T||
    double m_consistency = 0.0;     // max ||M(t) - W(1-t) W(1)^{-1} M(0)||
    bool has_knm = false;

    /// f(t) = W(1-t); exact on grid points t = k/steps.
    const Mat& f_at_index(int k) const { return W[steps - k]; }
};

constexpr double kConjugateCond = 1e12;

/// Classical RK4 for W'' = -R_rev W with W(0) = 0, W'(0) = I. Also fills A_direct.
JacobiSolution solve_jacobi(const GeodesicData& geo, int steps);

/// RK4 for A' = -t R_rev - (A^2 - A)/t from the series seed at t0 = 1/steps.
std::vector<Mat> riccati_A(const GeodesicData& geo, int steps);

/// Full pipeline: W, A, K, Ntil, N, M.
JacobiSolution build_KNM(const GeodesicData& geo, int steps);

/// Regular part (I - A(s))/s at s = 1 - t, using the small-s series below s = 1e-3.
Mat ntil_from_A(const GeodesicData& geo, const Mat& A, double s);

double max_asymmetry(const std::vector<Mat>& A);
/// max over t in (delta, 1] of ||A_riccati - A_direct||
double riccati_direct_gap(const JacobiSolution& sol, double delta);

std::string jacobi_csv(const JacobiSolution& sol);

}  // namespace gaplab::jacobi
