#pragma once

#include "gaplab/common.hpp"
#include "gaplab/jacobi_engine.hpp"

#include <string>
#include <vector>

namespace gaplab::ops {

/// Midpoint grid t_i = (i - 1/2)/m, i = 1..m, weight 1/m; n values per node.
/// Vectors are laid out cell-major: entry (i-1)*n + c.
struct GridSpec {
    int m = 64;
    int n = 1;
    double node(int i) const { return (i - 0.5) / m; }  // 1-based
    Eigen::Index dim() const { return static_cast<Eigen::Index>(m) * n; }
};

/// Dense discretizations of the operators on L^2([0,1] -> R^n).
/// The quadrature weight is uniform, so weighted adjoints are plain transposes.
struct OperatorSet {
    GridSpec grid;
    std::string tag;
    double d = 1.0;
    Mat S, T, S_inv, S_star, S_inv_star, J0, P0;
    Mat I_plus_T() const { return Mat::Identity(T.rows(), T.cols()) + T; }
};

/// Edge values f_k = W(1 - k/m) come from the Jacobi solution (steps must be a multiple of 2m);
/// T uses R(t) at the interior edges k/m.
OperatorSet assemble_operators(const jacobi::GeodesicData& geo, const jacobi::JacobiSolution& jac, GridSpec grid);

struct Sigma1 {
    double via_eig = 0.0;
    double via_opnorm = 0.0;
};
Sigma1 sigma1(const OperatorSet& ops);

struct IdentityResiduals {
    double sstar_s = 0.0;         // S*S - (I+T) on L2_0
    double s_s2_raw = 0.0;        // S S2 - I on all of L2 (pole cell included)
    double s_s2 = 0.0;            // S S2 - I with the pole cell excluded
    double s2_s = 0.0;            // S2 S - I on L2_0
    double sinvstar_it = 0.0;     // (S^-1)*(I+T) - S on L2_0
    double it_s2_sinvstar = 0.0;  // (I+T) S2 (S^-1)* - I on L2_0
    double sinvstar_def = 0.0;    // (S^-1)* - (I + J0), zero by construction
};
IdentityResiduals identity_residuals(const OperatorSet& ops);

/// Quadratic form <(I+T) phi, phi> and ||S phi||^2 in the grid inner product.
double form_IT(const OperatorSet& ops, const Vec& phi);
double norm2_S(const OperatorSet& ops, const Vec& phi);
double grid_norm2(const GridSpec& g, const Vec& phi);

/// Mean over [t, 1] divided back: ratio of ||(1/(1-t)) int_t^1 phi||^2 to ||phi||^2. O(m).
double hardy_ratio(const Vec& phi, int n = 1);

struct PerturbationResult {
    std::vector<double> eps;
    std::vector<double> norms;  // ||J_eps - J_0||_op
    double slope = 0.0;         // least-squares log-log slope over eps > 0
};

/// K_eps = K + C_eps/(1-t)^delta with C_eps(t) = eps * scale * (1 - (2t-1)^2/2) * P_orth.
PerturbationResult perturb_J(const jacobi::GeodesicData& geo, const jacobi::JacobiSolution& jac, GridSpec grid,
                             const std::vector<double>& eps_list, double delta, double scale = 1.0);

/// J_eps matrix on the grid (exposed for tests).
Mat assemble_J(const jacobi::GeodesicData& geo, const jacobi::JacobiSolution& jac, GridSpec grid, double eps,
               double delta, double scale = 1.0);

struct TrialMode {
    Vec phi;               // unit norm in the grid inner product, mean zero
    double form_value = 0; // <(I+T) phi, phi>
    double s_norm2 = 0;    // ||S phi||^2
    double sigma1 = 0;
    int fejer_order = 0;
};

/// Smoothest low mode of (I+T) on L2_0, Fejer-smoothed in its cosine expansion, with a certified
/// form value in [sigma1, sigma1 + eps].
TrialMode trial_mode(const OperatorSet& ops, double eps);

/// Orthonormal (plain dot) cosine basis of mean-zero scalar grid functions: m x (m-1).
Mat cosine_basis(int m);

std::string sigma_csv_header();
std::string sigma_csv_row(const OperatorSet& ops, const Sigma1& s, const IdentityResiduals& r);

}  // namespace gaplab::ops
