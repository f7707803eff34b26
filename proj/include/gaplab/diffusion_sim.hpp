#pragma once

#include "gaplab/common.hpp"
#include "gaplab/operator_lab.hpp"
#include "gaplab/radial_geometry.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gaplab::diffusion {

// ---------------------------------------------------------------- radial SDE pair

struct RadialOptions {
    unsigned threads = 1;
    bool keep_paths = false;    // retain full Y and Z arrays (needed for the binary dump)
    double dominance_tol = 1e-9;
    double floor = 1e-6;        // Y below this flags the path
    bool implicit = true;       // drift-implicit 1/U term; false = plain Euler-Maruyama
};

struct PathSummary {
    double max_y = 0.0;
    double final_y = 0.0;
    double min_gap = 0.0;       // min over steps of Z - sqrt(lambda) Y
    double max_abs_gap = 0.0;   // max over steps of |Z - sqrt(lambda) Y|
    bool dominated = true;      // sqrt(lambda) Y <= Z + tol at every step
    bool floored = false;       // Y dropped below the positivity floor
};

/// Radial process Y (started at d) and its Bessel-type comparison Z, driven by identical noise.
/// Both are integrated on the scale U = sqrt(lambda) Y so the flat case coincides bitwise.
struct RadialPathEnsemble {
    double lambda = 0.0;
    int n = 0, m = 0, P = 0;
    std::uint64_t seed = 0;
    double d = 0.0;
    double drift_shift = 0.0;   // sup |phi'| used by the comparison process
    std::string profile_tag;
    std::vector<PathSummary> paths;
    Mat Y, Z;                   // P x (m+1), only with keep_paths

    double dominance_fraction() const;
    std::size_t flagged() const;
    double max_abs_gap() const;
    double mean_max_y() const;
};

RadialPathEnsemble simulate_radial_pair(const geometry::RadialProfile& profile, int n, double lambda, double d, int m,
                                        int P, std::uint64_t seed, RadialOptions opt = {});

/// Little-endian layout: "GLPE", u32 version = 1, u32 m, u32 P, f64 lambda, then Y and Z as
/// row-major P x (m+1) f64 arrays.
std::string binary_bytes(const RadialPathEnsemble& ens);
void write_binary(const RadialPathEnsemble& ens, const std::string& path);
RadialPathEnsemble read_binary(const std::string& path);

/// Independent reference for the flat case: |d e_1 + W_t / sqrt(lambda)| for an n-dimensional BM
/// sampled with exact Gaussian increments on the same time grid. Returns the mean of max_t.
struct FlatMaxReference {
    double mean = 0.0, se = 0.0;
};
FlatMaxReference flat_max_reference(int n, double lambda, double d, int m, int P, std::uint64_t seed);

struct TailRow {
    double r = 0.0;
    double prob = 0.0;
    std::size_t count = 0;
    bool reliable = false;      // count >= 50 and prob <= 0.5
};
struct TailFit {
    std::vector<TailRow> rows;
    double slope = 0.0;         // d log P / d (r - 1 - d)^2 over the reliable rows
    double C2 = 0.0;            // -slope / lambda
    double intercept = 0.0;
    std::size_t used = 0;
    bool ok = false;            // at least two reliable rows and a negative slope
    std::string note;
};
/// P(1 + max_t Y >= r) on r_grid, with a least-squares fit of log P against (r - 1 - d)^2.
TailFit empirical_tail(const RadialPathEnsemble& ens, const std::vector<double>& r_grid);

// ---------------------------------------------------------------- pinned bridges

enum class Space { Flat3, H3 };
Space parse_space(const std::string& s);
std::string space_name(Space s);

struct BridgeOptions {
    int chains = 1;
    int thin = 100;
    unsigned threads = 1;
    double target_acceptance = 0.3;
};

/// Samples of the discretized pinned measure: x_0 at distance d from the pole, x_m at the pole,
/// interior slices distributed with density prod_k p(1/(m lambda), d(x_{k-1}, x_k)).
/// Positions are stored in normal coordinates at the pole (Euclidean coordinates for flat3).
struct BridgeEnsemble {
    Space space = Space::Flat3;
    double lambda = 0.0, d = 0.0;
    int m = 0;
    long chain = 0, burnin = 0;
    std::uint64_t seed = 0;
    int thin = 1, chains = 1;
    double acceptance = 0.0;    // measurement-phase acceptance, averaged over chains
    double scale = 0.0;         // frozen proposal scale (chain 0)
    std::vector<Mat> samples;   // each (m+1) x 3

    std::size_t size() const { return samples.size(); }
};

BridgeEnsemble sample_bridge(Space space, double lambda, int m, double d, long chain, long burnin, std::uint64_t seed,
                             BridgeOptions opt = {});

/// Exact flat bridge moments of slice k: mean x0 (1 - t_k), covariance t_k (1 - t_k) / lambda per axis.
struct SliceMoments {
    Vec mean;
    Mat cov;
};
SliceMoments slice_moments(const BridgeEnsemble& b, int k);
Vec slice_mean_se(const BridgeEnsemble& b, int k, int batches = 25);

/// Mean distance to the pole of slice k.
double mean_radius(const BridgeEnsemble& b, int k);

/// Discrete anti-development: Delta b_k as m x 3 rows in the frame at x_0 (e_0 toward the pole),
/// obtained with log maps and composed slice-to-slice parallel transport.
Mat anti_development(const BridgeEnsemble& b, const Mat& path);

struct CylinderFunction {
    std::function<double(const Mat& path, const Mat& db)> value;
    /// (D_0 F)' on the cell grid, cell-major m*3 vector, before projection.
    std::function<Vec(const Mat& path, const Mat& db)> dprime;
};
/// F = sqrt(scale) (sum_k phi_k . Delta b_k - (1/m) sum_k phi_k . xi), xi = d e_0 the geodesic velocity.
CylinderFunction linear_functional(const BridgeEnsemble& b, const Vec& phi, double scale = 1.0);
/// F = g(distance to the pole of the slice nearest t = 1/2).
CylinderFunction midpoint_radius_function(const BridgeEnsemble& b, std::function<double(double)> g,
                                          std::function<double(double)> dg);
CylinderFunction constant_functional(double c);

struct RayleighResult {
    double variance = 0.0;      // Var F
    double energy = 0.0;        // E |P0 (D_0 F)'|^2 (grid norm)
    double quotient = 0.0;      // energy / (lambda Var F)
    double se = 0.0;            // batch-means standard error of the quotient
    double ess = 0.0;           // effective sample size (min over F and F^2)
    bool curvature_dominates = false;
};
RayleighResult rayleigh_trial(const BridgeEnsemble& b, const Vec& phi, int batches = 32);
RayleighResult rayleigh_functional(const BridgeEnsemble& b, const CylinderFunction& F, int batches = 32);

struct PoincareResult {
    double lhs = 0.0;           // lambda Var F
    double rhs = 0.0;           // E (|S_inv_star v| + envelope |v|)^2
    double rhs_plain = 0.0;     // envelope = 0
    double margin = 0.0;        // rhs - lhs
    double se = 0.0;
    bool violated = false;      // lhs > rhs + 3 se
};
PoincareResult poincare_check(const BridgeEnsemble& b, const CylinderFunction& F, const ops::OperatorSet& ops,
                              double envelope = 0.0, int batches = 32);

// ---------------------------------------------------------------- explicit lower bound

struct LowerBoundInputs {
    double alpha = 0.0, beta = 0.0, r0 = 0.0;
};
double lower_bound_radius(const LowerBoundInputs& in);
double gap_lower_bound(const LowerBoundInputs& in);

std::string radial_csv_header();
std::string radial_csv_row(const RadialPathEnsemble& e);
std::string tail_csv_header();
std::string tail_csv_row(const RadialPathEnsemble& e, const TailRow& r, const TailFit& f);
std::string rayleigh_csv_header();
std::string rayleigh_csv_row(const BridgeEnsemble& b, const RayleighResult& r);

}  // namespace gaplab::diffusion
