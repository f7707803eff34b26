#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace gaplab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Violated precondition on user input.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// A computation broke down (singular Jacobi matrix, eigensolver failure, ...).
struct NumericFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Reading or writing an artifact failed.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput(what);
}

/// Runs fn(i) for i in [0, count) on up to `threads` workers with static chunking.
/// Callers write results into per-index slots, so output never depends on scheduling.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

using LinearMap = std::function<Vec(const Vec&)>;

/// Largest singular value of A, given matvecs with A and A^T.
/// Lanczos on A^T A with full reorthogonalization.
double operator_norm(const LinearMap& apply, const LinearMap& apply_t, Eigen::Index dim,
                     int max_iter = 160, double rel_tol = 1e-12);

double operator_norm(const Mat& a);

/// Pairwise (cascade) summation; order-independent of how the data was produced.
double pairwise_sum(const double* x, std::size_t n);

/// FNV-1a 64-bit; used for config digests.
std::uint64_t fnv1a64(const std::string& bytes);

/// Seed for stream `index` of master seed `seed` (splitmix64 finalizer on both words).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace gaplab
