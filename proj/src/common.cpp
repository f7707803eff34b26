#include "gaplab/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <random>
#include <thread>
#include <vector>

namespace gaplab {

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(threads, count);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                const std::size_t lo = count * w / workers, hi = count * (w + 1) / workers;
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

double operator_norm(const LinearMap& apply, const LinearMap& apply_t, Eigen::Index dim, int max_iter,
                     double rel_tol) {
    if (dim == 0) return 0.0;
    const int kmax = static_cast<int>(std::min<Eigen::Index>(max_iter, dim));
    Mat q(dim, kmax + 1);
    std::vector<double> alpha, beta;
    // Deterministic start vector with all components nonzero.
    std::mt19937_64 gen(0x5eed);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    Vec v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = u(gen) * ((i % 2) ? 1.0 : -1.0);
    v.normalize();
    q.col(0) = v;
    double prev = -1.0, est = 0.0;
    for (int k = 0; k < kmax; ++k) {
        Vec w = apply_t(apply(q.col(k)));
        const double a = q.col(k).dot(w);
        alpha.push_back(a);
        // full reorthogonalization, twice
        for (int pass = 0; pass < 2; ++pass) w -= q.leftCols(k + 1) * (q.leftCols(k + 1).transpose() * w);
        const double b = w.norm();
        const int size = k + 1;
        Mat tri = Mat::Zero(size, size);
        for (int i = 0; i < size; ++i) {
            tri(i, i) = alpha[i];
            if (i + 1 < size) tri(i, i + 1) = tri(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(tri, Eigen::EigenvaluesOnly);
        est = es.eigenvalues().maxCoeff();
        if (b == 0.0 || b <= 1e-13 * std::abs(est)) break;  // invariant subspace found
        if (k >= 4 && std::abs(est - prev) <= rel_tol * std::abs(est)) break;
        prev = est;
        beta.push_back(b);
        q.col(k + 1) = w / b;
    }
    return std::sqrt(std::max(est, 0.0));
}

double operator_norm(const Mat& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() <= 256 && a.cols() <= 256) {
        Eigen::JacobiSVD<Mat> svd(a);
        return svd.singularValues()(0);
    }
    return operator_norm([&](const Vec& x) -> Vec { return a * x; },
                         [&](const Vec& x) -> Vec { return a.transpose() * x; }, a.cols());
}

double pairwise_sum(const double* x, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {
std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) { return mix(mix(seed) ^ mix(~index)); }

}  // namespace gaplab
