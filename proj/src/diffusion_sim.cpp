#include "gaplab/diffusion_sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

namespace gaplab::diffusion {

namespace {

double mean_of(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()) / static_cast<double>(x.size()); }

double var_of(const std::vector<double>& x) {
    const double mu = mean_of(x);
    std::vector<double> sq(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - mu) * (x[i] - mu);
    return pairwise_sum(sq.data(), sq.size()) / static_cast<double>(x.size() - 1);
}

// Batch means of x over `batches` contiguous blocks (remainder dropped).
std::vector<double> batch_means(const std::vector<double>& x, int batches) {
    const std::size_t len = x.size() / static_cast<std::size_t>(batches);
    std::vector<double> out;
    for (int b = 0; b < batches; ++b) out.push_back(pairwise_sum(x.data() + b * len, len) / static_cast<double>(len));
    return out;
}

}  // namespace

// ---------------------------------------------------------------- radial SDE pair

double RadialPathEnsemble::dominance_fraction() const {
    std::size_t ok = 0;
    for (const auto& p : paths) ok += p.dominated;
    return static_cast<double>(ok) / static_cast<double>(paths.size());
}

std::size_t RadialPathEnsemble::flagged() const {
    std::size_t c = 0;
    for (const auto& p : paths) c += p.floored;
    return c;
}

double RadialPathEnsemble::max_abs_gap() const {
    double g = 0.0;
    for (const auto& p : paths) g = std::max(g, p.max_abs_gap);
    return g;
}

double RadialPathEnsemble::mean_max_y() const {
    std::vector<double> v;
    for (const auto& p : paths) v.push_back(p.max_y);
    return mean_of(v);
}

RadialPathEnsemble simulate_radial_pair(const geometry::RadialProfile& profile, int n, double lambda, double d, int m,
                                        int P, std::uint64_t seed, RadialOptions opt) {
    require(n >= 3, "radial simulation needs n >= 3");
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
    require(d > 0.0, "start radius must be positive");
    require(m >= 1 && P >= 1, "need m >= 1 steps and P >= 1 paths");
    RadialPathEnsemble ens;
    ens.lambda = lambda;
    ens.n = n;
    ens.m = m;
    ens.P = P;
    ens.seed = seed;
    ens.d = d;
    ens.profile_tag = profile.tag();
    const double window = profile.deriv_window();
    ens.drift_shift = profile.sup_dphi(std::isfinite(window) ? window : d + 50.0);
    ens.paths.resize(P);
    if (opt.keep_paths) {
        ens.Y = Mat::Constant(P, m + 1, std::numeric_limits<double>::quiet_NaN());
        ens.Z = ens.Y;
    }
    const double sl = std::sqrt(lambda), dt = 1.0 / m, sdt = std::sqrt(dt);
    const double c = 0.5 * (n - 1);
    const double shift = ens.drift_shift;
    // U = sqrt(lambda) Y: dU = dB + c (1/U + phi'(U/sqrt(lambda))/sqrt(lambda)) dt
    auto drift = [&](double u, double dphi) { return c * (1.0 / u + dphi / sl); };
    // drift-implicit in the c/U term: x solves x^2 - a x - c dt = 0, positive and increasing in a
    auto implicit_step = [&](double u, double dphi, double dw) {
        const double a = u + c * dphi / sl * dt + dw;
        const double root = std::sqrt(a * a + 4.0 * c * dt);
        return a >= 0.0 ? 0.5 * (a + root) : 2.0 * c * dt / (root - a);
    };
    parallel_for(static_cast<std::size_t>(P), opt.threads, [&](std::size_t p) {
        std::mt19937_64 gen(stream_seed(seed, p));
        std::normal_distribution<double> nd;
        PathSummary s;
        double u = sl * d, z = u;
        s.max_y = d;
        s.min_gap = 0.0;
        if (opt.keep_paths) ens.Y(p, 0) = d, ens.Z(p, 0) = z;
        for (int k = 1; k <= m; ++k) {
            const double dw = sdt * nd(gen);
            const double dphi = profile.deriv(1, u / sl);
            const double un = opt.implicit ? implicit_step(u, dphi, dw) : u + drift(u, dphi) * dt + dw;
            const double zn = opt.implicit ? implicit_step(z, shift, dw) : z + drift(z, shift) * dt + dw;
            u = un;
            z = zn;
            const double y = u / sl;
            if (opt.keep_paths) ens.Y(p, k) = y, ens.Z(p, k) = z;
            const double gap = z - u;
            s.min_gap = std::min(s.min_gap, gap);
            s.max_abs_gap = std::max(s.max_abs_gap, std::abs(gap));
            if (u > z + opt.dominance_tol) s.dominated = false;
            s.max_y = std::max(s.max_y, y);
            s.final_y = y;
            if (!(y > opt.floor)) {
                s.floored = true;  // stop here; the path is reported, not repaired
                break;
            }
        }
        ens.paths[p] = s;
    });
    return ens;
}

namespace {

constexpr char kMagic[4] = {'G', 'L', 'P', 'E'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");

template <class T>
void put(std::string& o, T v) {
    o.append(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
T get(std::ifstream& i) {
    T v{};
    i.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

}  // namespace

std::string binary_bytes(const RadialPathEnsemble& ens) {
    require(ens.Y.rows() == ens.P && ens.Y.cols() == ens.m + 1, "binary dump needs an ensemble with kept paths");
    std::string o(kMagic, 4);
    put<std::uint32_t>(o, kVersion);
    put<std::uint32_t>(o, static_cast<std::uint32_t>(ens.m));
    put<std::uint32_t>(o, static_cast<std::uint32_t>(ens.P));
    put<double>(o, ens.lambda);
    for (const Mat* a : {&ens.Y, &ens.Z})
        for (Eigen::Index r = 0; r < a->rows(); ++r)
            for (Eigen::Index c = 0; c < a->cols(); ++c) put<double>(o, (*a)(r, c));
    return o;
}

void write_binary(const RadialPathEnsemble& ens, const std::string& path) {
    const std::string bytes = binary_bytes(ens);
    std::ofstream o(path, std::ios::binary | std::ios::trunc);
    if (!o) throw IoError("cannot open " + path + " for writing");
    o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!o) throw IoError("write failed for " + path);
}

RadialPathEnsemble read_binary(const std::string& path) {
    std::ifstream i(path, std::ios::binary);
    if (!i) throw IoError("cannot open " + path);
    char magic[4];
    i.read(magic, 4);
    if (!i || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path + ": bad magic");
    if (get<std::uint32_t>(i) != kVersion) throw IoError(path + ": unsupported version");
    RadialPathEnsemble e;
    e.m = static_cast<int>(get<std::uint32_t>(i));
    e.P = static_cast<int>(get<std::uint32_t>(i));
    e.lambda = get<double>(i);
    e.Y.resize(e.P, e.m + 1);
    e.Z.resize(e.P, e.m + 1);
    for (Mat* a : {&e.Y, &e.Z})
        for (Eigen::Index r = 0; r < a->rows(); ++r)
            for (Eigen::Index c = 0; c < a->cols(); ++c) (*a)(r, c) = get<double>(i);
    if (!i) throw IoError(path + ": truncated");
    return e;
}

FlatMaxReference flat_max_reference(int n, double lambda, double d, int m, int P, std::uint64_t seed) {
    require(n >= 1 && lambda > 0.0 && m >= 1 && P >= 2, "bad flat reference parameters");
    std::vector<double> maxes(P);
    const double s = std::sqrt(1.0 / (m * lambda));
    for (int p = 0; p < P; ++p) {
        std::mt19937_64 gen(stream_seed(seed ^ 0x9e3779b97f4a7c15ULL, static_cast<std::uint64_t>(p)));
        std::normal_distribution<double> nd;
        Vec x = Vec::Zero(n);
        x(0) = d;
        double mx = d;
        for (int k = 0; k < m; ++k) {
            for (int i = 0; i < n; ++i) x(i) += s * nd(gen);
            mx = std::max(mx, x.norm());
        }
        maxes[p] = mx;
    }
    return {mean_of(maxes), std::sqrt(var_of(maxes) / P)};
}

TailFit empirical_tail(const RadialPathEnsemble& ens, const std::vector<double>& r_grid) {
    require(!ens.paths.empty(), "empty ensemble");
    std::vector<double> top;
    for (const auto& p : ens.paths) top.push_back(1.0 + p.max_y);
    std::sort(top.begin(), top.end());
    TailFit fit;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double r : r_grid) {
        TailRow row;
        row.r = r;
        row.count = static_cast<std::size_t>(top.end() - std::lower_bound(top.begin(), top.end(), r));
        row.prob = static_cast<double>(row.count) / static_cast<double>(top.size());
        row.reliable = row.count >= 50 && row.prob <= 0.5 && r > 1.0 + ens.d;
        if (row.reliable) {
            const double x = (r - 1.0 - ens.d) * (r - 1.0 - ens.d), y = std::log(row.prob);
            sx += x, sy += y, sxx += x * x, sxy += x * y;
            ++fit.used;
        }
        fit.rows.push_back(row);
    }
    if (fit.used < 2) {
        fit.note = "too few exceedances for a fit";
        return fit;
    }
    const double k = static_cast<double>(fit.used);
    fit.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / k;
    fit.C2 = -fit.slope / ens.lambda;
    fit.ok = fit.slope < 0.0;
    if (!fit.ok) fit.note = "nonnegative slope";
    if (fit.rows.back().count < 50) fit.note = "few exceedances at the largest r";
    return fit;
}

// ---------------------------------------------------------------- pinned bridges

Space parse_space(const std::string& s) {
    if (s == "flat3") return Space::Flat3;
    if (s == "h3") return Space::H3;
    throw InvalidInput("unknown space '" + s + "' (flat3 | h3)");
}

std::string space_name(Space s) { return s == Space::Flat3 ? "flat3" : "h3"; }

namespace {

using Vec4 = Eigen::Vector4d;

double log_sinhc(double r) {
    if (r < 1e-4) return r * r / 6.0;
    if (r < 0.5) return std::log(std::sinh(r) / r);
    return r + std::log1p(-std::exp(-2.0 * r)) - std::log(2.0) - std::log(r);
}

double minkowski(const Vec4& a, const Vec4& b) { return -a(0) * b(0) + a(1) * b(1) + a(2) * b(2) + a(3) * b(3); }

Vec4 hyperboloid(const Eigen::Ref<const Eigen::RowVector3d>& u) {
    const double r = u.norm();
    const double sc = r < 1e-8 ? 1.0 + r * r / 6.0 : std::sinh(r) / r;
    Vec4 x;
    x << std::cosh(r), sc * u(0), sc * u(1), sc * u(2);
    return x;
}

double h3_distance(const Vec4& a, const Vec4& b) {
    const Vec4 e = a - b;
    const double q = std::max(0.0, minkowski(e, e));
    return 2.0 * std::asinh(0.5 * std::sqrt(q));
}

// log of the unnormalized bridge density in normal coordinates (volume factor included)
double log_target(Space space, const Mat& u, double tau) {
    const Eigen::Index m = u.rows() - 1;
    double acc = 0.0;
    if (space == Space::Flat3) {
        for (Eigen::Index k = 1; k <= m; ++k) acc -= (u.row(k) - u.row(k - 1)).squaredNorm() / (2.0 * tau);
        return acc;
    }
    std::vector<Vec4> x(m + 1);
    for (Eigen::Index k = 0; k <= m; ++k) x[k] = hyperboloid(u.row(k));
    for (Eigen::Index k = 1; k <= m; ++k) {
        const double r = h3_distance(x[k - 1], x[k]);
        acc += -log_sinhc(r) - r * r / (2.0 * tau);
    }
    for (Eigen::Index k = 1; k < m; ++k) acc += 2.0 * log_sinhc(u.row(k).norm());
    return acc;
}

struct ChainOut {
    std::vector<Mat> samples;
    double acceptance = 0.0, scale = 0.0;
};

ChainOut run_chain(Space space, double lambda, int m, double d, long chain, long burnin, int thin, double target,
                   std::uint64_t seed) {
    const double tau = 1.0 / (m * lambda);
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Mat u(m + 1, 3);
    for (int k = 0; k <= m; ++k) u.row(k) << d * (1.0 - static_cast<double>(k) / m), 0.0, 0.0;
    double lp = log_target(space, u, tau);
    double log_s = std::log(2.38 / std::sqrt(3.0 * (m - 1)));
    Mat xi(m + 1, 3), prop(m + 1, 3);
    auto step = [&]() {
        // Brownian bridge increment with per-step variance tau, pinned at both ends
        xi.row(0).setZero();
        for (int k = 1; k <= m; ++k)
            for (int c = 0; c < 3; ++c) xi(k, c) = xi(k - 1, c) + std::sqrt(tau) * nd(gen);
        for (int k = 1; k <= m; ++k) xi.row(k) -= (static_cast<double>(k) / m) * xi.row(m);
        prop = u + std::exp(log_s) * xi;
        const double lq = log_target(space, prop, tau);
        if (std::log(unif(gen)) < lq - lp) {
            u.swap(prop);
            lp = lq;
            return true;
        }
        return false;
    };
    const int window = 50;
    long acc_win = 0, nwin = 0;
    for (long it = 0; it < burnin; ++it) {
        acc_win += step();
        if ((it + 1) % window == 0) {
            ++nwin;
            const double rate = static_cast<double>(acc_win) / window;
            log_s += (rate - target) * 3.0 / std::sqrt(static_cast<double>(nwin));
            acc_win = 0;
        }
    }
    ChainOut out;
    out.scale = std::exp(log_s);
    long accepted = 0;
    for (long it = 0; it < chain; ++it) {
        accepted += step();
        if ((it + 1) % thin == 0) out.samples.push_back(u);
    }
    out.acceptance = static_cast<double>(accepted) / static_cast<double>(chain);
    return out;
}

}  // namespace

BridgeEnsemble sample_bridge(Space space, double lambda, int m, double d, long chain, long burnin, std::uint64_t seed,
                             BridgeOptions opt) {
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
    require(m >= 2, "bridge needs m >= 2 time slices");
    require(d > 0.0, "start distance must be positive");
    require(chain >= 1 && burnin >= 0, "chain length must be positive");
    require(opt.chains >= 1 && opt.thin >= 1 && chain >= opt.thin, "bad chain/thin settings");
    BridgeEnsemble b;
    b.space = space;
    b.lambda = lambda;
    b.d = d;
    b.m = m;
    b.chain = chain;
    b.burnin = burnin;
    b.seed = seed;
    b.thin = opt.thin;
    b.chains = opt.chains;
    std::vector<ChainOut> outs(opt.chains);
    parallel_for(static_cast<std::size_t>(opt.chains), opt.threads, [&](std::size_t c) {
        outs[c] = run_chain(space, lambda, m, d, chain, burnin, opt.thin, opt.target_acceptance, stream_seed(seed, c));
    });
    double acc = 0.0;
    for (auto& o : outs) {
        acc += o.acceptance;
        for (auto& s : o.samples) b.samples.push_back(std::move(s));
    }
    b.acceptance = acc / opt.chains;
    b.scale = outs[0].scale;
    for (const auto& o : outs)
        if (o.acceptance < 0.2 || o.acceptance > 0.6)
            throw NumericFailure("bridge acceptance " + std::to_string(o.acceptance) + " outside [0.2, 0.6] after tuning");
    return b;
}

SliceMoments slice_moments(const BridgeEnsemble& b, int k) {
    require(k >= 0 && k <= b.m, "slice index out of range");
    const double t = static_cast<double>(k) / b.m;
    SliceMoments s;
    s.mean = Vec::Zero(3);
    s.mean(0) = b.d * (1.0 - t);
    s.cov = Mat::Identity(3, 3) * (t * (1.0 - t) / b.lambda);
    return s;
}

Vec slice_mean_se(const BridgeEnsemble& b, int k, int batches) {
    Vec se(3);
    for (int c = 0; c < 3; ++c) {
        std::vector<double> x;
        for (const auto& s : b.samples) x.push_back(s(k, c));
        se(c) = std::sqrt(var_of(batch_means(x, batches)) / batches);
    }
    return se;
}

double mean_radius(const BridgeEnsemble& b, int k) {
    std::vector<double> r;
    for (const auto& s : b.samples) r.push_back(s.row(k).norm());
    return mean_of(r);
}

namespace {

// Anti-development and the transported frame at slice `keep` (coefficients of the frame vectors
// in the ambient coordinates: R^3 for flat3, Minkowski R^4 for h3).
struct Development {
    Mat db;       // m x 3
    Mat frame;    // 3 x 3 (flat) or 4 x 3 (h3), frame at slice `keep`
    Vec point;    // ambient coordinates of slice `keep`
};

Development develop(const BridgeEnsemble& b, const Mat& u, int keep) {
    const int m = b.m;
    Development out;
    out.db.resize(m, 3);
    if (b.space == Space::Flat3) {
        Mat e = Mat::Identity(3, 3);
        e(0, 0) = -1.0;  // e_0 points from x_0 toward the pole
        for (int k = 1; k <= m; ++k) out.db.row(k - 1) = (u.row(k) - u.row(k - 1)) * e;
        out.frame = e;
        out.point = u.row(keep).transpose();
        return out;
    }
    std::vector<Vec4> x(m + 1);
    for (int k = 0; k <= m; ++k) x[k] = hyperboloid(u.row(k));
    Eigen::Matrix<double, 4, 3> e = Eigen::Matrix<double, 4, 3>::Zero();
    {
        // frame at x_0 = (d, 0, 0): e_0 = unit tangent toward the pole, e_1, e_2 orthogonal to the geodesic
        const double r = u(0, 0);
        e.col(0) << -std::sinh(r), -std::cosh(r), 0.0, 0.0;
        e(2, 1) = 1.0;
        e(3, 2) = 1.0;
    }
    for (int k = 1; k <= m; ++k) {
        const Vec4& a = x[k - 1];
        const Vec4& c = x[k];
        const double ip = minkowski(a, c);  // -cosh(dist)
        const double dist = h3_distance(a, c);
        const double f = dist < 1e-12 ? 1.0 : dist / std::sinh(dist);
        const Vec4 v = f * (c + ip * a);
        for (int i = 0; i < 3; ++i) out.db(k - 1, i) = minkowski(v, e.col(i));
        if (k - 1 == keep) {
            out.frame = e;
            out.point = a;
        }
        for (int i = 0; i < 3; ++i) e.col(i) += minkowski(c, e.col(i)) / (1.0 - ip) * (a + c);
    }
    if (keep == m) {
        out.frame = e;
        out.point = x[m];
    }
    return out;
}

double curvature(Space s) { return s == Space::H3 ? -1.0 : 0.0; }

Vec project0(const Vec& v, int m) {
    Vec out = v;
    for (int c = 0; c < 3; ++c) {
        double mu = 0.0;
        for (int i = 0; i < m; ++i) mu += v(3 * i + c);
        mu /= m;
        for (int i = 0; i < m; ++i) out(3 * i + c) -= mu;
    }
    return out;
}

double norm2_grid(const Vec& v, int m) { return v.squaredNorm() / m; }

// Curvature correction of (D_0 F)' for F = sum phi_k . Delta b_k:
// g_u = sum_{s >= u} G_s, G_s = kappa sum_{t >= s} (<db_s, db_t> phi_t - <phi_t, db_s> db_t), half weight on ties.
Vec curvature_correction(const Mat& db, const Vec& phi, double kappa) {
    const int m = static_cast<int>(db.rows());
    Vec g = Vec::Zero(3 * m);
    if (kappa == 0.0) return g;
    Mat G = Mat::Zero(m, 3);
    for (int s = 0; s < m; ++s) {
        Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
        for (int t = s; t < m; ++t) {
            const Eigen::RowVector3d p = phi.segment<3>(3 * t).transpose();
            const double w = (t == s) ? 0.5 : 1.0;
            acc += w * (db.row(s).dot(db.row(t)) * p - p.dot(db.row(s)) * db.row(t));
        }
        G.row(s) = kappa * acc;
    }
    Eigen::RowVector3d tail = Eigen::RowVector3d::Zero();
    for (int s = m - 1; s >= 0; --s) {
        g.segment<3>(3 * s) = (tail + 0.5 * G.row(s)).transpose();
        tail += G.row(s);
    }
    return g;
}

}  // namespace

Mat anti_development(const BridgeEnsemble& b, const Mat& path) { return develop(b, path, 0).db; }

CylinderFunction linear_functional(const BridgeEnsemble& b, const Vec& phi, double scale) {
    require(phi.size() == 3 * b.m, "phi must have 3 m entries (cell-major)");
    require(scale > 0.0, "scale must be positive");
    const double rs = std::sqrt(scale), d = b.d, kappa = curvature(b.space);
    const int m = b.m;
    CylinderFunction F;
    F.value = [=](const Mat&, const Mat& db) {
        double acc = 0.0, drift = 0.0;
        for (int k = 0; k < m; ++k) {
            acc += phi.segment<3>(3 * k).dot(db.row(k).transpose());
            drift += phi(3 * k) * d;
        }
        return rs * (acc - drift / m);
    };
    F.dprime = [=](const Mat&, const Mat& db) -> Vec { return rs * (phi + curvature_correction(db, phi, kappa)); };
    return F;
}

CylinderFunction midpoint_radius_function(const BridgeEnsemble& b, std::function<double(double)> g,
                                          std::function<double(double)> dg) {
    const int m = b.m, k = b.m / 2;
    const BridgeEnsemble meta = [&] {
        BridgeEnsemble e;
        e.space = b.space;
        e.m = b.m;
        e.d = b.d;
        e.lambda = b.lambda;
        return e;
    }();
    CylinderFunction F;
    F.value = [=](const Mat& path, const Mat&) { return g(path.row(k).norm()); };
    F.dprime = [=](const Mat& path, const Mat&) -> Vec {
        const Development dev = develop(meta, path, k);
        const double r = path.row(k).norm();
        Vec coef(3);
        if (r == 0.0) {
            coef.setZero();
        } else if (meta.space == Space::Flat3) {
            coef = dev.frame.transpose() * (path.row(k).transpose() / r);
        } else {
            const Eigen::RowVector3d w = path.row(k) / r;
            Vec4 grad;
            grad << std::sinh(r), std::cosh(r) * w(0), std::cosh(r) * w(1), std::cosh(r) * w(2);
            for (int i = 0; i < 3; ++i) coef(i) = minkowski(grad, dev.frame.col(i));
        }
        Vec v = Vec::Zero(3 * m);
        for (int c = 0; c < k; ++c) v.segment<3>(3 * c) = dg(r) * coef;
        return v;
    };
    return F;
}

CylinderFunction constant_functional(double c) {
    CylinderFunction F;
    F.value = [c](const Mat&, const Mat&) { return c; };
    F.dprime = [](const Mat&, const Mat& db) -> Vec { return Vec::Zero(3 * db.rows()); };
    return F;
}

namespace {

struct Evaluated {
    std::vector<double> f, energy;
    std::vector<Vec> v;  // projected derivative
};

Evaluated evaluate(const BridgeEnsemble& b, const CylinderFunction& F, bool keep_v) {
    Evaluated e;
    for (const auto& path : b.samples) {
        const Mat db = anti_development(b, path);
        e.f.push_back(F.value(path, db));
        Vec v = project0(F.dprime(path, db), b.m);
        e.energy.push_back(norm2_grid(v, b.m));
        if (keep_v) e.v.push_back(std::move(v));
    }
    return e;
}

double ess_of(const std::vector<double>& x, int batches) {
    const double v = var_of(x);
    if (v == 0.0) return static_cast<double>(x.size());
    const std::size_t len = x.size() / static_cast<std::size_t>(batches);
    const double sigma2 = static_cast<double>(len) * var_of(batch_means(x, batches));
    return static_cast<double>(x.size()) * v / sigma2;
}

}  // namespace

RayleighResult rayleigh_functional(const BridgeEnsemble& b, const CylinderFunction& F, int batches) {
    require(batches >= 2 && b.size() >= static_cast<std::size_t>(4 * batches), "too few samples for batch means");
    const Evaluated e = evaluate(b, F, false);
    RayleighResult r;
    r.variance = var_of(e.f);
    r.energy = mean_of(e.energy);
    r.quotient = r.energy / (b.lambda * r.variance);
    const std::size_t len = e.f.size() / static_cast<std::size_t>(batches);
    std::vector<double> q;
    for (int k = 0; k < batches; ++k) {
        std::vector<double> fb(e.f.begin() + k * len, e.f.begin() + (k + 1) * len);
        std::vector<double> eb(e.energy.begin() + k * len, e.energy.begin() + (k + 1) * len);
        q.push_back(mean_of(eb) / (b.lambda * var_of(fb)));
    }
    r.se = std::sqrt(var_of(q) / batches);
    std::vector<double> f2;
    const double mu = mean_of(e.f);
    for (double x : e.f) f2.push_back((x - mu) * (x - mu));
    r.ess = std::min(ess_of(e.f, batches), ess_of(f2, batches));
    return r;
}

RayleighResult rayleigh_trial(const BridgeEnsemble& b, const Vec& phi, int batches) {
    RayleighResult r = rayleigh_functional(b, linear_functional(b, phi, b.lambda), batches);
    // flag when the sampled curvature correction outweighs the deterministic term
    const Vec base = project0(phi, b.m);
    std::vector<double> corr;
    for (const auto& path : b.samples)
        corr.push_back(norm2_grid(project0(curvature_correction(anti_development(b, path), phi, curvature(b.space)), b.m), b.m));
    r.curvature_dominates = mean_of(corr) > norm2_grid(base, b.m);
    return r;
}

PoincareResult poincare_check(const BridgeEnsemble& b, const CylinderFunction& F, const ops::OperatorSet& ops,
                              double envelope, int batches) {
    require(ops.grid.m == b.m && ops.grid.n == 3, "operator grid must match the bridge (m cells, n = 3)");
    require(envelope >= 0.0, "envelope must be nonnegative");
    require(batches >= 2 && b.size() >= static_cast<std::size_t>(4 * batches), "too few samples for batch means");
    const Evaluated e = evaluate(b, F, true);
    std::vector<double> rhs, rhs0;
    for (const auto& v : e.v) {
        const double a = std::sqrt(norm2_grid(ops.S_inv_star * v, b.m)), nv = std::sqrt(norm2_grid(v, b.m));
        rhs.push_back((a + envelope * nv) * (a + envelope * nv));
        rhs0.push_back(a * a);
    }
    PoincareResult p;
    p.lhs = b.lambda * var_of(e.f);
    p.rhs = mean_of(rhs);
    p.rhs_plain = mean_of(rhs0);
    p.margin = p.rhs - p.lhs;
    const std::size_t len = e.f.size() / static_cast<std::size_t>(batches);
    std::vector<double> mb;
    for (int k = 0; k < batches; ++k) {
        std::vector<double> fb(e.f.begin() + k * len, e.f.begin() + (k + 1) * len);
        std::vector<double> rb(rhs.begin() + k * len, rhs.begin() + (k + 1) * len);
        mb.push_back(mean_of(rb) - b.lambda * var_of(fb));
    }
    p.se = std::sqrt(var_of(mb) / batches);
    p.violated = p.lhs > p.rhs + 3.0 * p.se;
    return p;
}

// ---------------------------------------------------------------- explicit lower bound

double lower_bound_radius(const LowerBoundInputs& in) {
    require(in.alpha > 0.0 && in.beta > 0.0 && in.r0 > 0.0, "alpha, beta, r0 must be positive");
    const double a = in.alpha, b = in.beta;
    return std::max({std::sqrt(2.0 / b), 192.0 * a / std::sqrt(b), 48.0 * std::sqrt(a / b), in.r0});
}

double gap_lower_bound(const LowerBoundInputs& in) {
    const double R = lower_bound_radius(in);
    return 0.25 * std::min(1.0 / (8.0 * in.alpha * R * R), in.beta / (36.0 * in.alpha));
}

// ---------------------------------------------------------------- CSV

std::string radial_csv_header() { return "profile,n,lambda,m,P,seed,d,drift_shift,dominance_fraction,flagged,max_abs_gap,mean_max_y"; }

std::string radial_csv_row(const RadialPathEnsemble& e) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%d,%.12g,%d,%d,%llu,%.12g,%.12g,%.12g,%zu,%.12g,%.12g", e.profile_tag.c_str(), e.n,
                  e.lambda, e.m, e.P, static_cast<unsigned long long>(e.seed), e.d, e.drift_shift, e.dominance_fraction(),
                  e.flagged(), e.max_abs_gap(), e.mean_max_y());
    return buf;
}

std::string tail_csv_header() { return "profile,lambda,r,prob,count,reliable,slope,C2"; }

std::string tail_csv_row(const RadialPathEnsemble& e, const TailRow& r, const TailFit& f) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.12g,%.12g,%.12g,%zu,%d,%.12g,%.12g", e.profile_tag.c_str(), e.lambda, r.r, r.prob,
                  r.count, r.reliable ? 1 : 0, f.slope, f.C2);
    return buf;
}

std::string rayleigh_csv_header() { return "space,lambda,m,d,samples,acceptance,variance,energy,quotient,se,ess"; }

std::string rayleigh_csv_row(const BridgeEnsemble& b, const RayleighResult& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.12g,%d,%.12g,%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g", space_name(b.space).c_str(),
                  b.lambda, b.m, b.d, b.size(), b.acceptance, r.variance, r.energy, r.quotient, r.se, r.ess);
    return buf;
}

}  // namespace gaplab::diffusion
