#include "gaplab/semiclassical_fd.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/trapezoidal.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

namespace gaplab::semiclassical {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using boost::math::quadrature::gauss_kronrod;
constexpr double kInf = std::numeric_limits<double>::infinity();

Vec point(double a) { return Vec::Constant(1, a); }
Vec point(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

WeightedPotential WeightedPotential::ou(int N) {
    require(N == 1 || N == 2, "potentials are supported for N = 1 or 2");
    WeightedPotential p;
    p.N = N;
    p.name = "ou";
    p.E = [](const Vec& x) { return 0.5 * x.squaredNorm(); };
    p.grad = [](const Vec& x) -> Vec { return x; };
    p.hess = [N](const Vec&) -> Mat { return Mat::Identity(N, N); };
    p.hess0 = Mat::Identity(N, N);
    return p;
}

WeightedPotential WeightedPotential::quartic() {
    WeightedPotential p;
    p.N = 1;
    p.name = "quartic";
    p.E = [](const Vec& x) { const double a = x(0) * x(0); return 0.5 * a + 0.25 * a * a; };
    p.grad = [](const Vec& x) -> Vec { return point(x(0) + x(0) * x(0) * x(0)); };
    p.hess = [](const Vec& x) -> Mat { return Mat::Constant(1, 1, 1.0 + 3.0 * x(0) * x(0)); };
    p.hess0 = Mat::Identity(1, 1);
    return p;
}

WeightedPotential WeightedPotential::aniso(std::vector<double> diag) {
    require(diag.size() == 1 || diag.size() == 2, "aniso needs 1 or 2 diagonal entries");
    Vec d = Eigen::Map<Vec>(diag.data(), static_cast<Eigen::Index>(diag.size()));
    require(d.minCoeff() > 0.0, "aniso diagonal must be positive");
    WeightedPotential p;
    p.N = static_cast<int>(d.size());
    p.name = "aniso";
    p.E = [d](const Vec& x) { return 0.5 * x.dot(d.cwiseProduct(x)); };
    p.grad = [d](const Vec& x) -> Vec { return d.cwiseProduct(x); };
    p.hess = [d](const Vec&) -> Mat { return d.asDiagonal(); };
    p.hess0 = d.asDiagonal();
    return p;
}

WeightedPotential WeightedPotential::polynomial(std::vector<double> c) {
    require(c.size() >= 3, "polynomial needs coefficients up to degree 2 at least");
    require(c[0] == 0.0 && c[1] == 0.0, "polynomial needs c0 = c1 = 0 (E(0) = 0, critical point at 0)");
    require(c[2] > 0.0, "polynomial needs c2 > 0");
    auto eval = [c](double x, int order) {
        double acc = 0.0;
        for (std::size_t k = order; k < c.size(); ++k) {
            double coef = c[k];
            for (int q = 0; q < order; ++q) coef *= static_cast<double>(k - q);
            acc += coef * std::pow(x, static_cast<double>(k - order));
        }
        return acc;
    };
    WeightedPotential p;
    p.N = 1;
    p.name = "polynomial";
    p.E = [eval](const Vec& x) { return eval(x(0), 0); };
    p.grad = [eval](const Vec& x) -> Vec { return point(eval(x(0), 1)); };
    p.hess = [eval](const Vec& x) -> Mat { return Mat::Constant(1, 1, eval(x(0), 2)); };
    p.hess0 = Mat::Constant(1, 1, 2.0 * c[2]);
    return p;
}

WeightedPotential WeightedPotential::from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("preset") && j["preset"].is_string(), "potential needs a string 'preset'");
    const std::string preset = j["preset"];
    WeightedPotential p;
    if (preset == "ou") {
        const int n = j.value("N", 1);
        p = ou(n);
    } else if (preset == "quartic") {
        p = quartic();
    } else if (preset == "aniso") {
        require(j.contains("diag") && j["diag"].is_array(), "aniso needs a 'diag' array");
        p = aniso(j["diag"].get<std::vector<double>>());
    } else if (preset == "polynomial") {
        require(j.contains("coefficients") && j["coefficients"].is_array(), "polynomial needs 'coefficients'");
        p = polynomial(j["coefficients"].get<std::vector<double>>());
    } else {
        throw InvalidInput("unknown potential preset '" + preset + "'");
    }
    if (j.contains("L")) p.L = j["L"].get<double>();
    if (j.contains("cells")) p.cells = j["cells"].get<int>();
    return p;
}

double WeightedPotential::sigma1() const {
    Eigen::SelfAdjointEigenSolver<Mat> es(hess0);
    return es.eigenvalues()(0);
}

namespace {

// Sample points on the boundary of [-L, L]^N.
std::vector<Vec> boundary_points(int N, double L) {
    std::vector<Vec> pts;
    if (N == 1) return {point(-L), point(L)};
    const int k = 200;
    for (int i = 0; i <= k; ++i) {
        const double s = -L + 2.0 * L * i / k;
        pts.push_back(point(s, -L));
        pts.push_back(point(s, L));
        pts.push_back(point(-L, s));
        pts.push_back(point(L, s));
    }
    return pts;
}

double boundary_min(const WeightedPotential& pot, double L) {
    double m = kInf;
    for (const auto& x : boundary_points(pot.N, L)) m = std::min(m, pot.E(x));
    return m;
}

}  // namespace

void WeightedPotential::validate(double box) const {
    require(N == 1 || N == 2, "potentials are supported for N = 1 or 2");
    require(std::abs(E(Vec::Zero(N))) <= 1e-14, "E(0) must be 0");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (hess0 + hess0.transpose()));
    require(es.eigenvalues()(0) > 0.0, "D^2E(0) must be positive definite");
    const int k = (N == 1) ? 400 : 40;
    for (int i = 0; i <= k; ++i)
        for (int j = 0; j <= (N == 1 ? 0 : k); ++j) {
            Vec x = (N == 1) ? point(-box + 2 * box * i / k) : point(-box + 2 * box * i / k, -box + 2 * box * j / k);
            if (x.norm() < 1e-12 * box) continue;
            require(E(x) > 0.0, "E must be positive away from 0 (unique minimum)");
        }
    require(boundary_min(*this, box) > 0.0, "E must stay positive on the box boundary");
}

double auto_box(const WeightedPotential& pot, double lambda) {
    require(lambda > 0.0, "lambda must be positive");
    const double target = 36.0 / lambda;
    double lo = 0.0, hi = 1e-3;
    while (boundary_min(pot, hi) < target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e4) throw InvalidInput("potential does not grow enough to pick a box");
    }
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (boundary_min(pot, mid) < target ? lo : hi) = mid;
    }
    return hi;
}

namespace {

struct EigenPairs {
    std::vector<double> values;
    double residual = 0.0;
};

// Lowest `want` eigenvalues of a sparse SPD-up-to-shift matrix: shift-invert subspace iteration
// with Rayleigh-Ritz.
EigenPairs lowest_eigs(const SpMat& a, int want, double shift) {
    const Eigen::Index n = a.rows();
    const int p = std::min<Eigen::Index>(want + 6, n);
    SpMat id(n, n);
    id.setIdentity();
    Eigen::SimplicialLLT<SpMat> llt;
    double sigma = shift;
    for (int attempt = 0;; ++attempt) {
        llt.compute(a - sigma * id);
        if (llt.info() == Eigen::Success) break;
        if (attempt == 8) throw NumericFailure("shifted factorization failed");
        sigma = 4.0 * sigma - 1.0;
    }
    std::mt19937_64 gen(12345);
    std::normal_distribution<double> nd;
    Mat x(n, p);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(gen);
    Vec theta;
    EigenPairs out;
    for (int it = 0; it < 500; ++it) {
        Mat y = llt.solve(x);
        Eigen::HouseholderQR<Mat> qr(y);
        Mat q = qr.householderQ() * Mat::Identity(n, p);
        Mat aq = a * q;
        Mat hm = q.transpose() * aq;
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (hm + hm.transpose()));
        theta = es.eigenvalues();
        x = q * es.eigenvectors();
        Mat ax = aq * es.eigenvectors();
        double res = 0.0, scale = 1.0;
        for (int i = 0; i < want; ++i) {
            res = std::max(res, (ax.col(i) - theta(i) * x.col(i)).norm());
            scale = std::max(scale, std::abs(theta(i)));
        }
        out.residual = res;
        if (res <= 1e-10 * scale) break;
        if (it == 499) throw NumericFailure("subspace iteration did not converge");
    }
    for (int i = 0; i < want; ++i) out.values.push_back(theta(i));
    return out;
}

struct Grid {
    int N, cells;
    double L, h;
    Eigen::Index size() const { return N == 1 ? cells : static_cast<Eigen::Index>(cells) * cells; }
    Vec node(Eigen::Index j) const {
        if (N == 1) return point(-L + (static_cast<double>(j) + 0.5) * h);
        const Eigen::Index j1 = j % cells, j2 = j / cells;
        return point(-L + (static_cast<double>(j1) + 0.5) * h, -L + (static_cast<double>(j2) + 0.5) * h);
    }
    // neighbor along axis a in the + direction, or -1
    Eigen::Index next(Eigen::Index j, int a) const {
        if (a == 0) return (j % cells + 1 < cells) ? j + 1 : -1;
        return (j / cells + 1 < cells) ? j + cells : -1;
    }
};

SpMat divergence_form(const WeightedPotential& pot, double lambda, const Grid& g) {
    const Eigen::Index n = g.size();
    std::vector<double> e(n);
    for (Eigen::Index j = 0; j < n; ++j) e[j] = pot.E(g.node(j));
    std::vector<Eigen::Triplet<double>> trip;
    Vec diag = Vec::Zero(n);
    const double ih2 = 1.0 / (g.h * g.h);
    for (Eigen::Index j = 0; j < n; ++j)
        for (int a = 0; a < g.N; ++a) {
            const Eigen::Index k = g.next(j, a);
            if (k < 0) continue;  // no flux through the box boundary
            Vec mid = g.node(j);
            mid(a) += 0.5 * g.h;
            const double em = pot.E(mid);
            // weights relative to the cell weights, computed in the exponent
            diag(j) += ih2 * std::exp(-lambda * (em - e[j]));
            diag(k) += ih2 * std::exp(-lambda * (em - e[k]));
            const double off = -ih2 * std::exp(-lambda * (em - 0.5 * (e[j] + e[k])));
            trip.emplace_back(j, k, off);
            trip.emplace_back(k, j, off);
        }
    for (Eigen::Index j = 0; j < n; ++j) trip.emplace_back(j, j, diag(j));
    SpMat a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

SpMat schrodinger_form(const WeightedPotential& pot, double lambda, const Grid& g) {
    const Eigen::Index n = g.size();
    std::vector<Eigen::Triplet<double>> trip;
    const double ih2 = 1.0 / (g.h * g.h);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Vec x = g.node(j);
        const double v = 0.25 * lambda * lambda * pot.grad(x).squaredNorm() - 0.5 * lambda * pot.laplacian(x);
        trip.emplace_back(j, j, 2.0 * g.N * ih2 + v);  // Dirichlet: missing neighbors are zero
        for (int a = 0; a < g.N; ++a) {
            const Eigen::Index k = g.next(j, a);
            if (k < 0) continue;
            trip.emplace_back(j, k, -ih2);
            trip.emplace_back(k, j, -ih2);
        }
    }
    SpMat a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

}  // namespace

GapResult spectral_gap(const WeightedPotential& pot, double lambda, GapOptions opt) {
    require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
    const double L = opt.L > 0 ? opt.L : (pot.L > 0 ? pot.L : auto_box(pot, lambda));
    const int cells = opt.cells > 0 ? opt.cells : (pot.cells > 0 ? pot.cells : (pot.N == 1 ? 512 : 128));
    require(cells >= 16, "need at least 16 cells per axis");
    pot.validate(L);
    GapResult r;
    r.lambda = lambda;
    r.L = L;
    r.cells = cells;
    r.h = 2.0 * L / cells;
    r.outside_mass = tail_mass(pot, lambda, L);
    if (r.outside_mass > 1e-8) throw InvalidInput("box too small: mass outside exceeds 1e-8");

    const Grid g{pot.N, cells, L, r.h};
    const double shift = -0.25 * lambda * pot.sigma1();
    auto div = lowest_eigs(divergence_form(pot, lambda, g), 2, shift);
    r.e1 = div.values[0];
    r.e2 = div.values[1] - div.values[0];
    r.residual = div.residual;
    if (std::abs(r.e1) > 1e-8 * lambda) throw NumericFailure("lowest eigenvalue of the weighted form is not ~0");
    r.e2_over_lambda = r.e2 / lambda;
    auto sch = lowest_eigs(schrodinger_form(pot, lambda, g), 2, -lambda * (1.0 + pot.N));
    r.e1_schrodinger = sch.values[0];
    r.e2_schrodinger = sch.values[1] - sch.values[0];
    r.realization_gap = std::abs(r.e2_schrodinger - r.e2) / r.e2;
    return r;
}

Asymptotics gap_asymptotics(const WeightedPotential& pot, const std::vector<double>& lambdas) {
    require(lambdas.size() >= 3, "need at least three lambda values");
    for (std::size_t i = 1; i < lambdas.size(); ++i) require(lambdas[i] > lambdas[i - 1], "lambda list must increase");
    Asymptotics out;
    out.sigma1 = pot.sigma1();
    for (double l : lambdas) out.rows.push_back(spectral_gap(pot, l));
    // Neville: value at x = 0 of the interpolant through (1/lambda_i, e2_i/lambda_i)
    const std::size_t k = lambdas.size();
    std::vector<double> x(k), p(k);
    for (std::size_t i = 0; i < k; ++i) x[i] = 1.0 / lambdas[i], p[i] = out.rows[i].e2_over_lambda;
    for (std::size_t lev = 1; lev < k; ++lev)
        for (std::size_t i = 0; i + lev < k; ++i)
            p[i] = (x[i + lev] * p[i] - x[i] * p[i + 1]) / (x[i + lev] - x[i]);
    out.extrapolated = p[0];
    return out;
}

double laplace_constant(const WeightedPotential& pot, double lambda) {
    require(lambda > 0.0, "lambda must be positive");
    const double L = pot.L > 0 ? pot.L : auto_box(pot, lambda);
    double err = 0.0;
    double z;
    if (pot.N == 1) {
        auto f = [&](double x) { return std::exp(-lambda * pot.E(point(x))); };
        z = gauss_kronrod<double, 31>::integrate(f, -L, 0.0, 15, 1e-13, &err) +
            gauss_kronrod<double, 31>::integrate(f, 0.0, L, 15, 1e-13, &err);
    } else {
        auto inner = [&](double x1) {
            auto f = [&](double x2) { return std::exp(-lambda * pot.E(point(x1, x2))); };
            return gauss_kronrod<double, 31>::integrate(f, -L, 0.0, 12, 1e-12) +
                   gauss_kronrod<double, 31>::integrate(f, 0.0, L, 12, 1e-12);
        };
        z = gauss_kronrod<double, 31>::integrate(inner, -L, 0.0, 12, 1e-12, &err) +
            gauss_kronrod<double, 31>::integrate(inner, 0.0, L, 12, 1e-12, &err);
    }
    if (!std::isfinite(z) || z <= 0.0) throw NumericFailure("quadrature for Z_lambda failed");
    return z * std::pow(lambda / (2.0 * M_PI), 0.5 * pot.N);
}

namespace {

// radial profile of the mass: g(rho) = rho * int_0^{2 pi} exp(-lambda E) dtheta (N = 2)
double shell(const WeightedPotential& pot, double lambda, double rho) {
    if (rho == 0.0) return 0.0;
    auto f = [&](double th) { return std::exp(-lambda * pot.E(point(rho * std::cos(th), rho * std::sin(th)))); };
    return rho * boost::math::quadrature::trapezoidal(f, 0.0, 2.0 * M_PI, 1e-13);
}

double mass_beyond(const WeightedPotential& pot, double lambda, double r) {
    if (pot.N == 1) {
        auto f = [&](double x) { return std::exp(-lambda * pot.E(point(x))); };
        return gauss_kronrod<double, 31>::integrate(f, r, kInf, 15, 1e-13) +
               gauss_kronrod<double, 31>::integrate(f, -kInf, -r, 15, 1e-13);
    }
    auto g = [&](double rho) { return shell(pot, lambda, rho); };
    return gauss_kronrod<double, 31>::integrate(g, r, kInf, 12, 1e-12);
}

double mass_within(const WeightedPotential& pot, double lambda, double r) {
    if (r <= 0.0) return 0.0;
    if (pot.N == 1) {
        auto f = [&](double x) { return std::exp(-lambda * pot.E(point(x))); };
        return gauss_kronrod<double, 31>::integrate(f, -r, 0.0, 15, 1e-13) +
               gauss_kronrod<double, 31>::integrate(f, 0.0, r, 15, 1e-13);
    }
    auto g = [&](double rho) { return shell(pot, lambda, rho); };
    return gauss_kronrod<double, 31>::integrate(g, 0.0, r, 12, 1e-12);
}

}  // namespace

double tail_mass(const WeightedPotential& pot, double lambda, double r) {
    require(lambda > 0.0 && r >= 0.0, "tail_mass needs lambda > 0 and r >= 0");
    // normalize with a split at the natural width so both parts are well resolved
    const double w = 1.0 / std::sqrt(lambda * pot.sigma1());
    const double cut = std::max(r, w);
    const double z = mass_within(pot, lambda, cut) + mass_beyond(pot, lambda, cut);
    const double tail = (r >= cut) ? mass_beyond(pot, lambda, r) : z - mass_within(pot, lambda, r);
    return std::clamp(tail / z, 0.0, 1.0);
}

double tail_decay_rate(const WeightedPotential& pot, const std::vector<double>& lambdas, double r) {
    require(lambdas.size() >= 2, "need at least two lambda values");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double k = static_cast<double>(lambdas.size());
    for (double l : lambdas) {
        const double y = -std::log(tail_mass(pot, l, r));
        sx += l, sy += y, sxx += l * l, sxy += l * y;
    }
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

double min_on_sphere(const WeightedPotential& pot, double r) {
    if (pot.N == 1) return std::min(pot.E(point(r)), pot.E(point(-r)));
    double m = kInf;
    for (int i = 0; i < 720; ++i) {
        const double th = 2.0 * M_PI * i / 720;
        m = std::min(m, pot.E(point(r * std::cos(th), r * std::sin(th))));
    }
    return m;
}

namespace {

// Composite 10-point Gauss-Legendre nodes on [-L, L]^N with normalized nu^lambda weights.
struct BoxQuad {
    Mat x;  // N x Q
    Vec w;  // sums to 1
};

BoxQuad make_box_quad(const WeightedPotential& pot, double lambda, double L, int panels) {
    using GL = boost::math::quadrature::gauss<double, 10>;
    std::vector<double> t, wt;
    for (std::size_t i = 0; i < GL::abscissa().size(); ++i) {
        const double a = GL::abscissa()[i], b = GL::weights()[i];
        t.push_back(a), wt.push_back(b);
        if (a != 0.0) t.push_back(-a), wt.push_back(b);
    }
    std::vector<double> nodes, weights;
    const double pw = 2.0 * L / panels;
    for (int p = 0; p < panels; ++p) {
        const double c = -L + (p + 0.5) * pw;
        for (std::size_t i = 0; i < t.size(); ++i) nodes.push_back(c + 0.5 * pw * t[i]), weights.push_back(0.5 * pw * wt[i]);
    }
    const Eigen::Index q1 = static_cast<Eigen::Index>(nodes.size());
    const Eigen::Index q = pot.N == 1 ? q1 : q1 * q1;
    BoxQuad bq{Mat(pot.N, q), Vec(q)};
    for (Eigen::Index j = 0; j < q; ++j) {
        Vec x;
        double w;
        if (pot.N == 1) {
            x = point(nodes[j]);
            w = weights[j];
        } else {
            x = point(nodes[j % q1], nodes[j / q1]);
            w = weights[j % q1] * weights[j / q1];
        }
        bq.x.col(j) = x;
        bq.w(j) = w * std::exp(-lambda * pot.E(x));
    }
    bq.w /= bq.w.sum();
    return bq;
}

int default_panels(int N) { return N == 1 ? 200 : 48; }

double hermite(int k, double x) {
    double a = 1.0, b = x;  // He_0, He_1
    if (k == 0) return a;
    for (int i = 1; i < k; ++i) {
        const double c = x * b - i * a;
        a = b;
        b = c;
    }
    return b;
}

double smoothstep(double y) {
    if (y <= 0) return 0;
    if (y >= 1) return 1;
    return y * y * y * (10 - 15 * y + 6 * y * y);
}
double smoothstep_d(double y) {
    if (y <= 0 || y >= 1) return 0;
    return 30 * y * y * (1 - y) * (1 - y);
}

}  // namespace

double box_expectation(const WeightedPotential& pot, double lambda, double L, const std::function<double(const Vec&)>& g) {
    const BoxQuad bq = make_box_quad(pot, lambda, L, default_panels(pot.N));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < bq.w.size(); ++j) acc += bq.w(j) * g(bq.x.col(j));
    return acc;
}

TestFunction constant_function(double c) {
    return {[c](const Vec&) { return c; }, [](const Vec& x) -> Vec { return Vec::Zero(x.size()); }, "const"};
}

std::vector<TestFunction> hermite_family(const WeightedPotential& pot, double lambda, int max_degree) {
    const double s = std::sqrt(lambda);
    const double L = pot.L > 0 ? pot.L : auto_box(pot, lambda);
    const double r0 = 0.6 * L, r1 = 0.9 * L;
    // radial cutoff: 1 inside r0, 0 beyond r1
    auto cut = [=](const Vec& x) { return 1.0 - smoothstep((x.norm() - r0) / (r1 - r0)); };
    auto cut_grad = [=](const Vec& x) -> Vec {
        const double r = x.norm();
        if (r == 0.0) return Vec::Zero(x.size());
        return -smoothstep_d((r - r0) / (r1 - r0)) / (r1 - r0) * x / r;
    };
    std::vector<TestFunction> fam;
    for (int k = 0; k <= max_degree; ++k)
        for (int l = 0; l <= (pot.N == 2 ? max_degree - k : 0); ++l) {
            TestFunction tf;
            tf.label = "He" + std::to_string(k) + (pot.N == 2 ? "," + std::to_string(l) : "");
            tf.f = [=](const Vec& x) {
                double v = hermite(k, s * x(0));
                if (x.size() == 2) v *= hermite(l, s * x(1));
                return v * cut(x);
            };
            tf.grad = [=](const Vec& x) -> Vec {
                double p = hermite(k, s * x(0)), q = (x.size() == 2) ? hermite(l, s * x(1)) : 1.0;
                Vec g(x.size());
                g(0) = (k > 0 ? k * s * hermite(k - 1, s * x(0)) : 0.0) * q;
                if (x.size() == 2) g(1) = p * (l > 0 ? l * s * hermite(l - 1, s * x(1)) : 0.0);
                return g * cut(x) + p * q * cut_grad(x);
            };
            fam.push_back(tf);
        }
    return fam;
}

GnsResult gns_check(const WeightedPotential& pot, double lambda, const std::function<double(const Vec&)>& V,
                    const std::vector<TestFunction>& family) {
    require(lambda > 0.0, "lambda must be positive");
    const double L = pot.L > 0 ? pot.L : auto_box(pot, lambda);
    GnsResult out;
    // Bakry-Emery: D^2(lambda E) >= lambda rho gives Ent(F^2) <= (2/(lambda rho)) E(F,F)
    double rho = kInf;
    const int k = pot.N == 1 ? 400 : 60;
    for (int i = 0; i <= k; ++i)
        for (int j = 0; j <= (pot.N == 1 ? 0 : k); ++j) {
            Vec x = (pot.N == 1) ? point(-L + 2 * L * i / k) : point(-L + 2 * L * i / k, -L + 2 * L * j / k);
            Eigen::SelfAdjointEigenSolver<Mat> es(pot.hess(x), Eigen::EigenvaluesOnly);
            rho = std::min(rho, es.eigenvalues()(0));
        }
    if (rho <= 0.0) {
        out.skipped = true;
        return out;
    }
    out.C = 2.0 / rho;
    out.c_sigma_ge_2 = out.C * pot.sigma1() >= 2.0 - 1e-12;
    const BoxQuad bq = make_box_quad(pot, lambda, L, default_panels(pot.N));
    const Eigen::Index q = bq.w.size();
    Vec v(q);
    for (Eigen::Index j = 0; j < q; ++j) v(j) = V(bq.x.col(j));
    const double log_mgf = std::log(bq.w.dot((-out.C * v / lambda).array().exp().matrix()));
    for (const auto& F : family) {
        double energy = 0, pot_term = 0, norm2 = 0;
        for (Eigen::Index j = 0; j < q; ++j) {
            const Vec x = bq.x.col(j);
            const double f = F.f(x);
            energy += bq.w(j) * F.grad(x).squaredNorm();
            pot_term += bq.w(j) * v(j) * f * f;
            norm2 += bq.w(j) * f * f;
        }
        out.rows.push_back({F.label, energy + pot_term, -(lambda / out.C) * log_mgf * norm2});
    }
    return out;
}

std::vector<std::function<double(const Vec&)>> random_bounded_potentials(int N, double L, int count, std::uint64_t seed) {
    std::vector<std::function<double(const Vec&)>> out;
    for (int k = 0; k < count; ++k) {
        std::mt19937_64 gen(stream_seed(seed, static_cast<std::uint64_t>(k)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        struct Bump {
            Vec c;
            double a, w;
        };
        std::vector<Bump> bumps;
        for (int b = 0; b < 3; ++b) {
            Vec c(N);
            for (int i = 0; i < N; ++i) c(i) = 0.5 * L * u(gen);
            bumps.push_back({c, 4.0 * u(gen), L * (0.1 + 0.2 * std::abs(u(gen)))});
        }
        Vec dir(N);
        for (int i = 0; i < N; ++i) dir(i) = u(gen);
        const double amp = 3.0 * u(gen), shift = 0.3 * L * u(gen), width = 0.05 * L;
        out.push_back([=](const Vec& x) {
            double v = amp / (1.0 + std::exp(-(x.dot(dir) - shift) / width));
            for (const auto& b : bumps) v += b.a * std::exp(-(x - b.c).squaredNorm() / (2 * b.w * b.w));
            return v;
        });
    }
    return out;
}

ImsResult ims_check(const TestFunction& F, ChiPair chi, const WeightedPotential& pot, double lambda) {
    const double L = pot.L > 0 ? pot.L : auto_box(pot, lambda);
    const bool trivial = !(chi.kappa > 0.0);
    // resolve the transition shell [kappa, 2 kappa] with several panels
    int panels = default_panels(pot.N);
    if (!trivial) panels = std::max(panels, std::min(pot.N == 1 ? 20000 : 160, static_cast<int>(std::ceil(8.0 * L / chi.kappa))));
    const BoxQuad bq = make_box_quad(pot, lambda, L, panels);
    const double kappa = chi.kappa;
    ImsResult out;
    double lhs = 0, parts = 0, cross = 0, sup = 0;
    for (Eigen::Index j = 0; j < bq.w.size(); ++j) {
        const Vec x = bq.x.col(j);
        const double f = F.f(x);
        const Vec g = F.grad(x);
        double c0 = 1, c1 = 0;
        Vec d0 = Vec::Zero(x.size()), d1 = Vec::Zero(x.size());
        if (!trivial) {
            const double r = x.norm(), u = r / kappa;
            const double th = 0.5 * M_PI * smoothstep(u - 1.0);
            const double dth = 0.5 * M_PI * smoothstep_d(u - 1.0) / kappa;
            c0 = std::cos(th), c1 = std::sin(th);
            if (r > 0.0) {
                d0 = -std::sin(th) * dth * x / r;
                d1 = std::cos(th) * dth * x / r;
            }
        }
        const double w = bq.w(j);
        const double dchi2 = d0.squaredNorm() + d1.squaredNorm();
        lhs += w * g.squaredNorm();
        parts += w * ((c0 * g + f * d0).squaredNorm() + (c1 * g + f * d1).squaredNorm());
        cross += w * dchi2 * f * f;
        sup = std::max(sup, dchi2);
    }
    out.lhs = lhs;
    out.rhs = parts - cross;
    out.residual = std::abs(out.lhs - out.rhs);
    out.cross_term = cross;
    // sup of theta'(u)^2 / kappa^2 is attained at u = 3/2
    out.cross_sup = trivial ? 0.0 : std::pow(0.5 * M_PI * smoothstep_d(0.5) / kappa, 2);
    (void)sup;
    return out;
}

TrialBound trial_upper_bound(const WeightedPotential& pot, double lambda) {
    require(lambda > 0.0, "lambda must be positive");
    Eigen::SelfAdjointEigenSolver<Mat> es(pot.hess0);
    const double s1 = es.eigenvalues()(0);
    Vec v = es.eigenvectors().col(0);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    const double L = pot.L > 0 ? pot.L : auto_box(pot, lambda);
    const double c = std::sqrt(lambda * s1);
    const double mean = box_expectation(pot, lambda, L, [&](const Vec& x) { return c * x.dot(v); });
    const double m2 = box_expectation(pot, lambda, L, [&](const Vec& x) { return std::pow(c * x.dot(v), 2); });
    TrialBound tb;
    tb.v = v;
    tb.mean = mean;
    tb.norm = std::sqrt(m2);
    tb.energy_over_lambda = c * c * v.squaredNorm() / lambda;
    tb.quotient = tb.energy_over_lambda / (m2 - mean * mean);
    return tb;
}

std::string gap_csv_header() { return "potential,N,lambda,L,h,e2,e2_over_lambda,sigma1"; }

std::string gap_csv_row(const WeightedPotential& pot, const GapResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g", pot.name.c_str(), pot.N, r.lambda, r.L, r.h,
                  r.e2, r.e2_over_lambda, pot.sigma1());
    return buf;
}

}  // namespace gaplab::semiclassical
