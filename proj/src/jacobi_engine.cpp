#include "gaplab/jacobi_engine.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <sstream>

namespace gaplab::jacobi {

Mat orth_projector(int n) {
    Mat p = Mat::Identity(n, n);
    if (n >= 2) p(0, 0) = 0.0;  // direction 0 is the geodesic itself
    return p;
}

GeodesicData constant_curvature(int n, double d, double kappa) {
    require(n >= 1, "dimension must be positive");
    require(d > 0.0, "distance must be positive");
    GeodesicData g;
    g.n = n;
    g.d = d;
    const Mat r = kappa * d * d * orth_projector(n);
    g.R = [r](double) { return r; };
    std::ostringstream os;
    os << "const(" << kappa << ")";
    g.tag = os.str();
    return g;
}

GeodesicData from_profile(const geometry::RadialProfile& p, int n, double d) {
    require(n >= 2, "a radial geodesic needs n >= 2");
    require(d > 0.0, "distance must be positive");
    GeodesicData g;
    g.n = n;
    g.d = d;
    const Mat proj = orth_projector(n);
    g.R = [p, proj, d](double t) -> Mat {
        const double r = std::max(0.0, (1.0 - t) * d);
        return d * d * geometry::radial_curvature(p, r) * proj;
    };
    g.tag = p.tag();
    return g;
}

namespace {

double cond2(const Mat& w) {
    Eigen::JacobiSVD<Mat> svd(w);
    const auto& s = svd.singularValues();
    const double lo = s(s.size() - 1);
    return lo > 0.0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

Mat rev_derivative(const GeodesicData& geo) {
    const double h = 1e-4;
    return (-3.0 * geo.R_rev(0.0) + 4.0 * geo.R_rev(h) - geo.R_rev(2.0 * h)) / (2.0 * h);
}

void check_steps(int steps) { require(steps >= 128, "steps must be at least 128"); }

}  // namespace

JacobiSolution solve_jacobi(const GeodesicData& geo, int steps) {
    check_steps(steps);
    const int n = geo.n;
    const double h = 1.0 / steps;
    JacobiSolution sol;
    sol.n = n;
    sol.steps = steps;
    sol.t.resize(steps + 1);
    sol.W.resize(steps + 1);
    sol.Wp.resize(steps + 1);
    sol.A_direct.resize(steps + 1);
    Mat w = Mat::Zero(n, n), wp = Mat::Identity(n, n);
    sol.t[0] = 0.0;
    sol.W[0] = w;
    sol.Wp[0] = wp;
    sol.A_direct[0] = Mat::Identity(n, n);
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const Mat r0 = geo.R_rev(t), r1 = geo.R_rev(t + h / 2), r2 = geo.R_rev(t + h);
        const Mat k1w = wp, k1p = -r0 * w;
        const Mat k2w = wp + h / 2 * k1p, k2p = -r1 * (w + h / 2 * k1w);
        const Mat k3w = wp + h / 2 * k2p, k3p = -r1 * (w + h / 2 * k2w);
        const Mat k4w = wp + h * k3p, k4p = -r2 * (w + h * k3w);
        w += h / 6 * (k1w + 2 * k2w + 2 * k3w + k4w);
        wp += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
        const double tn = (k + 1) * h;
        // det W > 0 for small t; a sign change means the grid stepped over a conjugate point
        if (!w.allFinite() || cond2(w) > kConjugateCond || w.determinant() <= 0.0) {
            std::ostringstream os;
            os << "Jacobi matrix numerically singular at t = " << tn << " (conjugate point)";
            throw NumericFailure(os.str());
        }
        sol.t[k + 1] = tn;
        sol.W[k + 1] = w;
        sol.Wp[k + 1] = wp;
        sol.A_direct[k + 1] = tn * wp * w.inverse();
    }
    sol.t[steps] = 1.0;
    return sol;
}

std::vector<Mat> riccati_A(const GeodesicData& geo, int steps) {
    check_steps(steps);
    const int n = geo.n;
    const double h = 1.0 / steps;
    const Mat id = Mat::Identity(n, n);
    std::vector<Mat> a(steps + 1);
    a[0] = id;
    const double t0 = h;
    // series start; the cubic term keeps the seed error below the RK4 error
    a[1] = id - t0 * t0 * geo.R_rev(0.0) / 3.0 - t0 * t0 * t0 * rev_derivative(geo) / 4.0;
    auto rhs = [&](double t, const Mat& x) -> Mat { return -t * geo.R_rev(t) - (x * x - x) / t; };
    for (int k = 1; k < steps; ++k) {
        const double t = k * h;
        const Mat& x = a[k];
        const Mat k1 = rhs(t, x);
        const Mat k2 = rhs(t + h / 2, x + h / 2 * k1);
        const Mat k3 = rhs(t + h / 2, x + h / 2 * k2);
        const Mat k4 = rhs(t + h, x + h * k3);
        a[k + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!a[k + 1].allFinite() || a[k + 1].norm() > 1e12) {
            std::ostringstream os;
            os << "Riccati solution blew up at t = " << (k + 1) * h << " (conjugate point)";
            throw NumericFailure(os.str());
        }
    }
    return a;
}

Mat ntil_from_A(const GeodesicData& geo, const Mat& A, double s) {
    if (s < 1e-3) {
        // (I - A(s))/s with A(s) = I - s^2 R0/3 - s^3 R0'/4 + O(s^4)
        return s * geo.R_rev(0.0) / 3.0 + s * s * rev_derivative(geo) / 4.0;
    }
    return (Mat::Identity(geo.n, geo.n) - A) / s;
}

double max_asymmetry(const std::vector<Mat>& A) {
    double worst = 0.0;
    for (const auto& a : A) worst = std::max(worst, operator_norm(Mat(a - a.transpose())));
    return worst;
}

double riccati_direct_gap(const JacobiSolution& sol, double delta) {
    double worst = 0.0;
    for (int k = 1; k <= sol.steps; ++k)
        if (sol.t[k] > delta) worst = std::max(worst, operator_norm(Mat(sol.A[k] - sol.A_direct[k])));
    return worst;
}

JacobiSolution build_KNM(const GeodesicData& geo, int steps) {
    JacobiSolution sol = solve_jacobi(geo, steps);
    sol.A = riccati_A(geo, steps);
    sol.max_asym = max_asymmetry(sol.A);
    const int n = geo.n;
    const double h = 1.0 / steps;
    const Mat id = Mat::Identity(n, n);
    sol.K.resize(steps + 1);
    sol.Ntil.resize(steps + 1);
    for (int k = 0; k <= steps; ++k) {
        const double s = 1.0 - sol.t[k];
        const Mat& a = sol.A[steps - k];
        if (k == steps) {
            sol.K[k] = Mat::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
            sol.Ntil[k] = Mat::Zero(n, n);
        } else {
            sol.K[k] = -a / s;
            sol.Ntil[k] = ntil_from_A(geo, a, s);
        }
    }
    // N' = Ntil N with half-step values from cubic interpolation of the grid
    auto half = [&](int k) -> Mat {
        const auto& v = sol.Ntil;
        if (k == 0) return (5 * v[0] + 15 * v[1] - 5 * v[2] + v[3]) / 16.0;
        if (k == steps - 1) return (v[k - 2] - 5 * v[k - 1] + 15 * v[k] + 5 * v[k + 1]) / 16.0;
        return (-v[k - 1] + 9 * v[k] + 9 * v[k + 1] - v[k + 2]) / 16.0;
    };
    sol.N.resize(steps + 1);
    sol.M.resize(steps + 1);
    sol.N[0] = id;
    for (int k = 0; k < steps; ++k) {
        const Mat& x = sol.N[k];
        const Mat mid = half(k);
        const Mat k1 = sol.Ntil[k] * x;
        const Mat k2 = mid * (x + h / 2 * k1);
        const Mat k3 = mid * (x + h / 2 * k2);
        const Mat k4 = sol.Ntil[k + 1] * (x + h * k3);
        sol.N[k + 1] = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const Mat w1inv = sol.W[steps].inverse();
    sol.m_consistency = 0.0;
    for (int k = 0; k <= steps; ++k) {
        sol.M[k] = (1.0 - sol.t[k]) * sol.N[k];
        const Mat ref = sol.W[steps - k] * w1inv * sol.M[0];
        sol.m_consistency = std::max(sol.m_consistency, operator_norm(Mat(sol.M[k] - ref)));
    }
    sol.has_knm = true;
    return sol;
}

std::string jacobi_csv(const JacobiSolution& sol) {
    require(sol.has_knm, "jacobi_csv needs K, N, M");
    std::ostringstream os;
    const int n = sol.n;
    os << "t";
    for (const char* name : {"A", "K", "N", "M"})
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) os << ',' << name << i << j;
    os << '\n';
    char buf[64];
    for (int k = 0; k <= sol.steps; ++k) {
        std::snprintf(buf, sizeof buf, "%.12g", sol.t[k]);
        os << buf;
        for (const Mat* m : {&sol.A[k], &sol.K[k], &sol.N[k], &sol.M[k]})
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    std::snprintf(buf, sizeof buf, ",%.12g", (*m)(i, j));
                    os << buf;
                }
        os << '\n';
    }
    return os.str();
}

}  // namespace gaplab::jacobi
