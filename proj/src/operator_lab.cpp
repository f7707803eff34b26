#include "gaplab/operator_lab.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <limits>

namespace gaplab::ops {

namespace {

using Blk = Eigen::Block<Mat>;

Blk block(Mat& a, int i, int j, int n) { return a.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>(j) * n, n, n); }

Mat sym(const Mat& a) { return 0.5 * (a + a.transpose()); }

// Apply P0 (remove the mean of each component over the cells).
Vec project0(const GridSpec& g, const Vec& v) {
    Vec mean = Vec::Zero(g.n);
    for (int i = 0; i < g.m; ++i) mean += v.segment(static_cast<Eigen::Index>(i) * g.n, g.n);
    mean /= g.m;
    Vec out = v;
    for (int i = 0; i < g.m; ++i) out.segment(static_cast<Eigen::Index>(i) * g.n, g.n) -= mean;
    return out;
}

// P0 X P0 via block means.
Mat project_both(const GridSpec& g, const Mat& x) {
    const int m = g.m, n = g.n;
    std::vector<Mat> row(m, Mat::Zero(n, n)), col(m, Mat::Zero(n, n));
    Mat total = Mat::Zero(n, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const Mat b = x.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>(j) * n, n, n);
            row[i] += b;
            col[j] += b;
            total += b;
        }
    Mat out = x;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            block(out, i, j, n) -= (row[i] + col[j]) / m - total / (static_cast<double>(m) * m);
    return out;
}

// Symmetric square root and inverse square root through an eigendecomposition.
void sqrt_pair(const Mat& a, Mat& root, Mat& inv_root) {
    Eigen::SelfAdjointEigenSolver<Mat> es(sym(a));
    const Vec& ev = es.eigenvalues();
    if (ev.minCoeff() <= 0.0) throw NumericFailure("metric factor lost positivity; grid too coarse for this geodesic");
    root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
    inv_root = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

// C with C^T C = sym(f_i^T f_{i-1}), C = f_i Y; reduces to sqrt(f_i f_{i-1}) for scalars.
Mat geometric_mean(const Mat& fi, const Mat& fprev) {
    const Mat b = fi.transpose() * fi;
    const Mat gm = sym(fi.transpose() * fprev);
    Mat bh, bih;
    sqrt_pair(b, bh, bih);
    Mat zh, zih;
    sqrt_pair(bih * gm * bih, zh, zih);
    return fi * (bih * zh * bh);
}

void check_grid(const jacobi::JacobiSolution& jac, const GridSpec& g) {
    require(g.m >= 2 && g.n >= 1, "grid needs m >= 2 and n >= 1");
    require(jac.n == g.n, "grid dimension differs from the Jacobi solution");
    if (jac.steps % (2 * g.m) != 0)
        throw InvalidInput("resolution mismatch: Jacobi steps must be a multiple of 2m");
}

}  // namespace

OperatorSet assemble_operators(const jacobi::GeodesicData& geo, const jacobi::JacobiSolution& jac, GridSpec g) {
    check_grid(jac, g);
    const int m = g.m, n = g.n;
    const int stride = jac.steps / m;
    const Eigen::Index dim = g.dim();
    const Mat id = Mat::Identity(n, n);

    std::vector<Mat> f(m + 1), finv(m + 1), c(m + 1), cinv(m + 1);
    for (int k = 0; k <= m; ++k) f[k] = jac.W[jac.steps - k * stride];
    f[m].setZero();
    for (int k = 0; k < m; ++k) finv[k] = f[k].inverse();
    for (int i = 1; i < m; ++i) {
        c[i] = geometric_mean(f[i], f[i - 1]);
        cinv[i] = c[i].inverse();
    }
    c[m] = Mat::Zero(n, n);  // pole cell: S row vanishes

    OperatorSet ops;
    ops.grid = g;
    ops.tag = geo.tag;
    ops.d = geo.d;

    // S phi_i = m C_i (f_i^{-1} h_i - f_{i-1}^{-1} h_{i-1}), h_k = (1/m) sum_{j<=k} phi_j
    Mat s = Mat::Zero(dim, dim);
    for (int i = 1; i < m; ++i) {
        const Mat diag = c[i] * finv[i];
        const Mat off = diag - c[i] * finv[i - 1];
        block(s, i - 1, i - 1, n) = diag;
        for (int j = 1; j < i; ++j) block(s, i - 1, j - 1, n) = off;
    }
    // S acts after P0: subtract block row means
    for (int i = 0; i < m; ++i) {
        Mat rs = Mat::Zero(n, n);
        for (int j = 0; j < m; ++j) rs += block(s, i, j, n);
        rs /= m;
        for (int j = 0; j < m; ++j) block(s, i, j, n) -= rs;
    }

    // S2: g_k = g_{k-1} + C_k^{-1} psi_k / m (k <= m-1), h_k = f_k g_k, phi_i = m (h_i - h_{i-1})
    Mat s2 = Mat::Zero(dim, dim);
    for (int i = 1; i <= m; ++i) {
        if (i < m) block(s2, i - 1, i - 1, n) = f[i] * cinv[i];
        const Mat df = f[i] - f[i - 1];
        for (int j = 1; j < i && j < m; ++j) block(s2, i - 1, j - 1, n) = df * cinv[j];
    }

    // T = P0 (-H^T R H) P0 with R at interior edges; (H^T R H)_{ij} = sum_{k >= max(i,j)} R_k / m^2
    std::vector<Mat> tail(m + 1, Mat::Zero(n, n));
    for (int k = m - 1; k >= 1; --k) tail[k] = tail[k + 1] + geo.R(static_cast<double>(k) / m);
    Mat t = Mat(dim, dim);
    const double w2 = 1.0 / (static_cast<double>(m) * m);
    for (int i = 1; i <= m; ++i)
        for (int j = 1; j <= m; ++j) block(t, i - 1, j - 1, n) = -w2 * tail[std::max(i, j)];

    ops.S = std::move(s);
    ops.T = project_both(g, t);
    ops.S_inv = std::move(s2);
    ops.S_star = ops.S.transpose();
    ops.S_inv_star = ops.S_inv.transpose();
    ops.J0 = ops.S_inv_star - Mat::Identity(dim, dim);
    ops.P0 = Mat::Identity(dim, dim);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) block(ops.P0, i, j, n) -= id / m;
    return ops;
}

double grid_norm2(const GridSpec& g, const Vec& phi) { return phi.squaredNorm() / g.m; }

double form_IT(const OperatorSet& ops, const Vec& phi) { return phi.dot(phi + ops.T * phi) / ops.grid.m; }

double norm2_S(const OperatorSet& ops, const Vec& phi) { return grid_norm2(ops.grid, ops.S * phi); }

Sigma1 sigma1(const OperatorSet& ops) {
    const GridSpec& g = ops.grid;
    const Eigen::Index dim = g.dim();
    // P0 (I+T) P0 on L2_0, constants pushed far above the spectrum
    Mat x = ops.P0 + ops.T + 1e3 * (Mat::Identity(dim, dim) - ops.P0);
    Eigen::SelfAdjointEigenSolver<Mat> es(x, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericFailure("symmetric eigensolver did not converge");
    Sigma1 out;
    out.via_eig = es.eigenvalues()(0);
    const double nrm = operator_norm([&](const Vec& v) -> Vec { return ops.S_inv_star * project0(g, v); },
                                     [&](const Vec& v) -> Vec { return project0(g, ops.S_inv * v); }, dim, 200, 1e-13);
    out.via_opnorm = 1.0 / (nrm * nrm);
    return out;
}

IdentityResiduals identity_residuals(const OperatorSet& ops) {
    const GridSpec& g = ops.grid;
    const Eigen::Index dim = g.dim();
    const int n = g.n;
    auto p0 = [&](const Vec& v) { return project0(g, v); };
    auto it = [&](const Vec& v) -> Vec { return v + ops.T * v; };
    auto drop_pole = [&](Vec v) {
        v.tail(n).setZero();
        return v;
    };
    auto norm = [&](const LinearMap& a, const LinearMap& at) { return operator_norm(a, at, dim, 200, 1e-10); };

    IdentityResiduals r;
    r.sstar_s = norm([&](const Vec& v) -> Vec { Vec u = p0(v); return p0(ops.S_star * (ops.S * u) - it(u)); },
                     [&](const Vec& v) -> Vec { Vec u = p0(v); return p0(ops.S_star * (ops.S * u) - it(u)); });
    r.s_s2_raw = norm([&](const Vec& v) -> Vec { return ops.S * (ops.S_inv * v) - v; },
                      [&](const Vec& v) -> Vec { return ops.S_inv_star * (ops.S_star * v) - v; });
    r.s_s2 = norm([&](const Vec& v) -> Vec { Vec u = drop_pole(v); return drop_pole(ops.S * (ops.S_inv * u) - u); },
                  [&](const Vec& v) -> Vec { Vec u = drop_pole(v); return drop_pole(ops.S_inv_star * (ops.S_star * u) - u); });
    r.s2_s = norm([&](const Vec& v) -> Vec { Vec u = p0(v); return ops.S_inv * (ops.S * u) - u; },
                  [&](const Vec& v) -> Vec { return p0(ops.S_star * (ops.S_inv_star * v) - v); });
    r.sinvstar_it = norm([&](const Vec& v) -> Vec { Vec u = p0(v); return ops.S_inv_star * it(u) - ops.S * u; },
                         [&](const Vec& v) -> Vec { return p0(it(ops.S_inv * v) - ops.S_star * v); });
    r.it_s2_sinvstar = norm(
        [&](const Vec& v) -> Vec { Vec u = p0(v); return p0(it(ops.S_inv * (ops.S_inv_star * u)) - u); },
        [&](const Vec& v) -> Vec { Vec u = p0(v); return p0(ops.S_inv * (ops.S_inv_star * it(u)) - u); });
    r.sinvstar_def = (ops.S_inv_star - (Mat::Identity(dim, dim) + ops.J0)).cwiseAbs().maxCoeff();
    return r;
}

double hardy_ratio(const Vec& phi, int n) {
    require(n >= 1 && phi.size() % n == 0 && phi.size() > 0, "grid function size must be a multiple of n");
    const Eigen::Index m = phi.size() / n;
    const double denom = phi.squaredNorm();
    require(denom > 0.0, "hardy_ratio needs a nonzero function");
    Vec suffix = Vec::Zero(n);  // sum_{j > i} phi_j
    double num = 0.0;
    for (Eigen::Index i = m; i >= 1; --i) {
        const Vec cell = phi.segment((i - 1) * n, n);
        const Vec avg = (0.5 * cell + suffix) / (static_cast<double>(m - i) + 0.5);
        num += avg.squaredNorm();
        suffix += cell;
    }
    return num / denom;
}

namespace {

double bump(double t) { return 1.0 - 0.5 * (2.0 * t - 1.0) * (2.0 * t - 1.0); }

// Four-point Lagrange interpolation of Ntil on the Jacobi grid.
Mat ntil_at(const jacobi::JacobiSolution& jac, double t) {
    const int steps = jac.steps;
    const double x = t * steps;
    int j = static_cast<int>(std::floor(x));
    j = std::clamp(j, 1, steps - 2);
    const double u = x - j;
    const double l0 = -u * (u - 1) * (u - 2) / 6.0, l1 = (u + 1) * (u - 1) * (u - 2) / 2.0;
    const double l2 = -(u + 1) * u * (u - 2) / 2.0, l3 = (u + 1) * u * (u - 1) / 6.0;
    return l0 * jac.Ntil[j - 1] + l1 * jac.Ntil[j] + l2 * jac.Ntil[j + 1] + l3 * jac.Ntil[j + 2];
}

}  // namespace

Mat assemble_J(const jacobi::GeodesicData&, const jacobi::JacobiSolution& jac, GridSpec g, double eps,
               double delta, double scale) {
    check_grid(jac, g);
    require(jac.has_knm, "perturbation needs the full Jacobi pipeline");
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    const int m = g.m, n = g.n;
    const Mat proj = jacobi::orth_projector(n);
    auto ceps = [&](double t) -> Mat { return eps * scale * bump(t) * proj; };
    auto rhs = [&](double t, const Mat& x) -> Mat {
        return (ntil_at(jac, t) + ceps(t) / std::pow(1.0 - t, delta)) * x;
    };
    // N_eps at the nodes by fine RK4
    std::vector<Mat> nn(m + 1);
    Mat x = Mat::Identity(n, n);
    double t = 0.0;
    const int sub = 32;
    for (int i = 1; i <= m; ++i) {
        const double target = g.node(i);
        const double h = (target - t) / sub;
        for (int s = 0; s < sub; ++s) {
            const Mat k1 = rhs(t, x), k2 = rhs(t + h / 2, x + h / 2 * k1), k3 = rhs(t + h / 2, x + h / 2 * k2);
            const Mat k4 = rhs(t + h, x + h * k3);
            x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            t += h;
        }
        t = target;
        if (!x.allFinite() || x.norm() > 1e12) throw NumericFailure("perturbed N blew up; eps too large");
        nn[i] = x;
    }
    // X_j = N(t_j)^T [ -A(1 - t_j) + (1 - t_j)^{1-delta} C_eps(t_j) ], with A(1 - t_j) on the Jacobi grid
    const int half = jac.steps / (2 * m);
    std::vector<Mat> xs(m + 1), ninv_t(m + 1);
    for (int j = 1; j <= m; ++j) {
        const double s = 1.0 - g.node(j);
        const Mat& a = jac.A[(2 * (m - j) + 1) * half];
        xs[j] = nn[j].transpose() * (-a + std::pow(s, 1.0 - delta) * ceps(g.node(j)));
        ninv_t[j] = nn[j].inverse().transpose();
    }
    Mat jm = Mat::Zero(g.dim(), g.dim());
    for (int i = 1; i <= m; ++i) {
        const double pre = 1.0 / ((1.0 - g.node(i)) * m);
        block(jm, i - 1, i - 1, n) = 0.5 * pre * ninv_t[i] * xs[i];
        for (int j = i + 1; j <= m; ++j) block(jm, i - 1, j - 1, n) = pre * ninv_t[i] * xs[j];
    }
    return jm;
}

PerturbationResult perturb_J(const jacobi::GeodesicData& geo, const jacobi::JacobiSolution& jac, GridSpec g,
                             const std::vector<double>& eps_list, double delta, double scale) {
    require(!eps_list.empty(), "eps list is empty");
    for (double e : eps_list) require(e >= 0.0 && e <= 0.2, "eps values must lie in [0, 0.2]");
    const Mat j0 = assemble_J(geo, jac, g, 0.0, delta, scale);
    PerturbationResult out;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (double e : eps_list) {
        const Mat je = assemble_J(geo, jac, g, e, delta, scale);
        const double nrm = operator_norm(Mat(je - j0));
        out.eps.push_back(e);
        out.norms.push_back(nrm);
        if (e > 0.0 && nrm > 0.0) {
            const double lx = std::log(e), ly = std::log(nrm);
            sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly;
            ++cnt;
        }
    }
    out.slope = (cnt >= 2) ? (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

Mat cosine_basis(int m) {
    Mat q(m, m - 1);
    const double c = std::sqrt(2.0 / m);
    for (int i = 1; i <= m; ++i)
        for (int k = 1; k < m; ++k) q(i - 1, k - 1) = c * std::cos(k * M_PI * (i - 0.5) / m);
    return q;
}

TrialMode trial_mode(const OperatorSet& ops, double eps) {
    require(eps > 0.0, "eps must be positive");
    const GridSpec& g = ops.grid;
    const int m = g.m, n = g.n;
    const Eigen::Index dim = g.dim();
    Mat x = ops.P0 + ops.T + 1e3 * (Mat::Identity(dim, dim) - ops.P0);
    Eigen::SelfAdjointEigenSolver<Mat> es(x);
    if (es.info() != Eigen::Success) throw NumericFailure("symmetric eigensolver did not converge");
    const double s1 = es.eigenvalues()(0);

    // coefficients in the cosine basis: coef(k, c) for mode k+1 of component c
    const Mat q = cosine_basis(m);
    auto to_coef = [&](const Vec& v) {
        Mat vals(m, n);
        for (int i = 0; i < m; ++i) vals.row(i) = v.segment(static_cast<Eigen::Index>(i) * n, n).transpose();
        return Mat(q.transpose() * vals);
    };
    auto from_coef = [&](const Mat& coef) {
        const Mat vals = q * coef;
        Vec v(dim);
        for (int i = 0; i < m; ++i) v.segment(static_cast<Eigen::Index>(i) * n, n) = vals.row(i).transpose();
        return v;
    };

    // low subspace, then its smoothest member (least sum k^2 |a_k|^2)
    int cnt = 0;
    while (cnt < dim && es.eigenvalues()(cnt) <= s1 + 0.5 * eps) ++cnt;
    const Mat v = es.eigenvectors().leftCols(cnt);
    Mat rough(cnt, cnt);
    std::vector<Mat> coefs(cnt);
    for (int a = 0; a < cnt; ++a) coefs[a] = to_coef(v.col(a));
    Vec k2(m - 1);
    for (int k = 1; k < m; ++k) k2(k - 1) = static_cast<double>(k) * k;
    for (int a = 0; a < cnt; ++a)
        for (int b = 0; b <= a; ++b)
            rough(a, b) = rough(b, a) = (k2.asDiagonal() * coefs[a]).cwiseProduct(coefs[b]).sum();
    Eigen::SelfAdjointEigenSolver<Mat> rs(rough);
    Vec base = v * rs.eigenvectors().col(0);
    const Mat base_coef = to_coef(base);

    for (int order = 1; order <= 2 * m; order *= 2) {
        const int kmax = std::min(order, m - 1);
        Mat c = base_coef;
        for (int k = 1; k < m; ++k) c.row(k - 1) *= (k <= kmax) ? 1.0 - static_cast<double>(k) / (kmax + 1) : 0.0;
        if (c.norm() == 0.0) continue;
        Vec phi = from_coef(c);
        phi /= std::sqrt(grid_norm2(g, phi));
        const double val = form_IT(ops, phi);
        if (val <= s1 + eps) {
            TrialMode out;
            out.phi = phi;
            out.form_value = val;
            out.s_norm2 = norm2_S(ops, phi);
            out.sigma1 = s1;
            out.fejer_order = kmax;
            return out;
        }
        if (kmax == m - 1) break;
    }
    throw InvalidInput("eps below the resolution achievable on this grid");
}

std::string sigma_csv_header() {
    return "geometry,d,m,sigma1_eig,sigma1_opnorm,res_sstar_s,res_s_s2,res_s_s2_raw,res_s2_s,res_sinvstar_it,"
           "res_it_s2_sinvstar,res_sinvstar_def";
}

std::string sigma_csv_row(const OperatorSet& ops, const Sigma1& s, const IdentityResiduals& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%.12g,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g", ops.tag.c_str(),
                  ops.d, ops.grid.m, s.via_eig, s.via_opnorm, r.sstar_s, r.s_s2, r.s_s2_raw, r.s2_s, r.sinvstar_it,
                  r.it_s2_sinvstar, r.sinvstar_def);
    return buf;
}

}  // namespace gaplab::ops
