#include "gaplab/radial_geometry.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace gaplab::geometry {

namespace {

// c_k = 2^{2k} B_{2k} / (2k)!, so that coth s - 1/s = sum_k c_k s^{2k-1}.
constexpr std::array<double, 9> kCothSeries = [] {
    constexpr double bern[9] = {1.0 / 6,          -1.0 / 30,       1.0 / 42,
                                -1.0 / 30,        5.0 / 66,        -691.0 / 2730,
                                7.0 / 6,          -3617.0 / 510,   43867.0 / 798};
    std::array<double, 9> c{};
    double fact = 1.0, pow4 = 1.0;
    for (int k = 1; k <= 9; ++k) {
        fact *= (2.0 * k - 1) * (2.0 * k);
        pow4 *= 4.0;
        c[k - 1] = pow4 * bern[k - 1] / fact;
    }
    return c;
}();

constexpr double kSeriesCut = 0.5;

// j-th derivative of g(s) = coth s - 1/s, j = 0..3.
double g_deriv(int j, double s) {
    if (s < kSeriesCut) {
        double acc = 0.0;
        for (int k = 1; k <= 9; ++k) {
            int p = 2 * k - 1;
            double coef = kCothSeries[k - 1];
            for (int q = 0; q < j; ++q) coef *= (p - q);
            if (coef == 0.0) continue;
            acc += coef * std::pow(s, p - j);
        }
        return acc;
    }
    const double coth = 1.0 / std::tanh(s);
    const double csch2 = (s > 350.0) ? 0.0 : 1.0 / (std::sinh(s) * std::sinh(s));
    switch (j) {
        case 0: return coth - 1.0 / s;
        case 1: return 1.0 / (s * s) - csch2;
        case 2: return -2.0 / (s * s * s) + 2.0 * csch2 * coth;
        default: return 6.0 / std::pow(s, 4) - 4.0 * csch2 * coth * coth - 2.0 * csch2 * csch2;
    }
}

// log(sinh s / s)
double log_sinhc(double s) {
    if (s < kSeriesCut) {
        double acc = 0.0;
        for (int k = 1; k <= 9; ++k) acc += kCothSeries[k - 1] / (2.0 * k) * std::pow(s, 2 * k);
        return acc;
    }
    return s - std::log(2.0) - std::log(s) + std::log1p(-std::exp(-2.0 * s));
}

// Centered difference stencils on a uniform grid, k = 1..4.
double stencil(int k, const std::vector<double>& v, long j, double h) {
    auto at = [&](long i) { return v[static_cast<std::size_t>(std::labs(i))]; };  // even reflection
    switch (k) {
        case 1: return (at(j + 1) - at(j - 1)) / (2 * h);
        case 2: return (at(j + 1) - 2 * at(j) + at(j - 1)) / (h * h);
        case 3: return (at(j + 2) - 2 * at(j + 1) + 2 * at(j - 1) - at(j - 2)) / (2 * h * h * h);
        default: return (at(j + 2) - 4 * at(j + 1) + 6 * at(j) - 4 * at(j - 1) + at(j - 2)) / (h * h * h * h);
    }
}

}  // namespace

RadialProfile RadialProfile::flat() { return RadialProfile{}; }

RadialProfile RadialProfile::hyperbolic(double a) {
    require(std::isfinite(a) && a > 0.0, "hyperbolic profile needs a > 0");
    RadialProfile p;
    p.kind_ = ProfileKind::Hyperbolic;
    p.a_ = a;
    return p;
}

RadialProfile RadialProfile::mixture(std::vector<double> weights, std::vector<RadialProfile> parts) {
    require(!weights.empty() && weights.size() == parts.size(), "mixture needs one weight per component");
    double total = 0.0;
    for (double w : weights) {
        require(std::isfinite(w) && w > 0.0, "mixture weights must be positive");
        total += w;
    }
    require(std::abs(total - 1.0) < 1e-12, "mixture weights must sum to 1");
    RadialProfile p;
    p.kind_ = ProfileKind::Mixture;
    p.weights_ = std::move(weights);
    p.parts_ = std::move(parts);
    return p;
}

RadialProfile RadialProfile::custom(std::vector<double> r, std::vector<double> phi) {
    require(r.size() == phi.size() && r.size() >= 8, "custom profile needs at least 8 (r, phi) samples");
    require(r.front() == 0.0, "custom grid must start at r = 0");
    const double h = r[1] - r[0];
    require(h > 0.0, "custom grid must be increasing");
    for (std::size_t j = 0; j < r.size(); ++j) {
        require(std::abs(r[j] - j * h) <= 1e-9 * h * (1.0 + j), "custom grid must be uniform");
        require(std::isfinite(phi[j]), "custom phi values must be finite");
    }
    RadialProfile p;
    p.kind_ = ProfileKind::Custom;
    p.h_ = h;
    p.grid_phi_ = std::move(phi);
    const long top = static_cast<long>(p.grid_phi_.size()) - 1;
    p.nodal_[0] = p.grid_phi_;
    for (int k = 1; k <= 4; ++k) {
        p.nodal_[k].resize(static_cast<std::size_t>(top - 1));  // nodes 0..top-2
        for (long j = 0; j + 2 <= top; ++j) p.nodal_[k][j] = stencil(k, p.grid_phi_, j, h);
    }
    return p;
}

RadialProfile RadialProfile::custom_from_function(const std::function<double(double)>& phi, double r_max,
                                                  std::size_t intervals) {
    require(r_max > 0.0 && intervals >= 8, "custom_from_function needs r_max > 0 and >= 8 intervals");
    std::vector<double> r(intervals + 1), v(intervals + 1);
    for (std::size_t j = 0; j <= intervals; ++j) {
        r[j] = r_max * static_cast<double>(j) / static_cast<double>(intervals);
        v[j] = phi(r[j]);
    }
    return custom(std::move(r), std::move(v));
}

std::string RadialProfile::tag() const {
    std::ostringstream os;
    switch (kind_) {
        case ProfileKind::Flat: return "flat";
        case ProfileKind::Hyperbolic: os << "hyperbolic(" << a_ << ")"; return os.str();
        case ProfileKind::Mixture: return "mixture";
        case ProfileKind::Custom: return "custom";
    }
    return "unknown";
}

// Four-point Lagrange interpolation of a nodal table, parity-extended across 0.
double RadialProfile::grid_eval(int k, double r) const {
    const auto& tab = nodal_[k];
    const long last = static_cast<long>(tab.size()) - 1;
    const double x = r / h_;
    long j = static_cast<long>(std::floor(x));
    if (j > last - 2) j = last - 2;
    const double sign_odd = (k % 2 == 1) ? -1.0 : 1.0;  // phi is even, odd derivatives are odd
    auto at = [&](long i) { return i < 0 ? sign_odd * tab[static_cast<std::size_t>(-i)] : tab[static_cast<std::size_t>(i)]; };
    const double u = x - static_cast<double>(j);  // nodes j-1, j, j+1, j+2 at u = -1, 0, 1, 2
    const double l0 = -u * (u - 1) * (u - 2) / 6.0;
    const double l1 = (u + 1) * (u - 1) * (u - 2) / 2.0;
    const double l2 = -(u + 1) * u * (u - 2) / 2.0;
    const double l3 = (u + 1) * u * (u - 1) / 6.0;
    return l0 * at(j - 1) + l1 * at(j) + l2 * at(j + 1) + l3 * at(j + 2);
}

double RadialProfile::phi(double r) const {
    require(r >= 0.0, "radius must be nonnegative");
    switch (kind_) {
        case ProfileKind::Flat: return 0.0;
        case ProfileKind::Hyperbolic: return log_sinhc(std::sqrt(a_) * r);
        case ProfileKind::Mixture: {
            double acc = 0.0;
            for (std::size_t i = 0; i < parts_.size(); ++i) acc += weights_[i] * parts_[i].phi(r);
            return acc;
        }
        case ProfileKind::Custom:
            require(r <= deriv_window(), "radius outside the custom profile grid");
            return grid_eval(0, r);
    }
    return 0.0;
}

double RadialProfile::deriv(int k, double r) const {
    require(k >= 1 && k <= 4, "derivative order must be 1..4");
    require(r >= 0.0, "radius must be nonnegative");
    switch (kind_) {
        case ProfileKind::Flat: return 0.0;
        case ProfileKind::Hyperbolic: {
            const double sa = std::sqrt(a_);
            return std::pow(sa, k) * g_deriv(k - 1, sa * r);
        }
        case ProfileKind::Mixture: {
            double acc = 0.0;
            for (std::size_t i = 0; i < parts_.size(); ++i) acc += weights_[i] * parts_[i].deriv(k, r);
            return acc;
        }
        case ProfileKind::Custom:
            if (r > deriv_window()) throw InvalidInput("derivative requested outside the custom profile window");
            return grid_eval(k, r);
    }
    return 0.0;
}

double RadialProfile::f(double r) const { return r * std::exp(phi(r)); }

double RadialProfile::deriv_window() const {
    switch (kind_) {
        case ProfileKind::Custom: return h_ * static_cast<double>(nodal_[1].size() - 1);
        case ProfileKind::Mixture: {
            double w = std::numeric_limits<double>::infinity();
            for (const auto& p : parts_) w = std::min(w, p.deriv_window());
            return w;
        }
        default: return std::numeric_limits<double>::infinity();
    }
}

double RadialProfile::sup_dphi(double r_max) const {
    switch (kind_) {
        case ProfileKind::Flat: return 0.0;
        case ProfileKind::Hyperbolic: return std::sqrt(a_);  // coth s - 1/s increases to 1
        case ProfileKind::Mixture: {
            double acc = 0.0;
            for (std::size_t i = 0; i < parts_.size(); ++i) acc += weights_[i] * parts_[i].sup_dphi(r_max);
            return acc;
        }
        case ProfileKind::Custom: {
            const double top = std::min(r_max, deriv_window());
            double s = 0.0;
            for (std::size_t j = 0; j < nodal_[1].size() && j * h_ <= top; ++j) s = std::max(s, std::abs(nodal_[1][j]));
            return s;
        }
    }
    return 0.0;
}

nlohmann::json RadialProfile::to_json() const {
    nlohmann::json j;
    switch (kind_) {
        case ProfileKind::Flat: j["preset"] = "flat"; break;
        case ProfileKind::Hyperbolic:
            j["preset"] = "hyperbolic";
            j["parameters"] = {{"a", a_}};
            break;
        case ProfileKind::Mixture: {
            j["preset"] = "mixture";
            nlohmann::json comps = nlohmann::json::array();
            for (std::size_t i = 0; i < parts_.size(); ++i)
                comps.push_back({{"weight", weights_[i]}, {"profile", parts_[i].to_json()}});
            j["parameters"] = {{"components", comps}};
            break;
        }
        case ProfileKind::Custom: {
            j["preset"] = "custom";
            nlohmann::json grid = nlohmann::json::array();
            for (std::size_t i = 0; i < grid_phi_.size(); ++i) grid.push_back({h_ * static_cast<double>(i), grid_phi_[i]});
            j["custom_grid"] = grid;
            break;
        }
    }
    return j;
}

RadialProfile RadialProfile::from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("preset") && j["preset"].is_string(), "profile needs a string 'preset'");
    const std::string preset = j["preset"];
    if (preset == "flat") return flat();
    if (preset == "hyperbolic") {
        require(j.contains("parameters") && j["parameters"].contains("a") && j["parameters"]["a"].is_number(),
                "hyperbolic profile needs parameters.a");
        return hyperbolic(j["parameters"]["a"].get<double>());
    }
    if (preset == "mixture") {
        require(j.contains("parameters") && j["parameters"].contains("components") &&
                    j["parameters"]["components"].is_array(),
                "mixture profile needs parameters.components");
        std::vector<double> w;
        std::vector<RadialProfile> parts;
        for (const auto& c : j["parameters"]["components"]) {
            require(c.contains("weight") && c["weight"].is_number() && c.contains("profile"),
                    "mixture component needs weight and profile");
            w.push_back(c["weight"].get<double>());
            parts.push_back(from_json(c["profile"]));
        }
        return mixture(std::move(w), std::move(parts));
    }
    if (preset == "custom") {
        require(j.contains("custom_grid") && j["custom_grid"].is_array(), "custom profile needs custom_grid");
        std::vector<double> r, v;
        for (const auto& row : j["custom_grid"]) {
            require(row.is_array() && row.size() == 2 && row[0].is_number() && row[1].is_number(),
                    "custom_grid rows are [r, phi] pairs");
            r.push_back(row[0].get<double>());
            v.push_back(row[1].get<double>());
        }
        return custom(std::move(r), std::move(v));
    }
    throw InvalidInput("unknown profile preset '" + preset + "'");
}

AssumptionReport validate_assumption_c(const RadialProfile& p, double r_max, std::size_t grid_size) {
    require(r_max > 0.0 && std::isfinite(r_max), "r_max must be positive");
    require(grid_size >= 64, "grid_size must be at least 64");
    if (r_max > p.deriv_window()) throw InvalidInput("profile derivatives unavailable up to r_max");

    AssumptionReport rep;
    rep.r_max = r_max;
    rep.r_min = r_max * 1e-6;
    rep.grid_size = grid_size;
    rep.inf_rphi = std::numeric_limits<double>::infinity();
    rep.c1 = true;

    const double ratio = std::pow(r_max / rep.r_min, 1.0 / static_cast<double>(grid_size - 1));
    const double decade_top = rep.r_min * 10.0;
    double q_max_decade = 0.0, q_top = 0.0;
    double r = rep.r_min;
    for (std::size_t i = 0; i < grid_size; ++i, r *= ratio) {
        if (i == grid_size - 1) r = r_max;
        for (int k = 1; k <= 4; ++k) {
            const double v = p.deriv(k, r);
            if (!std::isfinite(v)) rep.c1 = false;
            else rep.sup_deriv[k - 1] = std::max(rep.sup_deriv[k - 1], std::abs(v));
        }
        const double d1 = p.deriv(1, r);
        rep.inf_rphi = std::min(rep.inf_rphi, r * d1);
        if (r <= decade_top * (1 + 1e-12)) {
            const double q = std::abs(d1) / r;
            q_max_decade = std::max(q_max_decade, q);
            q_top = q;
        }
    }
    // bounded |phi'|/r: no growth toward 0 across the smallest decade
    rep.c2_proxy = std::isfinite(q_max_decade) && q_max_decade <= 2.0 * q_top + 1e-9;
    rep.c3 = rep.inf_rphi > -0.5;
    // r phi'(r) -> 0 at the pole; the infimum over (0, r_max] is never above 0
    rep.inf_rphi = std::min(rep.inf_rphi, 0.0);
    return rep;
}

std::string assumption_csv_header() { return "preset,r_max,c1,c2,c3,inf_rphi"; }

std::string assumption_csv_row(const RadialProfile& p, const AssumptionReport& rep) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.12g,%d,%d,%d,%.12g", p.tag().c_str(), rep.r_max, rep.c1 ? 1 : 0,
                  rep.c2_proxy ? 1 : 0, rep.c3 ? 1 : 0, rep.inf_rphi);
    return buf;
}

std::pair<double, double> hessian_k(const RadialProfile& p, double r) {
    require(r >= 0.0, "radius must be nonnegative");
    if (r == 0.0) return {1.0, 1.0};
    return {1.0, 1.0 + r * p.deriv(1, r)};
}

double radial_curvature(const RadialProfile& p, double r) {
    require(r >= 0.0, "radius must be nonnegative");
    if (r == 0.0) return -3.0 * p.deriv(2, 0.0);
    if (!(p.f(r) > 0.0)) throw InvalidInput("profile has f(r) = 0 at positive radius");
    const double d1 = p.deriv(1, r), d2 = p.deriv(2, r);
    return -(2.0 * d1 / r + d1 * d1 + d2);
}

double h3_heat_kernel(double t, double r) {
    require(t > 0.0 && r >= 0.0, "kernel needs t > 0 and r >= 0");
    const double ratio = (r < 1e-8) ? 1.0 : r / std::sinh(r);
    return std::pow(2.0 * M_PI * t, -1.5) * ratio * std::exp(-t / 2.0 - r * r / (2.0 * t));
}

double h3_kernel_mass(double t) {
    require(t > 0.0, "kernel mass needs t > 0");
    // p(t,r) 4 pi sinh^2 r = (2 pi t)^{-3/2} 4 pi r sinh r exp(-t/2 - r^2/(2t)), written overflow-free
    const double c = std::pow(2.0 * M_PI * t, -1.5) * 4.0 * M_PI * std::exp(-t / 2.0);
    auto f = [&](double r) {
        const double q = -r * r / (2.0 * t);
        return c * r * 0.5 * (std::exp(r + q) - std::exp(-r + q));
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::numeric_limits<double>::infinity(),
                                                                         20, 1e-14);
}

std::vector<KernelResidual> h3_kernel_asymptotics(const std::vector<double>& t_list, const std::vector<double>& r_list) {
    std::vector<KernelResidual> out;
    for (double t : t_list) {
        require(t > 0.0 && t <= 1.0, "kernel asymptotics needs t in (0, 1]");
        for (double r : r_list) {
            require(r > 0.0, "kernel asymptotics needs r > 0");
            const double coth = 1.0 / std::tanh(r);
            const double csch2 = 1.0 / (std::sinh(r) * std::sinh(r));
            // derivatives of log p in r
            const double d1 = 1.0 / r - coth - r / t;
            const double d2 = -1.0 / (r * r) + csch2 - 1.0 / t;
            out.push_back({t, r, std::abs(t * d1 + r), std::abs(t * d2 + 1.0), std::abs(t * coth * d1 + r * coth)});
        }
    }
    return out;
}

}  // namespace gaplab::geometry
