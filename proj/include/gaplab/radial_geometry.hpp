#pragma once

#include "gaplab/common.hpp"

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace gaplab::geometry {

enum class ProfileKind { Flat, Hyperbolic, Mixture, Custom };

/// Rotationally symmetric metric dr^2 + f(r)^2 dTheta^2 with f(r) = r exp(phi(r)).
class RadialProfile {
public:
    static RadialProfile flat();
    static RadialProfile hyperbolic(double a);
    static RadialProfile mixture(std::vector<double> weights, std::vector<RadialProfile> parts);
    /// phi sampled on the uniform grid r_j = j*h, j = 0..J (r_0 must be 0).
    /// Extended evenly across r = 0; derivatives are centered differences with step h.
    static RadialProfile custom(std::vector<double> r, std::vector<double> phi);
    static RadialProfile custom_from_function(const std::function<double(double)>& phi, double r_max,
                                              std::size_t intervals);

    ProfileKind kind() const { return kind_; }
    std::string tag() const;
    double parameter() const { return a_; }

    double phi(double r) const;
    /// k-th derivative of phi, k in 1..4.
    double deriv(int k, double r) const;
    double f(double r) const;
    /// Largest radius where deriv() is defined (infinite for closed-form presets).
    double deriv_window() const;
    /// sup |phi'| over [0, r_max]; closed form where available.
    double sup_dphi(double r_max) const;

    nlohmann::json to_json() const;
    static RadialProfile from_json(const nlohmann::json& j);

private:
    ProfileKind kind_ = ProfileKind::Flat;
    double a_ = 0.0;
    std::vector<double> weights_;
    std::vector<RadialProfile> parts_;
    double h_ = 0.0;
    std::vector<double> grid_phi_;                 // phi at r_j
    std::array<std::vector<double>, 5> nodal_{};   // nodal derivative tables, index 0 = phi
    double grid_eval(int k, double r) const;
};

struct AssumptionReport {
    bool c1 = false;        // derivatives 1..4 finite on the grid
    bool c2_proxy = false;  // |phi'(r)|/r bounded near 0
    bool c3 = false;        // inf r phi'(r) > -1/2
    double inf_rphi = 0.0;
    std::array<double, 4> sup_deriv{};
    double r_min = 0.0, r_max = 0.0;
    std::size_t grid_size = 0;
};

AssumptionReport validate_assumption_c(const RadialProfile& p, double r_max, std::size_t grid_size);
std::string assumption_csv_header();
std::string assumption_csv_row(const RadialProfile& p, const AssumptionReport& rep);

/// Eigenvalues of the Hessian of d^2/2 from the pole: radial 1, tangential 1 + r phi'(r).
std::pair<double, double> hessian_k(const RadialProfile& p, double r);

/// K(r) = -f''(r)/f(r); value at r = 0 is the series limit -3 phi''(0).
double radial_curvature(const RadialProfile& p, double r);

/// Heat kernel of exp(t Laplacian / 2) on H^3 as a function of distance r.
double h3_heat_kernel(double t, double r);
/// Integral of the kernel over H^3 (adaptive quadrature over 4 pi sinh^2 r dr).
double h3_kernel_mass(double t);

struct KernelResidual {
    double t, r;
    double gradient, radial_hessian, tangential_hessian;
};

std::vector<KernelResidual> h3_kernel_asymptotics(const std::vector<double>& t_list,
                                                  const std::vector<double>& r_list);

}  // namespace gaplab::geometry
