#include "gaplab/gap_cli.hpp"

#include "gaplab/diffusion_sim.hpp"
#include "gaplab/jacobi_engine.hpp"
#include "gaplab/operator_lab.hpp"
#include "gaplab/radial_geometry.hpp"
#include "gaplab/semiclassical_fd.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <variant>

namespace gaplab::cli {

using nlohmann::json;

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k = {"sigma1", "identities", "semiclassical", "simulate", "bounds",
                                               "kernel_asymptotics"};
    return k;
}

bool RunReport::pass() const {
    for (const auto& t : tables)
        for (bool p : t.pass)
            if (!p) return false;
    return true;
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::uint64_t config_digest(const json& config) { return fnv1a64(config.dump()); }

namespace {

// ---------------------------------------------------------------- schema reader

// Typed access to one JSON object; every key must be consumed, unknown keys are errors.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }
    [[noreturn]] void fail(const std::string& what) const { throw SchemaError(path_ + ": " + what); }
    std::string at(const std::string& k) const { return path_ + "." + k; }

    bool has(const std::string& k) const { return j_.contains(k); }
    const json& raw(const std::string& k) {
        if (!has(k)) fail("missing required key '" + k + "'");
        seen_.insert(k);
        return j_.at(k);
    }
    double num(const std::string& k) {
        const json& v = raw(k);
        if (!v.is_number()) fail("'" + k + "' must be a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail("'" + k + "' must be finite");
        return x;
    }
    double num(const std::string& k, double def) { return has(k) ? num(k) : def; }
    double positive(const std::string& k) {
        const double x = num(k);
        if (!(x > 0)) fail("'" + k + "' must be positive");
        return x;
    }
    double positive(const std::string& k, double def) { return has(k) ? positive(k) : def; }
    long integer(const std::string& k) {
        const json& v = raw(k);
        if (!v.is_number_integer()) fail("'" + k + "' must be an integer");
        return v.get<long>();
    }
    long integer(const std::string& k, long def) { return has(k) ? integer(k) : def; }
    long integer_at_least(const std::string& k, long lo, long def) {
        const long v = integer(k, def);
        if (v < lo) fail("'" + k + "' must be >= " + std::to_string(lo));
        return v;
    }
    bool boolean(const std::string& k, bool def) {
        if (!has(k)) return def;
        const json& v = raw(k);
        if (!v.is_boolean()) fail("'" + k + "' must be true or false");
        return v.get<bool>();
    }
    std::string str(const std::string& k) {
        const json& v = raw(k);
        if (!v.is_string()) fail("'" + k + "' must be a string");
        return v.get<std::string>();
    }
    std::string str(const std::string& k, const std::string& def) { return has(k) ? str(k) : def; }
    // a number or a non-empty array of numbers
    std::vector<double> nums(const std::string& k) {
        const json& v = raw(k);
        std::vector<double> out;
        if (v.is_number()) {
            out.push_back(v.get<double>());
        } else if (v.is_array() && !v.empty()) {
            for (const auto& e : v) {
                if (!e.is_number()) fail("'" + k + "' must contain numbers only");
                out.push_back(e.get<double>());
            }
        } else {
            fail("'" + k + "' must be a number or a non-empty array of numbers");
        }
        for (double x : out)
            if (!std::isfinite(x)) fail("'" + k + "' must be finite");
        return out;
    }
    std::vector<double> positives(const std::string& k) {
        auto v = nums(k);
        for (double x : v)
            if (!(x > 0)) fail("'" + k + "' entries must be positive");
        return v;
    }
    std::vector<long> ints(const std::string& k, long lo) {
        const json& v = raw(k);
        std::vector<long> out;
        auto one = [&](const json& e) {
            if (!e.is_number_integer()) fail("'" + k + "' must contain integers");
            if (e.get<long>() < lo) fail("'" + k + "' entries must be >= " + std::to_string(lo));
            out.push_back(e.get<long>());
        };
        if (v.is_array() && !v.empty()) {
            for (const auto& e : v) one(e);
        } else if (v.is_number()) {
            one(v);
        } else {
            fail("'" + k + "' must be an integer or a non-empty array of integers");
        }
        return out;
    }
    Obj sub(const std::string& k) { return Obj(raw(k), at(k)); }
    std::vector<Obj> list(const std::string& k) {
        const json& v = raw(k);
        if (!v.is_array() || v.empty()) fail("'" + k + "' must be a non-empty array");
        std::vector<Obj> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.emplace_back(v[i], at(k) + "[" + std::to_string(i) + "]");
        return out;
    }
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail("unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// Wraps library validation errors raised while parsing nested presets.
template <class F>
auto as_schema(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const SchemaError&) {
        throw;
    } catch (const InvalidInput& e) {
        throw SchemaError(path + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

// ---------------------------------------------------------------- plans

struct GeometrySpec {
    std::string type;   // constant | profile
    int n = 2;
    double d = 1.0, kappa = 0.0;
    json profile;
    jacobi::GeodesicData build() const {
        if (type == "constant") return jacobi::constant_curvature(n, d, kappa);
        return jacobi::from_profile(geometry::RadialProfile::from_json(profile), n, d);
    }
    std::string label() const {
        if (type == "constant") return "constant(kd2=" + format_number(kappa * d * d) + ")";
        return geometry::RadialProfile::from_json(profile).tag();
    }
    bool has_closed_form() const { return type == "constant"; }
    double closed_form() const {
        const double kd2 = kappa * d * d;
        return kd2 > 0 ? 1.0 - kd2 / (M_PI * M_PI) : 1.0;
    }
};

GeometrySpec parse_geometry(Obj o) {
    GeometrySpec g;
    g.type = o.str("type");
    g.d = o.positive("d", 1.0);
    if (g.type == "constant") {
        g.n = static_cast<int>(o.integer_at_least("n", 1, 2));
        g.kappa = o.num("kappa");
        if (g.kappa * g.d * g.d >= M_PI * M_PI) o.fail("kappa d^2 must stay below pi^2 (no conjugate point)");
    } else if (g.type == "profile") {
        g.n = static_cast<int>(o.integer_at_least("n", 2, 2));
        g.profile = o.raw("profile");
        as_schema(o.at("profile"), [&] { return geometry::RadialProfile::from_json(g.profile); });
    } else {
        o.fail("geometry type must be 'constant' or 'profile'");
    }
    o.finish();
    return g;
}

int jacobi_steps(int m, long requested) {
    const int base = requested > 0 ? static_cast<int>(requested) : std::max(2048, 2 * m);
    return ((base + 2 * m - 1) / (2 * m)) * (2 * m);
}

struct Sigma1Plan {
    std::vector<GeometrySpec> geos;
    std::vector<long> ms;
    long steps = 0;
    double tol_closed = 2e-3, tol_agree = 5e-3;
};

struct IdentitiesPlan {
    std::vector<GeometrySpec> geos;
    std::vector<long> ms;
    long steps = 0;
    double tol_res = 1e-3, decay = 2.0, floor = 1e-10;
    bool perturb = false;
    std::vector<double> eps;
    double delta = 0.6, pscale = 1.0;
    long pm = 64;
    bool hardy = false;
    std::vector<long> hardy_m;
    long hardy_seeds = 100, hardy_extremal_m = 65536;
};

struct SemiPlan {
    std::vector<json> pots;
    std::vector<double> lambdas;
    long cells = 0;
    bool refine = false, laplace = false;
    double tol_gap = 0.1, tol_real = 5e-3, tol_refine = 5e-3, tol_laplace = 2e-2;
};

struct SimPlan {
    bool radial = false, bridge = false;
    // radial
    json profile;
    int n = 3;
    double d = 1.0;
    std::vector<double> lambdas;
    long m = 2000, P = 10000;
    std::vector<double> r_grid;
    bool dump = false, implicit = true;
    // bridge
    diffusion::Space space = diffusion::Space::Flat3;
    double b_lambda = 50, b_d = 1.0, trial_eps = 0.05;
    long b_m = 32, chain = 1000000, burnin = 20000, thin = 100, chains = 1;
    double tol_se = 3.0, q_lo = 0.95, q_hi = 1.25, tail_rel = 0.25, min_ess = 1000;
};

struct BoundsPlan {
    struct In {
        double a, b, r0;
        std::optional<double> expected;
    };
    std::vector<In> inputs;
    bool sweep = false;
    double c1 = 1, c2 = 1, r0 = 1;
    std::vector<double> sweep_lambda;
    double tol_sweep = 1e-2, tol_expected = 1e-12;
};

struct KernelPlan {
    std::vector<double> t, r;
    double tol_mass = 1e-8, lo = 1.7, hi = 2.3;
};

using Plan = std::variant<Sigma1Plan, IdentitiesPlan, SemiPlan, SimPlan, BoundsPlan, KernelPlan>;

struct Parsed {
    std::string kind;
    std::uint64_t seed = 0;
    Plan plan;
};

Parsed parse(const json& config) {
    Obj o(config, "config");
    Parsed p;
    p.kind = o.str("kind");
    const auto& kinds = experiment_kinds();
    if (std::find(kinds.begin(), kinds.end(), p.kind) == kinds.end()) o.fail("unknown experiment kind '" + p.kind + "'");
    if (o.has("seed")) {
        const json& s = o.raw("seed");
        if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
            o.fail("'seed' must be a nonnegative integer");
        p.seed = s.get<std::uint64_t>();
    }
    if (o.has("description")) o.str("description");
    if (o.has("out")) o.str("out");
    std::optional<Obj> tol;
    if (o.has("tolerances")) tol.emplace(o.sub("tolerances"));
    auto tol_of = [&](const std::string& k, double def) { return tol ? tol->positive(k, def) : def; };

    if (p.kind == "sigma1" || p.kind == "identities") {
        std::vector<GeometrySpec> geos;
        for (auto& g : o.list("geometries")) geos.push_back(parse_geometry(g));
        const long steps = o.integer("steps", 0);
        if (p.kind == "sigma1") {
            Sigma1Plan s;
            s.geos = geos;
            s.ms = o.has("m") ? o.ints("m", 2) : std::vector<long>{512};
            s.steps = steps;
            s.tol_closed = tol_of("closed_form", s.tol_closed);
            s.tol_agree = tol_of("eig_vs_opnorm", s.tol_agree);
            p.plan = s;
        } else {
            IdentitiesPlan s;
            s.geos = geos;
            s.ms = o.has("m") ? o.ints("m", 2) : std::vector<long>{256, 1024};
            s.steps = steps;
            s.tol_res = tol_of("residual", s.tol_res);
            s.decay = tol_of("decay", s.decay);
            s.floor = tol_of("roundoff_floor", s.floor);
            if (o.has("perturbation")) {
                Obj q = o.sub("perturbation");
                s.perturb = true;
                s.eps = q.positives("eps");
                for (double e : s.eps)
                    if (e > 0.2) q.fail("eps entries must be <= 0.2");
                if (s.eps.size() < 2) q.fail("need at least two eps values");
                s.delta = q.positive("delta", 0.6);
                if (s.delta >= 1.0) q.fail("delta must be < 1");
                s.pscale = q.positive("scale", 1.0);
                s.pm = q.integer_at_least("m", 8, 64);
                q.finish();
            }
            if (o.has("hardy")) {
                Obj q = o.sub("hardy");
                s.hardy = true;
                s.hardy_m = q.has("m") ? q.ints("m", 2) : std::vector<long>{256};
                s.hardy_seeds = q.integer_at_least("seeds", 1, 100);
                s.hardy_extremal_m = q.integer_at_least("near_extremal_m", 2, 65536);
                q.finish();
            }
            p.plan = s;
        }
    } else if (p.kind == "semiclassical") {
        SemiPlan s;
        const json& pots = o.raw("potentials");
        if (!pots.is_array() || pots.empty()) o.fail("'potentials' must be a non-empty array");
        for (std::size_t i = 0; i < pots.size(); ++i) {
            const std::string path = "config.potentials[" + std::to_string(i) + "]";
            as_schema(path, [&] { return semiclassical::WeightedPotential::from_json(pots[i]); });
            s.pots.push_back(pots[i]);
        }
        s.lambdas = o.positives("lambda");
        s.cells = o.has("cells") ? o.integer_at_least("cells", 16, 0) : 0;
        s.refine = o.boolean("refine", false);
        s.laplace = o.boolean("laplace", false);
        s.tol_gap = tol_of("gap_rel", s.tol_gap);
        s.tol_real = tol_of("realization", s.tol_real);
        s.tol_refine = tol_of("refinement", s.tol_refine);
        s.tol_laplace = tol_of("laplace_rel", s.tol_laplace);
        p.plan = s;
    } else if (p.kind == "simulate") {
        SimPlan s;
        if (!o.has("radial") && !o.has("bridge")) o.fail("simulate needs a 'radial' or a 'bridge' block");
        if (o.has("radial")) {
            Obj r = o.sub("radial");
            s.radial = true;
            s.profile = r.raw("profile");
            as_schema(r.at("profile"), [&] { return geometry::RadialProfile::from_json(s.profile); });
            s.n = static_cast<int>(r.integer_at_least("n", 3, 3));
            s.d = r.positive("d", 1.0);
            s.lambdas = r.positives("lambda");
            s.m = r.integer_at_least("m", 1, 2000);
            s.P = r.integer_at_least("P", 1, 10000);
            if (r.has("r_grid")) {
                s.r_grid = r.nums("r_grid");
            } else {
                for (double x = 1.0 + s.d; x <= 1.0 + s.d + 3.0 + 1e-9; x += 0.05) s.r_grid.push_back(x);
            }
            s.dump = r.boolean("dump", false);
            s.implicit = r.boolean("implicit", true);
            r.finish();
        }
        if (o.has("bridge")) {
            Obj b = o.sub("bridge");
            s.bridge = true;
            s.space = as_schema(b.at("space"), [&] { return diffusion::parse_space(b.str("space")); });
            s.b_lambda = b.positive("lambda");
            s.b_m = b.integer_at_least("m", 2, 32);
            s.b_d = b.positive("d", 1.0);
            s.chain = b.integer_at_least("chain", 1, 1000000);
            s.burnin = b.integer_at_least("burnin", 0, 20000);
            s.thin = b.integer_at_least("thin", 1, 100);
            s.chains = b.integer_at_least("chains", 1, 1);
            s.trial_eps = b.positive("eps", 0.05);
            if (s.chain / s.thin < 128) b.fail("chain / thin must leave at least 128 stored samples");
            b.finish();
        }
        s.tol_se = tol_of("quotient_se", s.tol_se);
        s.q_lo = tol_of("quotient_min", s.q_lo);
        s.q_hi = tol_of("quotient_max", s.q_hi);
        s.tail_rel = tol_of("tail_ratio_rel", s.tail_rel);
        s.min_ess = tol_of("min_ess", s.min_ess);
        p.plan = s;
    } else if (p.kind == "bounds") {
        BoundsPlan s;
        if (!o.has("inputs") && !o.has("sweep")) o.fail("bounds needs 'inputs' or 'sweep'");
        if (o.has("inputs"))
            for (auto& q : o.list("inputs")) {
                BoundsPlan::In in{q.positive("alpha"), q.positive("beta"), q.positive("r0"), std::nullopt};
                if (q.has("expected")) in.expected = q.num("expected");
                q.finish();
                s.inputs.push_back(in);
            }
        if (o.has("sweep")) {
            Obj q = o.sub("sweep");
            s.sweep = true;
            s.c1 = q.positive("C1");
            s.c2 = q.positive("C2");
            s.r0 = q.positive("r0");
            s.sweep_lambda = q.positives("lambda");
            q.finish();
        }
        s.tol_sweep = tol_of("sweep_rel", s.tol_sweep);
        s.tol_expected = tol_of("expected_rel", s.tol_expected);
        p.plan = s;
    } else {
        KernelPlan s;
        s.t = o.positives("t");
        s.r = o.positives("r");
        for (double t : s.t)
            if (t > 1.0) o.fail("t entries must be in (0, 1]");
        s.tol_mass = tol_of("mass", s.tol_mass);
        s.lo = tol_of("ratio_min", s.lo);
        s.hi = tol_of("ratio_max", s.hi);
        p.plan = s;
    }
    if (tol) tol->finish();
    o.finish();
    return p;
}

// ---------------------------------------------------------------- runners

using Row = std::vector<std::string>;

std::string pass_str(bool b) { return b ? "pass" : "fail"; }

void add_row(Table& t, Row r, bool ok) {
    r.push_back(pass_str(ok));
    t.rows.push_back(std::move(r));
    t.pass.push_back(ok);
}

std::string N(double x) { return format_number(x); }

struct Stopwatch {
    RunReport& rep;
    std::string stage;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    ~Stopwatch() {
        rep.stage_seconds.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
};

void run_sigma1(const Sigma1Plan& s, const RunOptions& opt, RunReport& rep) {
    Table t{"sigma1", {"geometry", "n", "d", "m", "sigma1_eig", "sigma1_opnorm", "closed_form", "abs_diff", "pass"}, {}, {}};
    struct Job {
        const GeometrySpec* g;
        long m;
    };
    std::vector<Job> jobs;
    for (const auto& g : s.geos)
        for (long m : s.ms) jobs.push_back({&g, m});
    std::vector<ops::Sigma1> res(jobs.size());
    Stopwatch sw{rep, "sigma1"};
    parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
        const auto geo = jobs[i].g->build();
        const int m = static_cast<int>(jobs[i].m);
        const auto jac = jacobi::build_KNM(geo, jacobi_steps(m, s.steps));
        res[i] = ops::sigma1(ops::assemble_operators(geo, jac, {m, geo.n}));
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& g = *jobs[i].g;
        const double cf = g.has_closed_form() ? g.closed_form() : std::nan("");
        const double diff = std::abs(res[i].via_eig - res[i].via_opnorm);
        bool ok = diff <= s.tol_agree;
        if (g.has_closed_form()) ok = ok && std::abs(res[i].via_eig - cf) <= s.tol_closed;
        add_row(t, {g.label(), std::to_string(g.n), N(g.d), std::to_string(jobs[i].m), N(res[i].via_eig), N(res[i].via_opnorm), N(cf), N(diff)}, ok);
    }
    rep.tables.push_back(std::move(t));
}

void run_identities(const IdentitiesPlan& s, const RunOptions& opt, RunReport& rep) {
    Table t{"identities",
            {"geometry", "n", "m", "res_sstar_s", "res_s_s2", "res_s_s2_raw", "res_s2_s", "res_sinvstar_it",
             "res_it_s2_sinvstar", "max_res", "pass"},
            {},
            {}};
    struct Job {
        std::size_t g;
        long m;
    };
    std::vector<Job> jobs;
    for (std::size_t g = 0; g < s.geos.size(); ++g)
        for (long m : s.ms) jobs.push_back({g, m});
    std::vector<ops::IdentityResiduals> res(jobs.size());
    {
        Stopwatch sw{rep, "identities"};
        parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
            const auto geo = s.geos[jobs[i].g].build();
            const int m = static_cast<int>(jobs[i].m);
            const auto jac = jacobi::build_KNM(geo, jacobi_steps(m, s.steps));
            res[i] = ops::identity_residuals(ops::assemble_operators(geo, jac, {m, geo.n}));
        });
    }
    auto crit = [](const ops::IdentityResiduals& r) { return std::max({r.sstar_s, r.s_s2, r.s2_s, r.sinvstar_it}); };
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& r = res[i];
        const double mx = crit(r);
        bool ok = mx < s.tol_res;
        if (i > 0 && jobs[i - 1].g == jobs[i].g) {
            // every residual must drop by the decay factor or sit at the roundoff floor
            const auto& p = res[i - 1];
            const double now[] = {r.sstar_s, r.s_s2, r.s2_s, r.sinvstar_it};
            const double before[] = {p.sstar_s, p.s_s2, p.s2_s, p.sinvstar_it};
            for (int k = 0; k < 4; ++k) ok = ok && (now[k] < s.floor || now[k] * s.decay <= before[k]);
        }
        const auto& g = s.geos[jobs[i].g];
        add_row(t, {g.label(), std::to_string(g.n), std::to_string(jobs[i].m), N(r.sstar_s), N(r.s_s2), N(r.s_s2_raw), N(r.s2_s),
                    N(r.sinvstar_it), N(r.it_s2_sinvstar), N(mx)},
                ok);
    }
    rep.tables.push_back(std::move(t));
    if (s.perturb) {
        Stopwatch sw{rep, "perturbation"};
        Table p{"perturbation", {"geometry", "m", "delta", "eps", "norm", "slope", "pass"}, {}, {}};
        std::vector<ops::PerturbationResult> pr(s.geos.size());
        parallel_for(s.geos.size(), opt.threads, [&](std::size_t g) {
            const auto geo = s.geos[g].build();
            const int m = static_cast<int>(s.pm);
            const auto jac = jacobi::build_KNM(geo, jacobi_steps(m, s.steps));
            pr[g] = ops::perturb_J(geo, jac, {m, geo.n}, s.eps, s.delta, s.pscale);
        });
        for (std::size_t g = 0; g < s.geos.size(); ++g)
            for (std::size_t k = 0; k < pr[g].eps.size(); ++k) {
                const bool ok = pr[g].slope >= 0.9 && pr[g].slope <= 1.1;
                add_row(p, {s.geos[g].label(), std::to_string(s.pm), N(s.delta), N(pr[g].eps[k]), N(pr[g].norms[k]), N(pr[g].slope)}, ok);
            }
        rep.tables.push_back(std::move(p));
    }
    if (s.hardy) {
        Stopwatch sw{rep, "hardy"};
        Table h{"hardy", {"case", "m", "seeds", "max_ratio", "pass"}, {}, {}};
        for (long m : s.hardy_m) {
            double worst = 0.0;
            for (long k = 0; k < s.hardy_seeds; ++k) {
                std::mt19937_64 gen(stream_seed(rep.seed, static_cast<std::uint64_t>(k)));
                std::normal_distribution<double> nd;
                Vec phi(m);
                for (long i = 0; i < m; ++i) phi(i) = nd(gen);
                worst = std::max(worst, ops::hardy_ratio(phi));
            }
            add_row(h, {"random", std::to_string(m), std::to_string(s.hardy_seeds), N(worst)}, worst <= 4.0);
        }
        const long m = s.hardy_extremal_m;
        Vec phi(m);
        for (long i = 0; i < m; ++i) phi(i) = std::pow(1.0 - (i + 0.5) / m, -0.49);
        const double r = ops::hardy_ratio(phi);
        add_row(h, {"near_extremal", std::to_string(m), "0", N(r)}, r > 3.0 && r <= 4.0);
        rep.tables.push_back(std::move(h));
    }
}

void run_semiclassical(const SemiPlan& s, const RunOptions& opt, RunReport& rep) {
    Table t{"semiclassical",
            {"potential", "N", "lambda", "L", "h", "e2", "e2_over_lambda", "sigma1", "e2_schrodinger", "realization_gap",
             "refine_change", "laplace_constant", "laplace_target", "pass"},
            {},
            {}};
    struct Out {
        semiclassical::GapResult g;
        double refine = std::nan(""), laplace = std::nan(""), target = std::nan("");
    };
    struct Job {
        std::size_t p;
        double l;
    };
    std::vector<Job> jobs;
    for (std::size_t p = 0; p < s.pots.size(); ++p)
        for (double l : s.lambdas) jobs.push_back({p, l});
    std::vector<Out> out(jobs.size());
    Stopwatch sw{rep, "semiclassical"};
    parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
        const auto pot = semiclassical::WeightedPotential::from_json(s.pots[jobs[i].p]);
        semiclassical::GapOptions go;
        go.cells = static_cast<int>(s.cells);
        out[i].g = semiclassical::spectral_gap(pot, jobs[i].l, go);
        if (s.refine) {
            go.cells = 2 * out[i].g.cells;
            go.L = out[i].g.L;
            const auto fine = semiclassical::spectral_gap(pot, jobs[i].l, go);
            out[i].refine = std::abs(fine.e2 - out[i].g.e2) / fine.e2;
        }
        if (s.laplace) {
            out[i].laplace = semiclassical::laplace_constant(pot, jobs[i].l);
            out[i].target = 1.0 / std::sqrt(pot.hess0.determinant());
        }
    });
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto pot = semiclassical::WeightedPotential::from_json(s.pots[jobs[i].p]);
        const auto& o = out[i];
        const double s1 = pot.sigma1();
        bool ok = std::abs(o.g.e2_over_lambda - s1) <= s.tol_gap * s1 && o.g.realization_gap <= s.tol_real;
        if (s.refine) ok = ok && o.refine <= s.tol_refine;
        if (s.laplace) ok = ok && std::abs(o.laplace - o.target) <= s.tol_laplace * o.target;
        add_row(t, {pot.name, std::to_string(pot.N), N(o.g.lambda), N(o.g.L), N(o.g.h), N(o.g.e2), N(o.g.e2_over_lambda), N(s1),
                    N(o.g.e2_schrodinger), N(o.g.realization_gap), N(o.refine), N(o.laplace), N(o.target)},
                ok);
    }
    rep.tables.push_back(std::move(t));
}

void run_simulate(const SimPlan& s, const RunOptions& opt, RunReport& rep) {
    if (s.radial) {
        Stopwatch sw{rep, "radial"};
        const auto prof = geometry::RadialProfile::from_json(s.profile);
        Table r{"radial", {}, {}, {}};
        std::stringstream hs(diffusion::radial_csv_header());
        for (std::string c; std::getline(hs, c, ',');) r.columns.push_back(c);
        r.columns.push_back("pass");
        Table tl{"tail", {}, {}, {}};
        std::stringstream ts(diffusion::tail_csv_header());
        for (std::string c; std::getline(ts, c, ',');) tl.columns.push_back(c);
        tl.columns.push_back("pass");
        auto split = [](const std::string& line) {
            Row out;
            std::stringstream ss(line);
            for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
            return out;
        };
        std::vector<diffusion::TailFit> fits;
        for (std::size_t li = 0; li < s.lambdas.size(); ++li) {
            diffusion::RadialOptions ro;
            ro.threads = opt.threads;
            ro.keep_paths = s.dump;
            ro.implicit = s.implicit;
            const auto e = diffusion::simulate_radial_pair(prof, s.n, s.lambdas[li], s.d, static_cast<int>(s.m),
                                                           static_cast<int>(s.P), stream_seed(rep.seed, li), ro);
            add_row(r, split(diffusion::radial_csv_row(e)), e.dominance_fraction() == 1.0 && e.flagged() == 0);
            const auto fit = diffusion::empirical_tail(e, s.r_grid);
            for (const auto& row : fit.rows) add_row(tl, split(diffusion::tail_csv_row(e, row, fit)), fit.ok);
            fits.push_back(fit);
            if (!fit.note.empty()) rep.notes.push_back("lambda=" + N(s.lambdas[li]) + ": " + fit.note);
            if (s.dump) rep.blobs.emplace_back("paths_lambda" + N(s.lambdas[li]) + ".bin", diffusion::binary_bytes(e));
        }
        rep.tables.push_back(std::move(r));
        rep.tables.push_back(std::move(tl));
        // the tail exponent should be linear in lambda: slope ratio tracks the lambda ratio
        Table sc{"tail_scaling", {"lambda_lo", "lambda_hi", "slope_lo", "slope_hi", "slope_ratio", "lambda_ratio", "pass"}, {}, {}};
        for (std::size_t li = 1; li < s.lambdas.size(); ++li) {
            const double ratio = fits[li].slope / fits[li - 1].slope;
            const double lr = s.lambdas[li] / s.lambdas[li - 1];
            const bool ok = fits[li].ok && fits[li - 1].ok && std::abs(ratio / lr - 1.0) <= s.tail_rel;
            add_row(sc, {N(s.lambdas[li - 1]), N(s.lambdas[li]), N(fits[li - 1].slope), N(fits[li].slope), N(ratio), N(lr)}, ok);
        }
        if (!sc.rows.empty()) rep.tables.push_back(std::move(sc));
    }
    if (s.bridge) {
        Stopwatch sw{rep, "bridge"};
        diffusion::BridgeOptions bo;
        bo.chains = static_cast<int>(s.chains);
        bo.thin = static_cast<int>(s.thin);
        bo.threads = opt.threads;
        const auto b = diffusion::sample_bridge(s.space, s.b_lambda, static_cast<int>(s.b_m), s.b_d, s.chain, s.burnin,
                                                rep.seed, bo);
        const auto geo = jacobi::constant_curvature(3, s.b_d, s.space == diffusion::Space::H3 ? -1.0 : 0.0);
        const int m = static_cast<int>(s.b_m);
        const auto ops = ops::assemble_operators(geo, jacobi::build_KNM(geo, jacobi_steps(m, 0)), {m, 3});
        const auto trial = ops::trial_mode(ops, s.trial_eps);
        const auto rq = diffusion::rayleigh_trial(b, trial.phi);
        Table t{"bridge", {}, {}, {}};
        std::stringstream hs(diffusion::rayleigh_csv_header());
        for (std::string c; std::getline(hs, c, ',');) t.columns.push_back(c);
        t.columns.push_back("sigma1");
        t.columns.push_back("pass");
        Row row;
        std::stringstream rs(diffusion::rayleigh_csv_row(b, rq));
        for (std::string c; std::getline(rs, c, ',');) row.push_back(c);
        row.push_back(N(trial.sigma1));
        // flat: the quotient equals sigma1 = 1 up to MC error; curved: a window around the upper bound
        bool ok = s.space == diffusion::Space::Flat3 ? std::abs(rq.quotient - trial.sigma1) <= s.tol_se * rq.se
                                                           : rq.quotient >= s.q_lo && rq.quotient <= s.q_hi;
        ok = ok && rq.ess >= s.min_ess;
        add_row(t, row, ok);
        rep.tables.push_back(std::move(t));
    }
}

void run_bounds(const BoundsPlan& s, RunReport& rep) {
    Stopwatch sw{rep, "bounds"};
    if (!s.inputs.empty()) {
        Table t{"bounds", {"alpha", "beta", "r0", "R", "bound", "expected", "pass"}, {}, {}};
        for (const auto& in : s.inputs) {
            const diffusion::LowerBoundInputs li{in.a, in.b, in.r0};
            const double b = diffusion::gap_lower_bound(li);
            bool ok = true;
            if (in.expected) ok = std::abs(b - *in.expected) <= s.tol_expected * std::abs(*in.expected);
            add_row(t, {N(in.a), N(in.b), N(in.r0), N(diffusion::lower_bound_radius(li)), N(b), N(in.expected.value_or(std::nan("")))}, ok);
        }
        rep.tables.push_back(std::move(t));
    }
    if (s.sweep) {
        Table t{"bounds_sweep", {"lambda", "alpha", "beta", "bound_over_lambda", "limit", "rel_err", "pass"}, {}, {}};
        const double limit = 1.0 / (32.0 * s.c1 * s.r0 * s.r0);
        const double lmax = *std::max_element(s.sweep_lambda.begin(), s.sweep_lambda.end());
        for (double l : s.sweep_lambda) {
            const diffusion::LowerBoundInputs li{s.c1 / l, s.c2 * l, s.r0};
            const double v = diffusion::gap_lower_bound(li) / l;
            const double rel = std::abs(v - limit) / limit;
            add_row(t, {N(l), N(li.alpha), N(li.beta), N(v), N(limit), N(rel)}, l < lmax || rel <= s.tol_sweep);
        }
        rep.tables.push_back(std::move(t));
    }
}

void run_kernel(const KernelPlan& s, RunReport& rep) {
    Stopwatch sw{rep, "kernel"};
    Table mass{"kernel_mass", {"t", "mass", "abs_err", "pass"}, {}, {}};
    for (double t : s.t) {
        const double m = geometry::h3_kernel_mass(t);
        add_row(mass, {N(t), N(m), N(std::abs(m - 1.0))}, std::abs(m - 1.0) <= s.tol_mass);
    }
    rep.tables.push_back(std::move(mass));
    Table res{"kernel_residuals",
              {"t", "r", "gradient", "radial_hessian", "tangential_hessian", "gradient_ratio", "radial_hessian_ratio",
               "tangential_hessian_ratio", "pass"},
              {},
              {}};
    const auto rows = geometry::h3_kernel_asymptotics(s.t, s.r);
    const std::size_t nr = s.r.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& k = rows[i];
        double g = std::nan(""), rh = std::nan(""), th = std::nan("");
        bool ok = true;
        if (i >= nr) {
            const auto& p = rows[i - nr];
            g = p.gradient / k.gradient;
            rh = p.radial_hessian / k.radial_hessian;
            th = p.tangential_hessian / k.tangential_hessian;
            for (double x : {g, rh, th}) ok = ok && x >= s.lo && x <= s.hi;
        }
        add_row(res, {N(k.t), N(k.r), N(k.gradient), N(k.radial_hessian), N(k.tangential_hessian), N(g), N(rh), N(th)}, ok);
    }
    rep.tables.push_back(std::move(res));
}

}  // namespace

void validate_config(const json& config) { (void)parse(config); }

RunReport run(const json& config, const RunOptions& opt) {
    const Parsed p = parse(config);
    RunReport rep;
    rep.kind = p.kind;
    rep.digest = config_digest(config);
    rep.seed = opt.seed.value_or(p.seed);
    std::visit(
        [&](const auto& plan) {
            using T = std::decay_t<decltype(plan)>;
            if constexpr (std::is_same_v<T, Sigma1Plan>) run_sigma1(plan, opt, rep);
            else if constexpr (std::is_same_v<T, IdentitiesPlan>) run_identities(plan, opt, rep);
            else if constexpr (std::is_same_v<T, SemiPlan>) run_semiclassical(plan, opt, rep);
            else if constexpr (std::is_same_v<T, SimPlan>) run_simulate(plan, opt, rep);
            else if constexpr (std::is_same_v<T, BoundsPlan>) run_bounds(plan, rep);
            else run_kernel(plan, rep);
        },
        p.plan);
    return rep;
}

namespace {
std::string manifest(const RunReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "# kind=%s digest=%016llx seed=%llu", r.kind.c_str(),
                  static_cast<unsigned long long>(r.digest), static_cast<unsigned long long>(r.seed));
    return buf;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}
}  // namespace

std::string table_csv(const RunReport& r, const Table& t) {
    std::string out = manifest(r) + "\n" + join(t.columns) + "\n";
    for (const auto& row : t.rows) out += join(row) + "\n";
    return out;
}

json report_json(const RunReport& r) {
    json j;
    j["kind"] = r.kind;
    char d[20];
    std::snprintf(d, sizeof d, "%016llx", static_cast<unsigned long long>(r.digest));
    j["digest"] = d;
    j["seed"] = r.seed;
    j["pass"] = r.pass();
    j["notes"] = r.notes;
    for (const auto& t : r.tables) {
        json tj;
        tj["columns"] = t.columns;
        tj["rows"] = t.rows;
        std::vector<std::size_t> failed;
        for (std::size_t i = 0; i < t.pass.size(); ++i)
            if (!t.pass[i]) failed.push_back(i);
        tj["failed_rows"] = failed;
        j["tables"][t.name] = tj;
    }
    return j;
}

void export_report(const RunReport& r, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& t : r.tables) files.emplace_back(t.name + ".csv", table_csv(r, t));
    files.emplace_back(r.kind + "_report.json", report_json(r).dump(2) + "\n");
    json timing;
    for (const auto& [stage, sec] : r.stage_seconds) timing[stage] = sec;
    files.emplace_back(r.kind + "_timing.json", timing.dump(2) + "\n");
    for (const auto& b : r.blobs) files.push_back(b);

    std::vector<fs::path> staged;
    auto cleanup = [&] {
        for (const auto& p : staged) fs::remove(p, ec);
    };
    for (const auto& [name, bytes] : files) {
        if (name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
            cleanup();
            throw IoError("refusing to write outside the output directory: " + name);
        }
        const fs::path tmp = fs::path(dir) / (name + ".partial");
        std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
        if (o) o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        staged.push_back(tmp);
        if (!o) {
            cleanup();
            throw IoError("cannot write " + tmp.string());
        }
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
        fs::rename(staged[i], fs::path(dir) / files[i].first, ec);
        if (ec) {
            cleanup();
            throw IoError("cannot finalize " + files[i].first);
        }
    }
}

Table parse_csv(const std::string& text) {
    Table t;
    std::stringstream ss(text);
    std::string line;
    bool header = false;
    auto split = [](const std::string& l) {
        std::vector<std::string> v;
        std::stringstream s(l);
        for (std::string c; std::getline(s, c, ',');) v.push_back(c);
        return v;
    };
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            t.columns = split(line);
            header = true;
            continue;
        }
        auto row = split(line);
        if (row.size() != t.columns.size()) throw IoError("ragged CSV row");
        t.pass.push_back(row.back() == "pass");
        t.rows.push_back(std::move(row));
    }
    return t;
}

}  // namespace gaplab::cli
