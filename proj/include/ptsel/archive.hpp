#pragma once

// JSON engine configuration and the versioned engine archive. See
// docs/formats.md.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ptsel/errors.hpp"
#include "ptsel/pipeline.hpp"

namespace ptsel::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kConfigSchema = "ptsel-config/1";
inline constexpr const char* kEngineSchema = "ptsel-engine/1";

struct ResponseOverride {
    std::string name;
    std::optional<ResponseKind> kind;
    std::optional<Transform> transform;
};

struct FitConfig {
    EngineConfig engine;
    std::vector<ResponseOverride> overrides;  ///< applied by name over the dataset manifest
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

namespace detail {

[[noreturn]] inline void field_error(ErrorCode code, const std::string& field, const std::string& msg) {
    fail(code, "field '" + field + "': " + msg);
}

template <class T>
T get_number(const json& obj, const std::string& key, T fallback, const std::string& prefix = "") {
    const auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->template get<std::int64_t>() < 0))
            field_error(ErrorCode::schema_mismatch, prefix + key, "expected a nonnegative integer");
        return it->template get<T>();
    } else {
        if (!it->is_number()) field_error(ErrorCode::schema_mismatch, prefix + key, "expected a number");
        return it->template get<T>();
    }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& prefix = "") {
    for (const auto& [key, value] : obj.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) field_error(ErrorCode::schema_mismatch, prefix + key, "unknown field");
    }
}

inline ResponseKind kind_from(const std::string& s, const std::string& field) {
    if (s == "complete") return ResponseKind::complete;
    if (s == "right_censored") return ResponseKind::right_censored;
    field_error(ErrorCode::schema_mismatch, field, "expected 'complete' or 'right_censored'");
}

inline Transform transform_from(const std::string& s, const std::string& field) {
    if (s == "identity") return Transform::identity;
    if (s == "log") return Transform::log;
    field_error(ErrorCode::schema_mismatch, field, "expected 'identity' or 'log'");
}

inline void check_range(bool ok, const std::string& field, const std::string& msg) {
    if (!ok) field_error(ErrorCode::bad_value, field, msg);
}

}  // namespace detail

/// Missing fields take their defaults; unknown fields are rejected.
inline FitConfig config_from_json(const json& j) {
    using namespace detail;
    if (!j.is_object()) fail(ErrorCode::schema_mismatch, "config must be a JSON object");
    reject_unknown(j, {"schema", "seed", "kernel", "restarts", "screen_iterations", "refine_top", "max_iterations",
                       "size_tolerance", "weight_floor", "surface_bandwidth", "rho", "max_exact", "ce", "responses"});
    if (j.contains("schema") && j["schema"] != kConfigSchema)
        field_error(ErrorCode::schema_mismatch, "schema", std::string("expected '") + kConfigSchema + "'");
    if (j.contains("kernel") && j["kernel"] != "gaussian")
        field_error(ErrorCode::bad_value, "kernel", "only 'gaussian' is available");

    FitConfig c;
    auto& e = c.engine;
    e.seed = get_number<std::uint64_t>(j, "seed", e.seed);
    e.sim.restarts = get_number<int>(j, "restarts", e.sim.restarts);
    e.sim.screen_iterations = get_number<int>(j, "screen_iterations", e.sim.screen_iterations);
    e.sim.refine_top = get_number<int>(j, "refine_top", e.sim.refine_top);
    e.sim.optimizer.max_iterations = get_number<int>(j, "max_iterations", e.sim.optimizer.max_iterations);
    e.sim.optimizer.size_tolerance = get_number<double>(j, "size_tolerance", e.sim.optimizer.size_tolerance);
    e.weight_floor = get_number<double>(j, "weight_floor", e.weight_floor);
    if (j.contains("surface_bandwidth") && !j["surface_bandwidth"].is_null())
        e.surface_bandwidth = get_number<double>(j, "surface_bandwidth", 0.0);
    e.rho = get_number<double>(j, "rho", e.rho);
    e.max_exact = get_number<std::size_t>(j, "max_exact", e.max_exact);
    if (j.contains("ce")) {
        const auto& ce = j["ce"];
        if (!ce.is_object()) field_error(ErrorCode::schema_mismatch, "ce", "expected an object");
        reject_unknown(ce, {"iterations", "sample_size", "elite_fraction", "smoothing", "stagnation_limit"}, "ce.");
        e.ce.iterations = get_number<int>(ce, "iterations", e.ce.iterations, "ce.");
        e.ce.sample_size = get_number<std::size_t>(ce, "sample_size", e.ce.sample_size, "ce.");
        e.ce.elite_fraction = get_number<double>(ce, "elite_fraction", e.ce.elite_fraction, "ce.");
        e.ce.smoothing = get_number<double>(ce, "smoothing", e.ce.smoothing, "ce.");
        e.ce.stagnation_limit = get_number<int>(ce, "stagnation_limit", e.ce.stagnation_limit, "ce.");
    }
    if (j.contains("responses")) {
        if (!j["responses"].is_array()) field_error(ErrorCode::schema_mismatch, "responses", "expected an array");
        for (const auto& r : j["responses"]) {
            if (!r.is_object() || !r.contains("name") || !r["name"].is_string())
                field_error(ErrorCode::schema_mismatch, "responses", "each entry needs a string 'name'");
            reject_unknown(r, {"name", "kind", "transform"}, "responses.");
            ResponseOverride o{r["name"].get<std::string>(), std::nullopt, std::nullopt};
            if (r.contains("kind")) o.kind = kind_from(r["kind"].get<std::string>(), "responses.kind");
            if (r.contains("transform")) o.transform = transform_from(r["transform"].get<std::string>(), "responses.transform");
            c.overrides.push_back(o);
        }
    }

    check_range(e.sim.restarts >= 1 && e.sim.restarts <= 100, "restarts", "must lie in 1..100");
    check_range(e.sim.screen_iterations >= 1, "screen_iterations", "must be at least 1");
    check_range(e.sim.refine_top >= 0 && e.sim.refine_top <= e.sim.restarts, "refine_top", "must lie in 0..restarts");
    check_range(e.sim.optimizer.max_iterations >= 1 && e.sim.optimizer.max_iterations <= 100000, "max_iterations",
                "must lie in 1..100000");
    check_range(e.sim.optimizer.size_tolerance > 0.0 && e.sim.optimizer.size_tolerance < 1.0, "size_tolerance",
                "must lie in (0, 1)");
    check_range(e.weight_floor > 0.0 && e.weight_floor <= 1.0, "weight_floor", "must lie in (0, 1]");
    check_range(!e.surface_bandwidth || (std::isfinite(*e.surface_bandwidth) && *e.surface_bandwidth > 0.0),
                "surface_bandwidth", "must be positive or null");
    check_range(std::isfinite(e.rho) && e.rho > 0.0, "rho", "must be positive");
    check_range(e.max_exact >= 1 && e.max_exact <= kMaxExactItems, "max_exact", "must lie in 1..8");
    check_range(e.ce.iterations >= 1, "ce.iterations", "must be at least 1");
    check_range(e.ce.elite_fraction > 0.0 && e.ce.elite_fraction <= 1.0, "ce.elite_fraction", "must lie in (0, 1]");
    check_range(e.ce.smoothing > 0.0 && e.ce.smoothing <= 1.0, "ce.smoothing", "must lie in (0, 1]");
    check_range(e.ce.stagnation_limit >= 1, "ce.stagnation_limit", "must be at least 1");
    return c;
}

inline FitConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        fail(ErrorCode::schema_mismatch, std::string("config is not valid JSON: ") + ex.what());
    }
    return config_from_json(j);
}

inline FitConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::not_found, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Every knob with its resolved value; the engine archive embeds this.
inline json engine_config_to_json(const EngineConfig& e) {
    json j;
    j["schema"] = kConfigSchema;
    j["seed"] = e.seed;
    j["kernel"] = "gaussian";
    j["restarts"] = e.sim.restarts;
    j["screen_iterations"] = e.sim.screen_iterations;
    j["refine_top"] = e.sim.refine_top;
    j["max_iterations"] = e.sim.optimizer.max_iterations;
    j["size_tolerance"] = e.sim.optimizer.size_tolerance;
    j["weight_floor"] = e.weight_floor;
    j["surface_bandwidth"] = e.surface_bandwidth ? json(*e.surface_bandwidth) : json(nullptr);
    j["rho"] = e.rho;
    j["max_exact"] = e.max_exact;
    j["ce"] = {{"iterations", e.ce.iterations},
               {"sample_size", e.ce.sample_size},
               {"elite_fraction", e.ce.elite_fraction},
               {"smoothing", e.ce.smoothing},
               {"stagnation_limit", e.ce.stagnation_limit}};
    return j;
}

/// The dataset's response specs with the config's per-name overrides applied.
inline std::vector<ResponseSpec> resolve_specs(const std::vector<ResponseSpec>& manifest,
                                               const std::vector<ResponseOverride>& overrides) {
    auto specs = manifest;
    for (const auto& o : overrides) {
        bool found = false;
        for (auto& s : specs) {
            if (s.name != o.name) continue;
            found = true;
            if (o.kind) s.kind = *o.kind;
            if (o.transform) s.transform = *o.transform;
        }
        if (!found) fail(ErrorCode::schema_mismatch, "config overrides unknown response '" + o.name + "'");
    }
    return specs;
}

namespace detail {

inline json vec(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Eigen::VectorXd to_vec(const json& a) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
    return v;
}

inline json spec_json(const ResponseSpec& s) {
    return {{"name", s.name}, {"kind", to_string(s.kind)}, {"transform", to_string(s.transform)}};
}

}  // namespace detail

inline json engine_to_json(const FittedEngine& eng) {
    using detail::vec;
    json j;
    j["schema"] = kEngineSchema;
    j["engine_id"] = "";
    const auto config = engine_config_to_json(eng.config);
    j["config_hash"] = hex64(fnv1a64(config.dump()));
    j["config"] = config;
    j["covariates"] = eng.covariate_names;
    j["arms"] = eng.arm_names;
    j["arm_sizes"] = eng.arm_sizes;
    j["responses"] = json::array();
    for (const auto& s : eng.specs) j["responses"].push_back(detail::spec_json(s));

    j["fits"] = json::array();
    j["censoring"] = json::array();
    j["surfaces"] = json::array();
    for (std::size_t r = 0; r < eng.J(); ++r) {
        json fits = json::array(), cens = json::array(), surfs = json::array();
        for (std::size_t k = 0; k < eng.K(); ++k) {
            const auto& f = eng.fits[r][k];
            json tr = {{"index", json::array()}, {"response", json::array()}, {"weight", json::array()}, {"event", json::array()}};
            for (const auto& t : f.training) {
                tr["index"].push_back(t.index);
                tr["response"].push_back(t.response);
                tr["weight"].push_back(t.weight);
                tr["event"].push_back(t.event ? 1 : 0);
            }
            fits.push_back({{"beta", vec(f.beta)},
                            {"h", f.h_tilde.value()},
                            {"objective", f.objective_value},
                            {"censored_mode", f.censored_mode},
                            {"finite_restarts", f.finite_restarts},
                            {"evaluations", f.evaluations},
                            {"training", tr}});

            if (const auto& c = eng.censoring[r][k]) {
                json incs = json::array();
                for (const auto& inc : c->model.increments) incs.push_back(vec(inc));
                std::vector<int> floored;
                for (bool b : c->weights.floor_applied) floored.push_back(b ? 1 : 0);
                cens.push_back({{"covariate_dim", c->model.covariate_dim()},
                                {"jump_times", c->model.jump_times},
                                {"increments", incs},
                                {"rank_deficient", c->model.rank_deficient},
                                {"weights", c->weights.weights},
                                {"floor_applied", floored},
                                {"floor", c->weights.floor}});
            } else {
                cens.push_back(nullptr);
            }

            const auto& m = eng.surfaces[r][k];
            json sj = {{"h", m.h.value()}, {"censored_mode", m.censored_mode}, {"s", json::array()},
                       {"d", json::array()}, {"y", json::array()}, {"factor", json::array()}};
            for (const auto& t : m.tuples) {
                sj["s"].push_back(t.s);
                sj["d"].push_back(t.d);
                sj["y"].push_back(t.y);
                sj["factor"].push_back(t.factor);
            }
            surfs.push_back(sj);
        }
        j["fits"].push_back(fits);
        j["censoring"].push_back(cens);
        j["surfaces"].push_back(surfs);
    }
    return j;
}

/// Content hash of the archive with its id blanked.
inline std::string compute_engine_id(json archive) {
    archive["engine_id"] = "";
    return "e" + hex64(fnv1a64(archive.dump()));
}

inline std::string serialize_engine(const FittedEngine& eng) {
    auto j = engine_to_json(eng);
    j["engine_id"] = compute_engine_id(j);
    return j.dump() + "\n";
}

inline std::string engine_id(const FittedEngine& eng) { return compute_engine_id(engine_to_json(eng)); }

inline FittedEngine engine_from_json(const json& j) {
    require(j.is_object() && j.contains("schema"), ErrorCode::schema_mismatch, "not an engine archive");
    const auto schema = j["schema"].get<std::string>();
    require(schema == kEngineSchema, ErrorCode::schema_mismatch,
            "engine archive schema '" + schema + "' is not supported (expected '" + kEngineSchema + "')");
    FittedEngine eng;
    try {
        const auto fc = config_from_json(j.at("config"));
        require(fc.overrides.empty(), ErrorCode::schema_mismatch, "archived config must not carry overrides");
        eng.config = fc.engine;
        require(j.at("config_hash").get<std::string>() == hex64(fnv1a64(engine_config_to_json(eng.config).dump())),
                ErrorCode::schema_mismatch, "config hash does not match the archived config");
        eng.covariate_names = j.at("covariates").get<std::vector<std::string>>();
        eng.arm_names = j.at("arms").get<std::vector<std::string>>();
        eng.arm_sizes = j.at("arm_sizes").get<std::vector<std::size_t>>();
        for (const auto& s : j.at("responses"))
            eng.specs.push_back({s.at("name").get<std::string>(),
                                 detail::kind_from(s.at("kind").get<std::string>(), "responses.kind"),
                                 detail::transform_from(s.at("transform").get<std::string>(), "responses.transform")});
        const auto J = eng.specs.size(), K = eng.arm_names.size();
        require(j.at("fits").size() == J && j.at("censoring").size() == J && j.at("surfaces").size() == J,
                ErrorCode::schema_mismatch, "archive tables do not match the response count");
        eng.fits.assign(J, std::vector<SimFit>(K));
        eng.censoring.assign(J, std::vector<std::optional<CensoringFit>>(K));
        eng.surfaces.assign(J, std::vector<MeanSurface>(K));
        for (std::size_t r = 0; r < J; ++r) {
            require(j["fits"][r].size() == K && j["censoring"][r].size() == K && j["surfaces"][r].size() == K,
                    ErrorCode::schema_mismatch, "archive tables do not match the arm count");
            for (std::size_t k = 0; k < K; ++k) {
                const auto& fj = j["fits"][r][k];
                auto& f = eng.fits[r][k];
                f.beta = detail::to_vec(fj.at("beta"));
                require(static_cast<std::size_t>(f.beta.size()) == eng.r(), ErrorCode::schema_mismatch,
                        "index vector length does not match the covariates");
                f.h_tilde = Bandwidth(fj.at("h").get<double>());
                f.objective_value = fj.at("objective").get<double>();
                f.censored_mode = fj.at("censored_mode").get<bool>();
                f.finite_restarts = fj.at("finite_restarts").get<int>();
                f.evaluations = fj.at("evaluations").get<int>();
                const auto& tr = fj.at("training");
                const auto n = tr.at("index").size();
                require(tr.at("response").size() == n && tr.at("weight").size() == n && tr.at("event").size() == n,
                        ErrorCode::schema_mismatch, "training cache columns differ in length");
                for (std::size_t i = 0; i < n; ++i)
                    f.training.push_back({tr["index"][i].get<double>(), tr["response"][i].get<double>(),
                                          tr["weight"][i].get<double>(), tr["event"][i].get<int>() != 0});

                const auto& cj = j["censoring"][r][k];
                if (!cj.is_null()) {
                    CensoringFit c;
                    c.model.design_at_fit.resize(0, static_cast<Eigen::Index>(cj.at("covariate_dim").get<std::size_t>()));
                    c.model.jump_times = cj.at("jump_times").get<std::vector<double>>();
                    for (const auto& inc : cj.at("increments")) c.model.increments.push_back(detail::to_vec(inc));
                    c.model.rank_deficient = cj.at("rank_deficient").get<std::vector<std::size_t>>();
                    c.weights.weights = cj.at("weights").get<std::vector<double>>();
                    for (int b : cj.at("floor_applied").get<std::vector<int>>()) c.weights.floor_applied.push_back(b != 0);
                    c.weights.floor = cj.at("floor").get<double>();
                    eng.censoring[r][k] = std::move(c);
                }

                const auto& sj = j["surfaces"][r][k];
                auto& m = eng.surfaces[r][k];
                m.response = r;
                m.arm = k;
                m.h = Bandwidth(sj.at("h").get<double>());
                m.censored_mode = sj.at("censored_mode").get<bool>();
                const auto ns = sj.at("s").size();
                require(sj.at("d").size() == ns && sj.at("y").size() == ns && sj.at("factor").size() == ns,
                        ErrorCode::schema_mismatch, "surface columns differ in length");
                for (std::size_t i = 0; i < ns; ++i) {
                    const auto d = sj["d"][i].get<std::size_t>();
                    require(d < K, ErrorCode::schema_mismatch, "surface stratum label out of range");
                    m.tuples.push_back({sj["s"][i].get<double>(), d, sj["y"][i].get<double>(), sj["factor"][i].get<double>()});
                }
            }
        }
    } catch (const json::exception& ex) {
        fail(ErrorCode::schema_mismatch, std::string("malformed engine archive: ") + ex.what());
    }
    return eng;
}

inline FittedEngine parse_engine(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        fail(ErrorCode::schema_mismatch, std::string("engine archive is not valid JSON: ") + ex.what());
    }
    auto eng = engine_from_json(j);
    require(j.value("engine_id", std::string()) == compute_engine_id(j), ErrorCode::schema_mismatch,
            "engine id does not match the archive contents");
    return eng;
}

inline FittedEngine load_engine(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::not_found, "cannot open engine archive '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_engine(ss.str());
}

}  // namespace ptsel::io
