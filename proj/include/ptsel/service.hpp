#pragma once

// HTTP service over an insert-only engine store. Wire formats are in
// docs/formats.md.

#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "ptsel/archive.hpp"
#include "ptsel/dataset_io.hpp"
#include "ptsel/documents.hpp"
#include "ptsel/pipeline.hpp"

// After Eigen: glibc's <resolv.h>, pulled in here, defines a `_res` macro
// that collides with Eigen's product kernels.
#include "httplib.h"

namespace ptsel::service {

using io::json;

inline constexpr const char* kEngineInfoSchema = "ptsel-engine-info/1";
inline constexpr const char* kEngineListSchema = "ptsel-engine-list/1";
inline constexpr const char* kRecommendRequestSchema = "ptsel-recommend-request/1";
inline constexpr const char* kBatchRequestSchema = "ptsel-recommend-batch-request/1";

/// Seeds the server picks stay below 2^53 so JSON clients keep them exact.
inline constexpr std::uint64_t kSeedMask = (std::uint64_t{1} << 53) - 1;

struct StoredEngine {
    std::string id;
    FittedEngine engine;
    json info;
};

inline json engine_info(const std::string& id, const FittedEngine& eng) {
    json j;
    j["schema"] = kEngineInfoSchema;
    j["engine_id"] = id;
    j["J"] = eng.J();
    j["K"] = eng.K();
    j["r"] = eng.r();
    j["responses"] = json::array();
    for (const auto& s : eng.specs)
        j["responses"].push_back({{"name", s.name}, {"kind", to_string(s.kind)}, {"transform", to_string(s.transform)}});
    j["arms"] = eng.arm_names;
    j["arm_sizes"] = eng.arm_sizes;
    j["covariates"] = eng.covariate_names;
    j["config_hash"] = io::hex64(io::fnv1a64(io::engine_config_to_json(eng.config).dump()));
    j["diagnostics"] = json::array();
    for (std::size_t r = 0; r < eng.J(); ++r) {
        for (std::size_t k = 0; k < eng.K(); ++k) {
            const auto& f = eng.fits[r][k];
            json d{{"response", eng.specs[r].name},
                   {"arm", k + 1},
                   {"h", f.h_tilde.value()},
                   {"objective", f.objective_value},
                   {"finite_restarts", f.finite_restarts},
                   {"evaluations", f.evaluations},
                   {"surface_h", eng.surfaces[r][k].h.value()}};
            if (const auto& c = eng.censoring[r][k]) {
                std::size_t censored = 0, clamped = 0;
                for (const auto& t : f.training) censored += t.event ? 0 : 1;
                for (bool b : c->weights.floor_applied) clamped += b ? 1 : 0;
                d["censored_fraction"] = static_cast<double>(censored) / static_cast<double>(f.training.size());
                d["clamped_weights"] = clamped;
                d["rank_deficient_jumps"] = c->model.rank_deficient.size();
            }
            j["diagnostics"].push_back(d);
        }
    }
    return j;
}

/// Concurrent map from engine id to an immutable engine. Inserting an id
/// that is already present keeps the stored engine.
class EngineStore {
public:
    std::shared_ptr<const StoredEngine> insert(FittedEngine eng) {
        auto id = io::engine_id(eng);
        auto entry = std::make_shared<StoredEngine>();
        entry->info = engine_info(id, eng);
        entry->id = id;
        entry->engine = std::move(eng);
        std::unique_lock lock(mutex_);
        const auto [it, inserted] = engines_.emplace(id, std::move(entry));
        return it->second;
    }

    std::shared_ptr<const StoredEngine> find(const std::string& id) const {
        std::shared_lock lock(mutex_);
        const auto it = engines_.find(id);
        return it == engines_.end() ? nullptr : it->second;
    }

    std::vector<std::shared_ptr<const StoredEngine>> list() const {
        std::shared_lock lock(mutex_);
        std::vector<std::shared_ptr<const StoredEngine>> out;
        for (const auto& [id, e] : engines_) out.push_back(e);
        return out;
    }

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const StoredEngine>> engines_;
};

/// A request the client got wrong; carries the HTTP status and field.
struct RequestError {
    int status;
    std::string code;
    std::string field;
    std::string message;
};

namespace detail {

inline json parse_body(const std::string& body) {
    try {
        auto j = json::parse(body);
        if (!j.is_object()) throw RequestError{400, "SchemaMismatch", "body", "request body must be a JSON object"};
        return j;
    } catch (const json::exception&) {
        throw RequestError{400, "SchemaMismatch", "body", "request body is not valid JSON"};
    }
}

inline void check_keys(const json& j, std::initializer_list<const char*> known) {
    for (const auto& [key, v] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw RequestError{400, "SchemaMismatch", key, "unknown field"};
    }
}

inline std::vector<double> real_array(const json& j, const std::string& field) {
    if (!j.is_array()) throw RequestError{400, "SchemaMismatch", field, "expected an array of numbers"};
    std::vector<double> out;
    for (const auto& v : j) {
        if (!v.is_number()) throw RequestError{400, "SchemaMismatch", field, "expected an array of numbers"};
        out.push_back(v.get<double>());
    }
    return out;
}

struct Common {
    std::vector<double> weights;
    double rho = 1.0;
    std::uint64_t seed = 0;
};

inline Common parse_common(const json& j, const FittedEngine& eng, const char* schema) {
    if (j.contains("schema") && j["schema"] != schema)
        throw RequestError{400, "SchemaMismatch", "schema", std::string("expected '") + schema + "'"};
    if (!j.contains("weights")) throw RequestError{400, "SchemaMismatch", "weights", "required"};
    Common c;
    c.weights = real_array(j["weights"], "weights");
    if (c.weights.size() != eng.J())
        throw RequestError{422, "LengthMismatch", "weights",
                           "expected " + std::to_string(eng.J()) + " weights, got " + std::to_string(c.weights.size())};
    double sum = 0.0;
    for (double w : c.weights) {
        if (!std::isfinite(w) || w < 0.0) throw RequestError{400, "BadValue", "weights", "weights must be nonnegative"};
        sum += w;
    }
    if (!(sum > 0.0)) throw RequestError{400, "BadValue", "weights", "weights must not all be zero"};
    c.rho = eng.config.rho;
    if (j.contains("rho") && !j["rho"].is_null()) {
        if (!j["rho"].is_number()) throw RequestError{400, "SchemaMismatch", "rho", "expected a number"};
        c.rho = j["rho"].get<double>();
        if (!std::isfinite(c.rho) || c.rho <= 0.0) throw RequestError{400, "BadValue", "rho", "rho must be positive"};
    }
    if (j.contains("seed") && !j["seed"].is_null()) {
        if (!j["seed"].is_number_unsigned()) throw RequestError{400, "SchemaMismatch", "seed", "expected a nonnegative integer"};
        c.seed = j["seed"].get<std::uint64_t>();
    } else {
        static std::mutex m;
        static std::random_device rd;
        std::lock_guard lock(m);
        c.seed = ((std::uint64_t{rd()} << 32) | rd()) & kSeedMask;
    }
    return c;
}

inline Eigen::VectorXd covariate_row(const json& j, const FittedEngine& eng, const std::string& field) {
    const auto v = real_array(j, field);
    if (v.size() != eng.r())
        throw RequestError{422, "LengthMismatch", field,
                           "expected " + std::to_string(eng.r()) + " covariates, got " + std::to_string(v.size())};
    for (double x : v)
        if (!std::isfinite(x)) throw RequestError{400, "BadValue", field, "covariates must be finite"};
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::length_mismatch: return 422;
        case ErrorCode::invalid_argument:
        case ErrorCode::bad_value:
        case ErrorCode::schema_mismatch:
        case ErrorCode::usage: return 400;
        case ErrorCode::not_found: return 404;
        case ErrorCode::fit_failed:
        case ErrorCode::too_few_events:
        case ErrorCode::degenerate_design:
        case ErrorCode::degenerate_sample:
        case ErrorCode::empty_stratum:
        case ErrorCode::denominator_underflow:
        case ErrorCode::too_large: return 422;
        default: return 500;
    }
}

}  // namespace detail

struct ServiceOptions {
    unsigned fit_threads = 1;
    std::size_t max_batch_rows = 10000;
};

class Service {
public:
    explicit Service(EngineStore& store, ServiceOptions options = {}) : store_(store), options_(options) { routes(); }

    httplib::Server& server() { return server_; }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    static void send(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump() + "\n", "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                           const std::string& field = "") {
        json j{{"schema", io::kErrorSchema}, {"code", code}, {"message", message}};
        if (!field.empty()) j["field"] = field;
        send(res, status, j);
    }

    template <class F>
    static void guarded(httplib::Response& res, F&& body) {
        try {
            body();
        } catch (const RequestError& e) {
            send_error(res, e.status, e.code, e.message, e.field);
        } catch (const Error& e) {
            const int status = detail::status_for(e.code());
            if (status == 500) send_error(res, 500, "Internal", "internal error");
            else send_error(res, status, std::string(to_string(e.code())), e.what());
        } catch (...) {
            send_error(res, 500, "Internal", "internal error");
        }
    }

    std::shared_ptr<const StoredEngine> lookup(const httplib::Request& req) const {
        const auto id = req.path_params.at("id");
        auto e = store_.find(id);
        if (!e) throw RequestError{404, "NotFound", "id", "no engine '" + id + "'"};
        return e;
    }

    void routes() {
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Headers", "Content-Type"},
                                     {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        server_.Post("/engines", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                if (!req.is_multipart_form_data())
                    throw RequestError{400, "SchemaMismatch", "body", "expected multipart/form-data with a 'dataset' part"};
                if (!req.has_file("dataset")) throw RequestError{400, "SchemaMismatch", "dataset", "required"};
                for (const auto& [name, part] : req.files)
                    if (name != "dataset" && name != "config") throw RequestError{400, "SchemaMismatch", name, "unknown part"};
                std::istringstream ds(req.get_file_value("dataset").content);
                TrialDataset data;
                try {
                    data = io::parse_dataset(ds);
                } catch (const Error& e) {
                    throw RequestError{400, std::string(to_string(e.code())), "dataset", e.what()};
                }
                io::FitConfig cfg;
                if (req.has_file("config")) {
                    try {
                        cfg = io::parse_config(req.get_file_value("config").content);
                    } catch (const Error& e) {
                        throw RequestError{400, std::string(to_string(e.code())), "config", e.what()};
                    }
                }
                std::vector<ResponseSpec> specs;
                try {
                    specs = io::resolve_specs(data.responses, cfg.overrides);
                } catch (const Error& e) {
                    throw RequestError{400, std::string(to_string(e.code())), "config", e.what()};
                }
                auto stored = store_.insert(fit_engine(data, specs, cfg.engine, options_.fit_threads));
                res.set_header("Location", "/engines/" + stored->id);
                send(res, 201, stored->info);
            });
        });

        server_.Get("/engines", [this](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] {
                json j{{"schema", kEngineListSchema}, {"engines", json::array()}};
                for (const auto& e : store_.list()) j["engines"].push_back(e->info);
                send(res, 200, j);
            });
        });

        server_.Get("/engines/:id", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send(res, 200, lookup(req)->info); });
        });

        server_.Post("/engines/:id/recommend", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto stored = lookup(req);
                const auto& eng = stored->engine;
                const auto body = detail::parse_body(req.body);
                detail::check_keys(body, {"schema", "covariates", "weights", "rho", "seed"});
                if (!body.contains("covariates")) throw RequestError{400, "SchemaMismatch", "covariates", "required"};
                const auto x0 = detail::covariate_row(body["covariates"], eng, "covariates");
                const auto c = detail::parse_common(body, eng, kRecommendRequestSchema);
                Rng rng = recommend_stream(c.seed, 0);
                const auto rec = recommend(eng, x0, c.weights, c.rho, rng);
                send(res, 200, io::recommendation_json(eng, stored->id, c.seed, x0, rec));
            });
        });

        server_.Post("/engines/:id/recommend-batch", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto stored = lookup(req);
                const auto& eng = stored->engine;
                const auto body = detail::parse_body(req.body);
                detail::check_keys(body, {"schema", "covariates", "weights", "rho", "seed"});
                if (!body.contains("covariates") || !body["covariates"].is_array())
                    throw RequestError{400, "SchemaMismatch", "covariates", "expected an array of covariate rows"};
                const auto& rows = body["covariates"];
                if (rows.size() > options_.max_batch_rows)
                    throw RequestError{400, "TooLarge", "covariates",
                                       "at most " + std::to_string(options_.max_batch_rows) + " rows per batch"};
                Eigen::MatrixXd X0(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(eng.r()));
                for (std::size_t i = 0; i < rows.size(); ++i)
                    X0.row(static_cast<Eigen::Index>(i)) =
                        detail::covariate_row(rows[i], eng, "covariates[" + std::to_string(i) + "]").transpose();
                const auto c = detail::parse_common(body, eng, kBatchRequestSchema);
                const auto entries = recommend_batch(eng, X0, c.weights, c.rho, c.seed);
                send(res, 200, io::batch_json(eng, stored->id, c.seed, X0, entries));
            });
        });

        server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
            send_error(res, 500, "Internal", "internal error");
        });
        server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty() && res.status == 404) send_error(res, 404, "NotFound", "no such route");
        });
    }

    EngineStore& store_;
    ServiceOptions options_;
    httplib::Server server_;
};

}  // namespace ptsel::service
