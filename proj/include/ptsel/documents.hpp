#pragma once

// Output documents: recommendation JSON, batch JSON, error JSON and the
// accuracy report TSV. See docs/formats.md.

#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ptsel/archive.hpp"
#include "ptsel/dataset_io.hpp"
#include "ptsel/pipeline.hpp"
#include "ptsel/simgen.hpp"

namespace ptsel::io {

inline constexpr const char* kRecommendationSchema = "ptsel-recommendation/1";
inline constexpr const char* kBatchSchema = "ptsel-recommendation-batch/1";
inline constexpr const char* kErrorSchema = "ptsel-error/1";
inline constexpr const char* kReportSchema = "ptsel-accuracy-report/1";

namespace detail {

inline json pairs_json(const std::vector<ResponseArm>& v, const FittedEngine& eng) {
    json a = json::array();
    for (const auto& p : v) a.push_back({{"response", eng.specs[p.response].name}, {"arm", p.arm + 1}});
    return a;
}

inline json ranks_json(const Ranking& v) {
    json a = json::array();
    for (int x : v) a.push_back(x);
    return a;
}

}  // namespace detail

/// Body shared by single and batch documents. Arms are 1-based.
inline json recommendation_body(const FittedEngine& eng, const Recommendation& rec) {
    json j;
    j["arm"] = rec.k_star + 1;
    j["arm_name"] = eng.arm_names[rec.k_star];
    j["v_star"] = detail::ranks_json(rec.v_star);
    j["psi"] = rec.psi;
    j["scores"] = json::array();
    for (std::size_t r = 0; r < rec.scores.size(); ++r)
        j["scores"].push_back({{"response", eng.specs[r].name}, {"s", rec.scores[r].s}, {"d", rec.scores[r].d + 1}});
    j["mu"] = json::array();
    for (std::size_t r = 0; r < rec.mu.size(); ++r)
        j["mu"].push_back({{"response", eng.specs[r].name}, {"values", rec.mu[r]}, {"ranks", detail::ranks_json(rec.lists[r].ranks)}});
    j["weights"] = rec.weights;
    j["weights_normalized"] = rec.weights_normalized;
    j["rho"] = rec.rho;
    j["flags"] = {{"low_confidence", detail::pairs_json(rec.low_confidence, eng)},
                  {"clamped_weights", detail::pairs_json(rec.clamped_weights, eng)},
                  {"tie_break", rec.tie_break_fired}};
    return j;
}

inline json recommendation_json(const FittedEngine& eng, const std::string& engine_id, std::uint64_t seed,
                                const Eigen::VectorXd& x0, const Recommendation& rec) {
    json j;
    j["schema"] = kRecommendationSchema;
    j["engine_id"] = engine_id;
    j["seed"] = seed;
    j["x"] = json::array();
    for (Eigen::Index c = 0; c < x0.size(); ++c) j["x"].push_back(x0(c));
    const auto body = recommendation_body(eng, rec);
    for (const auto& [k, v] : body.items()) j[k] = v;
    return j;
}

inline json error_json(const Error& e, const std::string& field = "") {
    json j{{"schema", kErrorSchema}, {"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (!field.empty()) j["field"] = field;
    return j;
}

inline json batch_json(const FittedEngine& eng, const std::string& engine_id, std::uint64_t seed,
                       const Eigen::MatrixXd& X0, const std::vector<BatchEntry>& entries) {
    json j;
    j["schema"] = kBatchSchema;
    j["engine_id"] = engine_id;
    j["seed"] = seed;
    j["results"] = json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        json row;
        row["row"] = i;
        row["x"] = json::array();
        for (Eigen::Index c = 0; c < X0.cols(); ++c) row["x"].push_back(X0(static_cast<Eigen::Index>(i), c));
        if (entries[i].recommendation) {
            row["ok"] = true;
            const auto body = recommendation_body(eng, *entries[i].recommendation);
            for (const auto& [k, v] : body.items()) row[k] = v;
        } else {
            row["ok"] = false;
            row["error"] = error_json(*entries[i].error);
        }
        j["results"].push_back(row);
    }
    return j;
}

/// Flat TSV form of a recommendation: one `key<TAB>value` line each.
inline void write_recommendation_tsv(std::ostream& out, const FittedEngine& eng, const std::string& engine_id,
                                     std::uint64_t seed, const Recommendation& rec) {
    out << "schema\t" << kRecommendationSchema << '\n';
    out << "engine_id\t" << engine_id << '\n';
    out << "seed\t" << seed << '\n';
    out << "arm\t" << rec.k_star + 1 << '\n';
    out << "arm_name\t" << eng.arm_names[rec.k_star] << '\n';
    std::vector<std::string> v;
    for (int x : rec.v_star) v.push_back(std::to_string(x));
    out << "v_star\t" << join(v, ',') << '\n';
    out << "psi\t" << format_double(rec.psi) << '\n';
    for (std::size_t r = 0; r < rec.mu.size(); ++r) {
        std::vector<std::string> m;
        for (double x : rec.mu[r]) m.push_back(format_double(x));
        out << "mu." << eng.specs[r].name << '\t' << join(m, ',') << '\n';
    }
    out << "low_confidence\t" << rec.low_confidence.size() << '\n';
    out << "clamped_weights\t" << rec.clamped_weights.size() << '\n';
    out << "tie_break\t" << (rec.tie_break_fired ? 1 : 0) << '\n';
}

namespace detail {

inline std::string csv(const std::vector<double>& v) {
    std::vector<std::string> parts;
    for (double x : v) parts.push_back(format_double(x));
    return join(parts, ',');
}

}  // namespace detail

/// Deterministic for a given config: no timing fields.
inline void write_report_tsv(std::ostream& out, const sim::AccuracyReport& rep) {
    const auto& c = rep.config;
    out << "schema\t" << kReportSchema << '\n';
    out << "model_set\t" << c.model_set << '\n';
    out << "J\t" << c.J << '\n';
    out << "K\t" << sim::kArms << '\n';
    out << "n\t" << c.n << '\n';
    out << "error\t" << sim::to_string(c.error) << '\n';
    out << "sigma\t" << format_double(c.sigma) << '\n';
    out << "error_corr\t" << format_double(c.error_corr) << '\n';
    out << "censoring\t" << c.censoring.label << '\n';
    out << "weights\t" << detail::csv(c.weights) << '\n';
    out << "rho\t" << format_double(c.rho) << '\n';
    out << "replicates\t" << c.replicates << '\n';
    out << "seed\t" << c.seed << '\n';
    out << "hits\t" << rep.hits << '\n';
    out << "misses\t" << rep.misses << '\n';
    out << "excluded\t" << rep.excluded << '\n';
    out << "accuracy\t" << format_double(rep.accuracy) << '\n';
    out << "ci_low\t" << format_double(rep.ci_low) << '\n';
    out << "ci_high\t" << format_double(rep.ci_high) << '\n';
    out << "censored_fraction\t" << detail::csv(rep.censored_fraction) << '\n';
    out << "low_confidence\t" << rep.low_confidence << '\n';
    out << "clamped_weights\t" << rep.clamped_weights << '\n';
    out << "tie_breaks\t" << rep.tie_breaks << '\n';
    for (const auto& [code, count] : rep.failures) out << "failure." << code << '\t' << count << '\n';
    out << "status\t" << (rep.failed ? "failed" : "ok") << '\n';
}

inline std::string report_tsv(const sim::AccuracyReport& rep) {
    std::ostringstream ss;
    write_report_tsv(ss, rep);
    return ss.str();
}

inline void write_report_summary(std::ostream& out, const sim::AccuracyReport& rep) {
    const auto& c = rep.config;
    out << "model set " << c.model_set << ", n=" << c.n << ", censoring " << c.censoring.label << ", "
        << c.replicates << " replicates\n";
    out << "accuracy " << format_double(rep.accuracy) << " (" << rep.hits << '/' << (rep.hits + rep.misses)
        << "), 95% CI [" << format_double(rep.ci_low) << ", " << format_double(rep.ci_high) << "]\n";
    if (rep.excluded) out << "excluded " << rep.excluded << " replicates\n";
    out << "wall clock " << format_double(std::round(rep.wall_seconds * 10.0) / 10.0) << " s\n";
}

}  // namespace ptsel::io
