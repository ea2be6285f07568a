#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ptsel/archive.hpp"
#include "ptsel/dataset_io.hpp"
#include "ptsel/documents.hpp"
#include "ptsel/pipeline.hpp"
#include "ptsel/rank_agg.hpp"
#include "ptsel/service.hpp"
#include "ptsel/simgen.hpp"

namespace {

using namespace ptsel;
using io::json;

struct CliError {
    std::string code;
    std::string flag;
    std::string message;
    int exit_code;
};

[[noreturn]] void usage(const std::string& flag, const std::string& message) { throw CliError{"Usage", flag, message, 2}; }

std::string quote(std::string s) {
    for (auto& c : s) {
        if (c == '"') c = '\'';
        if (c == '\n' || c == '\r') c = ' ';
    }
    return '"' + s + '"';
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError{"NotFound", "--out", "cannot write '" + path + "'", 1};
    out << text;
}

std::string read_file(const std::string& path, const std::string& flag) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError{"NotFound", flag, "cannot open '" + path + "'", 1};
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_weights_flag(const std::vector<double>& w, std::size_t J) {
    if (w.size() != J) usage("--weights", "expected " + std::to_string(J) + " weights, got " + std::to_string(w.size()));
    double sum = 0.0;
    for (double x : w) {
        if (!std::isfinite(x) || x < 0.0) usage("--weights", "weights must be nonnegative");
        sum += x;
    }
    if (!(sum > 0.0)) usage("--weights", "weights must not all be zero");
}

std::vector<double> parse_row(const std::string& line, std::size_t line_no, const std::string& flag) {
    std::vector<double> v;
    for (const auto& cell : io::detail::split(line, ',')) {
        const auto x = io::detail::parse_double(io::detail::trim(cell));
        if (!x) throw CliError{"BadValue", flag, "line " + std::to_string(line_no) + ": '" + io::detail::trim(cell) + "' is not a finite number", 1};
        v.push_back(*x);
    }
    return v;
}

// ---- fit

struct FitArgs {
    std::string dataset, config, out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

int run_fit(const FitArgs& a) {
    const auto data = io::load_dataset(a.dataset);
    io::FitConfig cfg;
    if (!a.config.empty()) cfg = io::load_config(a.config);
    if (a.seed) cfg.engine.seed = *a.seed;
    const auto specs = io::resolve_specs(data.responses, cfg.overrides);
    const auto eng = fit_engine(data, specs, cfg.engine, a.threads);
    const auto text = io::serialize_engine(eng);
    write_output(a.out, text);
    std::cerr << "engine " << io::engine_id(eng) << '\n';
    return 0;
}

// ---- recommend

struct RecommendArgs {
    std::string engine, covariates_file, format = "json", out;
    std::vector<double> covariates, weights;
    std::optional<double> rho;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

int run_recommend(const RecommendArgs& a) {
    const auto eng = io::load_engine(a.engine);
    const auto id = io::engine_id(eng);
    check_weights_flag(a.weights, eng.J());
    const double rho = a.rho.value_or(eng.config.rho);
    if (!std::isfinite(rho) || rho <= 0.0) usage("--rho", "rho must be positive");
    const std::uint64_t seed = a.seed.value_or(eng.config.seed);

    if (a.covariates_file.empty()) {
        if (a.covariates.size() != eng.r())
            usage("--covariates", "expected " + std::to_string(eng.r()) + " covariates, got " + std::to_string(a.covariates.size()));
        const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(a.covariates.data(), static_cast<Eigen::Index>(a.covariates.size()));
        Rng rng = recommend_stream(seed, 0);
        const auto rec = recommend(eng, x0, a.weights, rho, rng);
        if (a.format == "tsv") {
            std::ostringstream ss;
            io::write_recommendation_tsv(ss, eng, id, seed, rec);
            write_output(a.out, ss.str());
        } else {
            write_output(a.out, io::recommendation_json(eng, id, seed, x0, rec).dump() + "\n");
        }
        return 0;
    }

    if (a.format != "json") usage("--format", "batch recommendations are JSON only");
    std::istringstream in(read_file(a.covariates_file, "--covariates-file"));
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = io::detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (rows.empty() && line_no == 1 && io::detail::split(t, ',') == eng.covariate_names) continue;
        auto row = parse_row(t, line_no, "--covariates-file");
        if (row.size() != eng.r())
            throw CliError{"LengthMismatch", "--covariates-file",
                           "line " + std::to_string(line_no) + ": expected " + std::to_string(eng.r()) + " covariates", 1};
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd X0(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(eng.r()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < eng.r(); ++c) X0(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    const auto entries = recommend_batch(eng, X0, a.weights, rho, seed, a.threads);
    write_output(a.out, io::batch_json(eng, id, seed, X0, entries).dump() + "\n");
    return 0;
}

// ---- simulate

struct SimulateArgs {
    std::string scenario, out;
    int model_set = 1;
    std::size_t n = 100, replicates = 200;
    std::string censoring = "none", error = "normal";
    std::optional<double> sigma, error_corr, rho;
    std::vector<double> weights;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    bool quiet = false;
};

void apply_scenario_file(SimulateArgs& a, const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path, "--scenario"));
    } catch (const json::exception& ex) {
        throw CliError{"SchemaMismatch", "--scenario", std::string("not valid JSON: ") + ex.what(), 1};
    }
    if (!j.is_object()) throw CliError{"SchemaMismatch", "--scenario", "expected a JSON object", 1};
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "schema") {
                if (v != "ptsel-scenario/1") throw CliError{"SchemaMismatch", "--scenario", "expected schema 'ptsel-scenario/1'", 1};
            } else if (key == "model_set") a.model_set = v.get<int>();
            else if (key == "n") a.n = v.get<std::size_t>();
            else if (key == "replicates") a.replicates = v.get<std::size_t>();
            else if (key == "censoring") a.censoring = v.get<std::string>();
            else if (key == "error") a.error = v.get<std::string>();
            else if (key == "sigma") a.sigma = v.get<double>();
            else if (key == "error_corr") a.error_corr = v.get<double>();
            else if (key == "rho") a.rho = v.get<double>();
            else if (key == "weights") a.weights = v.get<std::vector<double>>();
            else if (key == "seed") a.seed = v.get<std::uint64_t>();
            else throw CliError{"SchemaMismatch", "--scenario", "unknown field '" + key + "'", 1};
        }
    } catch (const json::exception& ex) {
        throw CliError{"SchemaMismatch", "--scenario", ex.what(), 1};
    }
}

int run_simulate(SimulateArgs a) {
    if (!a.scenario.empty()) apply_scenario_file(a, a.scenario);
    if (a.model_set != 1 && a.model_set != 2) usage("--model-set", "model set must be 1 or 2");
    sim::ScenarioConfig cfg;
    try {
        cfg = sim::preset(a.model_set, a.n, a.censoring, a.replicates, a.seed);
    } catch (const Error& e) {
        usage("--censoring", e.what());
    }
    if (a.error == "normal") cfg.error = sim::ErrorDist::normal;
    else if (a.error == "double_exponential") cfg.error = sim::ErrorDist::double_exponential;
    else usage("--error", "expected normal or double_exponential");
    if (a.sigma) cfg.sigma = *a.sigma;
    if (a.error_corr) cfg.error_corr = *a.error_corr;
    if (a.rho) cfg.rho = *a.rho;
    if (!a.weights.empty()) {
        cfg.J = a.weights.size();
        cfg.weights = a.weights;
        check_weights_flag(a.weights, cfg.J);
    }
    try {
        sim::validate(cfg);
    } catch (const Error& e) {
        usage("--scenario", e.what());
    }
    const auto rep = sim::run_scenario(cfg, a.threads);
    write_output(a.out, io::report_tsv(rep));
    if (!a.quiet) io::write_report_summary(std::cerr, rep);
    if (rep.failed)
        throw CliError{"ReportFailed", "-", std::to_string(rep.excluded) + " of " + std::to_string(cfg.replicates) +
                                                " replicates failed", 1};
    return 0;
}

// ---- aggregate

struct AggregateArgs {
    std::string input, format = "tsv", out;
    double rho = 1.0;
    std::uint64_t seed = 0;
    std::size_t max_exact = kMaxExactItems;
};

AggregationProblem read_lists(const std::string& path, double rho) {
    std::istringstream in(read_file(path, "--input"));
    AggregationProblem p;
    p.rho = rho;
    std::string line;
    std::size_t line_no = 0, K = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = io::detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto cells = io::detail::split(t, ',');
        if (p.lists.empty() && !io::detail::parse_double(io::detail::trim(cells[0]))) continue;  // header
        const auto v = parse_row(t, line_no, "--input");
        if (K == 0) {
            if (v.size() < 2) throw CliError{"SchemaMismatch", "--input", "line " + std::to_string(line_no) + ": need a weight and ranks", 1};
            K = v.size() - 1;
        }
        const bool with_values = v.size() == 2 * K + 1;
        if (v.size() != K + 1 && !with_values)
            throw CliError{"SchemaMismatch", "--input", "line " + std::to_string(line_no) + ": expected " + std::to_string(K + 1) +
                                                            " or " + std::to_string(2 * K + 1) + " fields", 1};
        RankedList l;
        for (std::size_t k = 0; k < K; ++k) {
            const double r = v[1 + k];
            if (r != std::floor(r)) throw CliError{"BadValue", "--input", "line " + std::to_string(line_no) + ": ranks must be integers", 1};
            l.ranks.push_back(static_cast<int>(r));
            l.values.push_back(with_values ? v[1 + K + k] : -r);
        }
        p.weights.push_back(v[0]);
        p.lists.push_back(std::move(l));
    }
    return p;
}

int run_aggregate(const AggregateArgs& a) {
    if (!std::isfinite(a.rho) || a.rho <= 0.0) usage("--rho", "rho must be positive");
    if (a.max_exact < 1 || a.max_exact > kMaxExactItems) usage("--max-exact", "must lie in 1..8");
    auto p = read_lists(a.input, a.rho);
    if (p.lists.empty()) throw CliError{"SchemaMismatch", "--input", "no rank lists", 1};
    validate(p);
    Rng rng = substream(a.seed, {0});
    const auto res = aggregate(p, rng, a.max_exact);
    std::vector<std::string> v;
    for (int x : res.v_star) v.push_back(std::to_string(x));
    if (a.format == "json") {
        json j{{"schema", "ptsel-aggregate/1"},
               {"v_star", res.v_star},
               {"psi", res.psi},
               {"top", top_item(res.v_star) + 1},
               {"tie_break", res.tie_break_fired}};
        write_output(a.out, j.dump() + "\n");
    } else {
        std::ostringstream ss;
        ss << "v_star\t" << io::join(v, ',') << '\n'
           << "psi\t" << io::format_double(res.psi) << '\n'
           << "top\t" << top_item(res.v_star) + 1 << '\n'
           << "tie_break\t" << (res.tie_break_fired ? 1 : 0) << '\n';
        write_output(a.out, ss.str());
    }
    return 0;
}

// ---- serve

struct ServeArgs {
    std::vector<std::string> engines;
    std::string host = "127.0.0.1";
    int port = 8080;
    unsigned threads = 1;
};

int run_serve(const ServeArgs& a) {
    service::EngineStore store;
    for (const auto& path : a.engines) {
        const auto e = store.insert(io::load_engine(path));
        std::cout << e->id << '\t' << path << '\n';
    }
    std::cout.flush();
    service::Service svc(store, {a.threads, 10000});
    if (a.port == 0) {
        const int port = svc.bind_to_any_port(a.host);
        if (port < 0) throw CliError{"Bind", "--port", "cannot bind " + a.host, 1};
        std::cerr << "listening on " << a.host << ':' << port << std::endl;
        svc.listen_after_bind();
    } else {
        std::cerr << "listening on " << a.host << ':' << a.port << std::endl;
        if (!svc.listen(a.host, a.port)) throw CliError{"Bind", "--port", "cannot bind " + a.host + ":" + std::to_string(a.port), 1};
    }
    return 0;
}

std::string flag_in(const std::string& message) {
    std::istringstream ss(message);
    std::string tok;
    while (ss >> tok) {
        if (tok.size() > 2 && tok.rfind("--", 0) == 0) {
            while (!tok.empty() && (tok.back() == ':' || tok.back() == ',' || tok.back() == '.')) tok.pop_back();
            return tok;
        }
    }
    return "-";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Personalized treatment selection from multiple responses"};
    app.require_subcommand(1);

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "Fit an engine from a dataset and write the engine archive");
    fit->add_option("--dataset", fa.dataset, "Dataset file")->required();
    fit->add_option("--config", fa.config, "Engine config (JSON)");
    fit->add_option("--seed", fa.seed, "Overrides the config seed");
    fit->add_option("--threads", fa.threads, "Worker threads (0 = all cores)");
    fit->add_option("--out,-o", fa.out, "Engine archive path (default stdout)");

    RecommendArgs ra;
    auto* rec = app.add_subcommand("recommend", "Recommend an arm for one patient or a file of patients");
    rec->add_option("--engine", ra.engine, "Engine archive")->required();
    auto* cov = rec->add_option("--covariates", ra.covariates, "Comma-separated covariates")->delimiter(',');
    auto* covf = rec->add_option("--covariates-file", ra.covariates_file, "CSV of covariate rows (batch)");
    cov->excludes(covf);
    rec->add_option("--weights", ra.weights, "Comma-separated response weights")->delimiter(',')->required();
    rec->add_option("--rho", ra.rho, "Footrule exponent (default from engine config)");
    rec->add_option("--seed", ra.seed, "Tie-break seed (default from engine config)");
    rec->add_option("--format", ra.format, "json or tsv")->check(CLI::IsMember({"json", "tsv"}));
    rec->add_option("--threads", ra.threads, "Worker threads for batch mode");
    rec->add_option("--out,-o", ra.out, "Output path (default stdout)");

    SimulateArgs sa;
    auto* simc = app.add_subcommand("simulate", "Run a simulation scenario and write the accuracy report");
    simc->add_option("--scenario", sa.scenario, "Scenario file (JSON); its fields take precedence over flags");
    simc->add_option("--model-set", sa.model_set, "1 or 2");
    simc->add_option("--n", sa.n, "Subjects per arm");
    simc->add_option("--censoring", sa.censoring, "none, random25, random50, covdep25, covdep50");
    simc->add_option("--error", sa.error, "normal or double_exponential");
    simc->add_option("--sigma", sa.sigma, "Error scale");
    simc->add_option("--error-corr", sa.error_corr, "Error correlation between responses");
    simc->add_option("--weights", sa.weights, "Comma-separated response weights")->delimiter(',');
    simc->add_option("--rho", sa.rho, "Footrule exponent");
    simc->add_option("--replicates", sa.replicates, "Replicates");
    simc->add_option("--seed", sa.seed, "Scenario seed");
    simc->add_option("--threads", sa.threads, "Worker threads (0 = all cores)");
    simc->add_option("--out,-o", sa.out, "Report path (default stdout)");
    simc->add_flag("--quiet,-q", sa.quiet, "No summary on stderr");

    AggregateArgs aa;
    auto* agg = app.add_subcommand("aggregate", "Aggregate weighted rank lists");
    agg->add_option("--input", aa.input, "CSV: weight,rank_1..rank_K[,value_1..value_K]")->required();
    agg->add_option("--rho", aa.rho, "Footrule exponent");
    agg->add_option("--seed", aa.seed, "Tie-break seed");
    agg->add_option("--max-exact", aa.max_exact, "Largest K solved by enumeration");
    agg->add_option("--format", aa.format, "tsv or json")->check(CLI::IsMember({"json", "tsv"}));
    agg->add_option("--out,-o", aa.out, "Output path (default stdout)");

    ServeArgs va;
    auto* srv = app.add_subcommand("serve", "Serve engines over HTTP");
    srv->add_option("--engine", va.engines, "Engine archive to preload (repeatable)");
    srv->add_option("--host", va.host, "Bind address");
    srv->add_option("--port", va.port, "Port (0 picks a free one)");
    srv->add_option("--threads", va.threads, "Worker threads for fitting uploaded datasets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: code=Usage flag=" << flag_in(e.what()) << " message=" << quote(e.what()) << '\n';
        return 2;
    }

    try {
        if (*fit) return run_fit(fa);
        if (*rec) {
            if (ra.covariates.empty() && ra.covariates_file.empty())
                usage("--covariates", "give --covariates or --covariates-file");
            return run_recommend(ra);
        }
        if (*simc) return run_simulate(sa);
        if (*agg) return run_aggregate(aa);
        if (*srv) return run_serve(va);
    } catch (const CliError& e) {
        std::cerr << "error: code=" << e.code << " flag=" << e.flag << " message=" << quote(e.message) << '\n';
        return e.exit_code;
    } catch (const Error& e) {
        std::cerr << "error: code=" << to_string(e.code()) << " flag=- message=" << quote(e.what()) << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: code=Internal flag=- message=" << quote(e.what()) << '\n';
        return 1;
    }
    return 2;
}
