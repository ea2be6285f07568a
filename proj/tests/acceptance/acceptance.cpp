// Acceptance checks, one per criterion: `acceptance --criterion N`.
// Each prints a single "criterion N: PASS|FAIL ..." line and exits nonzero
// on failure.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "ptsel/archive.hpp"
#include "ptsel/pipeline.hpp"
#include "ptsel/service.hpp"
#include "ptsel/simgen.hpp"
#include "support/oracles.hpp"

using namespace ptsel;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int digits = 4) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

std::string sci(double v) {
    std::ostringstream ss;
    ss.setf(std::ios::scientific);
    ss.precision(2);
    ss << v;
    return ss.str();
}

// 1. Censored-spec and complete-spec pipelines on uncensored data.

double max_abs_diff(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

Verdict zero_censoring_equivalence(unsigned threads) {
    double worst = 0.0;
    std::size_t kstar_mismatch = 0, compared = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto cfg = sim::preset(1 + static_cast<int>(seed % 2), 100, "none", 1, seed);
        Rng rng = substream(1000 + seed, {0});
        const auto data = sim::generate_replicate(cfg, rng);
        auto complete = data.responses;
        for (auto& s : complete) s.kind = ResponseKind::complete;
        auto censored = data.responses;
        censored[0].kind = ResponseKind::right_censored;

        EngineConfig ec;
        ec.seed = seed + 1;
        const auto a = fit_engine(data, complete, ec, threads);
        const auto b = fit_engine(data, censored, ec, threads);
        for (std::size_t j = 0; j < a.J(); ++j) {
            for (std::size_t k = 0; k < a.K(); ++k) {
                worst = std::max(worst, max_abs_diff(a.fits[j][k].beta, b.fits[j][k].beta));
                worst = std::max(worst, std::fabs(a.fits[j][k].h_tilde.value() - b.fits[j][k].h_tilde.value()));
            }
        }
        Rng xr = substream(2000 + seed, {0});
        for (int t = 0; t < 10; ++t) {
            const auto x0 = sim::draw_covariates(xr);
            Rng ra = recommend_stream(seed, static_cast<std::size_t>(t));
            Rng rb = recommend_stream(seed, static_cast<std::size_t>(t));
            const auto ra_rec = recommend(a, x0, cfg.weights, cfg.rho, ra);
            const auto rb_rec = recommend(b, x0, cfg.weights, cfg.rho, rb);
            for (std::size_t j = 0; j < a.J(); ++j)
                for (std::size_t k = 0; k < a.K(); ++k) worst = std::max(worst, std::fabs(ra_rec.mu[j][k] - rb_rec.mu[j][k]));
            kstar_mismatch += ra_rec.k_star != rb_rec.k_star;
            ++compared;
        }
    }
    return {worst <= 1e-10 && kstar_mismatch == 0,
            "max |diff| beta/h/mu = " + sci(worst) + ", k* mismatches " + std::to_string(kstar_mismatch) + "/" +
                std::to_string(compared) + " over 20 datasets"};
}

// 2. Exact aggregation against the enumeration oracle; CE against exact.

AggregationProblem random_problem(std::mt19937_64& gen, std::size_t K, std::size_t J, bool discrete) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> small(0, 3);
    AggregationProblem p;
    for (std::size_t j = 0; j < J; ++j) {
        std::vector<double> v(K);
        for (auto& x : v) x = discrete ? small(gen) : u(gen);
        Rng tie(gen());
        p.lists.push_back(ranks_from_values(v, tie));
        p.weights.push_back(discrete ? small(gen) + 1.0 : u(gen) + 0.01);
    }
    p.rho = discrete ? 1.0 : 0.5 + 1.5 * u(gen);
    return p;
}

Verdict rank_aggregation_oracle() {
    std::mt19937_64 gen(20240601);
    std::uniform_int_distribution<std::size_t> Kd(2, 6), Jd(1, 5);
    int exact_agree = 0;
    for (int i = 0; i < 500; ++i) {
        const auto K = Kd(gen), J = Jd(gen);
        const auto p = random_problem(gen, K, J, i % 3 == 0);
        const std::uint64_t seed = gen();
        Rng a(seed), b(seed);
        exact_agree += aggregate_exact(p, a).v_star == oracle::brute_force_aggregate(p, b);
    }
    std::uniform_int_distribution<std::size_t> Kc(2, 5);
    int ce_agree = 0;
    for (int i = 0; i < 100; ++i) {
        const auto K = Kc(gen), J = Jd(gen);
        const auto p = random_problem(gen, K, J, false);
        const std::uint64_t seed = gen();
        Rng a(seed), b(seed);
        ce_agree += aggregate_exact(p, a).v_star == aggregate_ce(p, b).v_star;
    }
    return {exact_agree == 500 && ce_agree >= 95,
            "exact vs oracle " + std::to_string(exact_agree) + "/500, CE vs exact " + std::to_string(ce_agree) + "/100"};
}

// 3. Index recovery.

double link_for(int which, double v) {
    switch (which % 3) {
        case 0: return 2.0 * v + 1.0;
        case 1: return std::exp(v);
        default: return v + v * v * v;
    }
}

Verdict sim_recovery() {
    int close = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng = substream(3000 + seed, {0});
        const Eigen::VectorXd beta = detail::random_unit_vector(5, rng);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Eigen::MatrixXd X(400, 5);
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            for (Eigen::Index c = 0; c < X.cols(); ++c) X(i, c) = u(rng);
        Eigen::VectorXd Y(400);
        for (Eigen::Index i = 0; i < Y.size(); ++i) Y(i) = link_for(static_cast<int>(seed), X.row(i).dot(beta));
        Rng fit_rng = substream(seed, {stream::sim_fit});
        const auto fit = fit_sim_complete(X, Y, SimOptions{}, fit_rng);
        close += angular_distance_deg(fit.beta, beta) < 2.0;
    }

    std::vector<double> angles;
    const Eigen::VectorXd truth = sim::index_vector(1, 0, 0);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto cfg = sim::preset(1, 400, "random25", 1, seed);
        Rng rng = substream(4000 + seed, {0});
        const auto data = sim::generate_replicate(cfg, rng);
        const auto& arm = data.arms[0];
        std::vector<SurvivalRecord> records(arm.size());
        for (std::size_t i = 0; i < arm.size(); ++i)
            records[i] = SurvivalRecord{arm.y[0][i], arm.event[0][i] != 0,
                                        arm.X.row(static_cast<Eigen::Index>(i)).transpose(), {}};
        const auto model = fit_aalen_censoring(records);
        const auto weights = ipcw_weights(model, records);
        const Eigen::VectorXd T = Eigen::Map<const Eigen::VectorXd>(arm.y[0].data(), static_cast<Eigen::Index>(arm.size()));
        Rng fit_rng = substream(seed, {stream::sim_fit});
        const auto fit = fit_sim_ipcw(arm.X, T, arm.event[0], weights, SimOptions{}, fit_rng);
        angles.push_back(angular_distance_deg(fit.beta, truth));
    }
    std::sort(angles.begin(), angles.end());
    const double median = 0.5 * (angles[24] + angles[25]);
    return {close >= 48 && median < 10.0, "noiseless within 2 deg: " + std::to_string(close) +
                                              "/50; censored median angle " + fmt(median, 2) + " deg"};
}

// 4. Intercept-only Aalen against Kaplan-Meier of the censoring times.

Verdict censoring_weights() {
    std::size_t checked = 0, violations = 0;
    double worst_excess = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng = substream(5000 + seed, {0});
        std::uniform_real_distribution<double> rate(0.3, 1.5);
        std::exponential_distribution<double> ev(1.0), ce(rate(rng));
        std::vector<SurvivalRecord> rs;
        for (int i = 0; i < 100; ++i) {
            const double y = ev(rng), c = ce(rng);
            rs.push_back(SurvivalRecord{std::min(y, c), y <= c, Eigen::VectorXd(0), {}});
        }
        const auto model = fit_aalen_censoring(rs);
        const auto km = kaplan_meier(rs, KmTarget::censoring);
        for (const auto& r : rs) {
            const double lam = model.cumulative_hazard(r, r.time, false);
            const double gap = std::fabs(std::exp(-lam) - km(r.time));
            const double tol = std::max(0.02, lam * lam);
            ++checked;
            if (gap > tol) {
                ++violations;
                worst_excess = std::max(worst_excess, gap - tol);
            }
        }
    }
    std::vector<SurvivalRecord> toy{{1.0, true, Eigen::VectorXd(0), {}},
                                    {2.0, false, Eigen::VectorXd(0), {}},
                                    {3.0, true, Eigen::VectorXd(0), {}},
                                    {4.0, true, Eigen::VectorXd(0), {}}};
    const auto w = ipcw_weights(fit_aalen_censoring(toy), toy);
    const bool toy_ok = w.weights[0] == 1.0 && w.weights[1] == 1.0 && w.weights[2] == std::exp(-1.0 / 3.0) &&
                        w.weights[3] == std::exp(-1.0 / 3.0);
    return {violations == 0 && toy_ok, std::to_string(violations) + "/" + std::to_string(checked) +
                                           " times outside tolerance; toy weights " + (toy_ok ? "exact" : "differ")};
}

// 5 and 6. Simulation accuracy.

sim::AccuracyReport scenario(int model_set, std::size_t n, const std::string& censoring, unsigned threads) {
    const auto cfg = sim::preset(model_set, n, censoring, 200, 1);
    auto rep = sim::run_scenario(cfg, threads);
    std::cerr << "  model set " << model_set << " n=" << n << ' ' << censoring << ": accuracy " << fmt(rep.accuracy, 3)
              << " [" << fmt(rep.ci_low, 3) << ", " << fmt(rep.ci_high, 3) << "], excluded " << rep.excluded << ", "
              << fmt(rep.wall_seconds, 0) << " s\n";
    return rep;
}

Verdict replication(unsigned threads) {
    const auto none = scenario(1, 100, "none", threads);
    const auto cens = scenario(1, 100, "random50", threads);
    const bool a = !none.failed && std::fabs(none.accuracy - 0.853) <= 0.06;
    const bool b = !cens.failed && std::fabs(cens.accuracy - 0.760) <= 0.07;
    return {a && b, "no censoring " + fmt(none.accuracy, 3) + " (target 0.853 +- 0.06), 50% random " +
                        fmt(cens.accuracy, 3) + " (target 0.760 +- 0.07)"};
}

Verdict directional(unsigned threads) {
    bool ok = true;
    std::string detail;
    for (int ms : {1, 2}) {
        for (std::size_t n : {100u, 400u}) {
            const auto none = scenario(ms, n, "none", threads);
            const auto cens = scenario(ms, n, "random50", threads);
            const bool cell = !none.failed && !cens.failed && none.accuracy >= cens.accuracy - 0.03;
            ok = ok && cell;
            if (!detail.empty()) detail += "; ";
            detail += "MS" + std::to_string(ms) + " n=" + std::to_string(n) + " " + fmt(none.accuracy, 3) + " vs " +
                      fmt(cens.accuracy, 3);
        }
    }
    return {ok, detail};
}

// 7. Censored mean estimator against the events-only estimator. The truth
// at a test point with score (s, d) is the generator's mean of g over
// covariates scored into stratum d, kernel-weighted around s with the
// surface bandwidth: what the surface converges to without censoring.

Verdict ipcw_bias() {
    constexpr int kPopulation = 20000;
    int wins = 0, pointwise_wins = 0;
    double sum_ipcw = 0.0, sum_naive = 0.0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto cfg = sim::preset(1, 400, "random50", 1, seed);
        Rng rng = substream(7000 + seed, {0});
        auto data = sim::generate_replicate(cfg, rng);
        data.responses.resize(1);
        for (auto& a : data.arms) {
            a.y.resize(1);
            a.event.resize(1);
        }
        EngineConfig ec;
        ec.seed = seed + 1;
        const auto eng = fit_engine(data, ec);
        const auto K = eng.K();

        std::vector<MeanSurface> naive;
        for (const auto& s : eng.surfaces[0]) {
            MeanSurface m = s;
            m.censored_mode = false;
            m.tuples.clear();
            for (const auto& t : s.tuples)
                if (t.factor > 0.0) m.tuples.push_back({t.s, t.d, t.y, 1.0});
            naive.push_back(std::move(m));
        }

        Rng pr = substream(9000 + seed, {0});
        std::vector<PatientScore> pop_score(kPopulation);
        std::vector<std::vector<double>> pop_g(kPopulation, std::vector<double>(K));
        for (int m = 0; m < kPopulation; ++m) {
            const auto x = sim::draw_covariates(pr);
            pop_score[m] = score_patient(eng.fits, x, pr).scores[0];
            for (std::size_t k = 0; k < K; ++k) pop_g[m][k] = sim::mean_response(1, 0, k, x);
        }

        double err_ipcw = 0.0, err_naive = 0.0, pt_ipcw = 0.0, pt_naive = 0.0;
        Rng xr = substream(7500 + seed, {0});
        for (int t = 0; t < 25; ++t) {
            const auto x0 = sim::draw_covariates(xr);
            Rng sr = recommend_stream(seed, static_cast<std::size_t>(t));
            const auto u = score_patient(eng.fits, x0, sr).scores[0];
            for (std::size_t k = 0; k < K; ++k) {
                const double h = eng.surfaces[0][k].h.value();
                double num = 0.0, den = 0.0;
                for (int m = 0; m < kPopulation; ++m) {
                    if (pop_score[m].d != u.d) continue;
                    const double z = (pop_score[m].s - u.s) / h;
                    const double w = std::exp(-0.5 * z * z);
                    num += w * pop_g[m][k];
                    den += w;
                }
                const double truth = num / den;
                const double a = eval_mu(eng.surfaces[0][k], u).value, b = eval_mu(naive[k], u).value;
                err_ipcw += std::fabs(a - truth);
                err_naive += std::fabs(b - truth);
                const double g = sim::mean_response(1, 0, k, x0);
                pt_ipcw += std::fabs(a - g);
                pt_naive += std::fabs(b - g);
            }
        }
        wins += err_ipcw < err_naive;
        pointwise_wins += pt_ipcw < pt_naive;
        sum_ipcw += err_ipcw / (25.0 * static_cast<double>(K));
        sum_naive += err_naive / (25.0 * static_cast<double>(K));
    }
    return {wins >= 24, "censored estimator better in " + std::to_string(wins) + "/30 seeds (mean MAE " +
                            fmt(sum_ipcw / 30.0) + " vs events-only " + fmt(sum_naive / 30.0) +
                            "); against g(beta'x0) itself " + std::to_string(pointwise_wins) + "/30"};
}

// 8. Byte-identical outputs from repeated CLI and service calls.

struct Run {
    int status = 0;
    std::string out;
};

Run run(const std::string& command) {
    Run r;
    FILE* p = popen((command + " 2>&1").c_str(), "r");
    if (!p) return {-1, ""};
    std::array<char, 4096> buf{};
    std::size_t got;
    while ((got = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), got);
    r.status = pclose(p);
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Verdict determinism(const std::string& cli) {
    const fs::path dir = fs::temp_directory_path() / ("ptsel-acceptance-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string dataset = std::string(PTSEL_SOURCE_DIR) + "/data/actg_like.csv";
    std::vector<std::string> mismatches;
    int checks = 0;

    // Runs `command` twice, writing to a and b, and compares the output files
    // together with stdout/stderr and exit status.
    auto twice = [&](const std::string& name, const std::function<std::string(const fs::path&)>& command) {
        const auto a = dir / (name + ".a"), b = dir / (name + ".b");
        const auto ra = run(command(a)), rb = run(command(b));
        ++checks;
        const bool same = ra.status == rb.status && ra.out == rb.out && slurp(a) == slurp(b);
        if (!same) mismatches.push_back(name);
        return ra;
    };

    const auto engine = dir / "engine.json";
    const auto fit = twice("fit", [&](const fs::path& out) {
        return cli + " fit --dataset " + dataset + " --seed 11 --out " + out.string();
    });
    fs::copy_file(dir / "fit.a", engine, fs::copy_options::overwrite_existing);
    if (fit.status != 0) return {false, "fit failed: " + fit.out};

    const std::string x = "35,70,1,5.8,6.7";
    for (const std::string format : {"json", "tsv"})
        twice("recommend-" + format, [&](const fs::path& out) {
            return cli + " recommend --engine " + engine.string() + " --covariates " + x +
                   " --weights 0.5,0.3,0.2 --seed 3 --format " + format + " --out " + out.string();
        });
    {
        std::ofstream rows(dir / "rows.csv");
        rows << "age,wtkg,preanti,log_cd40,log_cd80\n35,70,1,5.8,6.7\n50,82,400,5.2,6.9\n22,60,0,6.1,6.2\n";
    }
    twice("recommend-batch", [&](const fs::path& out) {
        return cli + " recommend --engine " + engine.string() + " --covariates-file " + (dir / "rows.csv").string() +
               " --weights 1,1,1 --seed 4 --threads 2 --out " + out.string();
    });
    twice("recommend-error", [&](const fs::path& out) {
        return cli + " recommend --engine " + engine.string() + " --covariates " + x + " --weights 0,0,0 --out " +
               out.string();
    });
    twice("simulate", [&](const fs::path& out) {
        return cli + " simulate --model-set 2 --n 40 --censoring random25 --replicates 4 --seed 5 --threads 2 --quiet --out " +
               out.string();
    });
    {
        std::ofstream lists(dir / "lists.csv");
        lists << "weight,rank_1,rank_2,rank_3,rank_4\n0.5,1,2,3,4\n0.3,2,1,4,3\n0.2,4,3,2,1\n";
    }
    for (const std::string format : {"json", "tsv"})
        twice("aggregate-" + format, [&](const fs::path& out) {
            return cli + " aggregate --input " + (dir / "lists.csv").string() + " --seed 2 --format " + format +
                   " --out " + out.string();
        });

    // Service: recommendations and uploads repeated against one server, and
    // the engine id it assigns matches the CLI archive.
    service::EngineStore store;
    const auto stored = store.insert(io::load_engine(engine.string()));
    service::Service svc(store);
    const int port = svc.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { svc.listen_after_bind(); });
    svc.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    client.set_read_timeout(300, 0);
    auto same_twice = [&](const std::string& name, const std::function<httplib::Result()>& call) {
        auto a = call();
        auto b = call();
        ++checks;
        if (!a || !b || a->status != b->status || a->body != b->body) mismatches.push_back(name);
    };
    const std::string base = "/engines/" + stored->id;
    same_twice("service-recommend", [&] {
        return client.Post(base + "/recommend", R"({"covariates":[35,70,1,5.8,6.7],"weights":[0.5,0.3,0.2],"seed":3})",
                           "application/json");
    });
    same_twice("service-batch", [&] {
        return client.Post(base + "/recommend-batch",
                           R"({"covariates":[[35,70,1,5.8,6.7],[50,82,400,5.2,6.9]],"weights":[1,1,1],"seed":4})",
                           "application/json");
    });
    same_twice("service-error", [&] {
        return client.Post(base + "/recommend", R"({"covariates":[35,70,1],"weights":[1,1,1],"seed":1})",
                           "application/json");
    });
    same_twice("service-info", [&] { return client.Get(base); });
    same_twice("service-upload", [&] {
        httplib::MultipartFormDataItems items{{"dataset", slurp(dataset), "d.csv", "text/csv"},
                                              {"config", R"({"seed":11})", "c.json", "application/json"}};
        return client.Post("/engines", items);
    });
    {
        auto up = client.Post("/engines", httplib::MultipartFormDataItems{
                                              {"dataset", slurp(dataset), "d.csv", "text/csv"},
                                              {"config", R"({"seed":11})", "c.json", "application/json"}});
        ++checks;
        if (!up || io::json::parse(up->body).value("engine_id", "") != stored->id) mismatches.push_back("upload-vs-cli-id");
    }
    svc.stop();
    listener.join();
    fs::remove_all(dir);

    std::string detail = std::to_string(checks - static_cast<int>(mismatches.size())) + "/" + std::to_string(checks) +
                         " repeated invocations byte-identical";
    for (const auto& m : mismatches) detail += " [differs: " + m + "]";
    return {mismatches.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    int criterion = 0;
    unsigned threads = 0;
    std::string cli;
    app.add_option("--criterion", criterion, "Criterion number (1-8)")->required()->check(CLI::Range(1, 8));
    app.add_option("--threads", threads, "Worker threads for simulations (0 = all cores)");
    app.add_option("--cli", cli, "Path to the ptsel executable (criterion 8)");
    CLI11_PARSE(app, argc, argv);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        switch (criterion) {
            case 1: v = zero_censoring_equivalence(threads); break;
            case 2: v = rank_aggregation_oracle(); break;
            case 3: v = sim_recovery(); break;
            case 4: v = censoring_weights(); break;
            case 5: v = replication(threads); break;
            case 6: v = directional(threads); break;
            case 7: v = ipcw_bias(); break;
            case 8:
                if (cli.empty()) {
                    std::cerr << "criterion 8 needs --cli\n";
                    return 2;
                }
                v = determinism(cli);
                break;
        }
    } catch (const std::exception& e) {
        v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << criterion << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << " ("
              << fmt(secs, 1) << " s)\n";
    return v.pass ? 0 : 1;
}
