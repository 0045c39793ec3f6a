// refmort: screening-effect estimation on refined mortality.
//
//   refmort simulate  --scenario nordic-small --seed 7 --out sim/
//   refmort estimate  --input sim/registry.csv --lag sim/lag.csv --method all --out est/
//   refmort bootstrap --input sim/registry.csv --lag sim/lag.csv --method 2 -B 200 --seed 1 --out bs/
//   refmort report    --input sim/registry.csv --lag sim/lag.csv --out rep/
//
// Exit codes: 0 success, 2 input or validation error, 3 nonconvergence,
// 4 configuration error.

#include "refmort/bootstrap.hpp"
#include "refmort/errors.hpp"
#include "refmort/estimators.hpp"
#include "refmort/registry.hpp"
#include "refmort/report.hpp"
#include "refmort/scenario.hpp"
#include "refmort/simulator.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace refmort;

namespace {

struct RunConfig {
    std::string command;
    std::string input;
    std::string lag;
    std::string schedule;
    std::string scenario = "nordic-small";
    std::vector<std::string> overrides;
    std::string method = "2";
    int replicates = 1000;
    std::uint64_t seed = 0;
    int jobs = 1;
    double ci_level = 0.95;
    std::string out = ".";
};

std::string sha256_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot read " + path);
    }
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    }
    return hex.str();
}

class Outputs {
public:
    explicit Outputs(const std::string &dir) : dir_(dir) { fs::create_directories(dir_); }

    template <class Fn> void write(const std::string &name, Fn &&fn) {
        const auto path = dir_ / name;
        std::ofstream out(path);
        if (!out) {
            throw ConfigError("cannot write " + path.string());
        }
        fn(out);
        out.close();
        if (!out) {
            throw ConfigError("failed writing " + path.string());
        }
        written_.push_back(path.string());
    }

    const fs::path &dir() const { return dir_; }
    const std::vector<std::string> &written() const { return written_; }

private:
    fs::path dir_;
    std::vector<std::string> written_;
};

std::map<std::string, std::string> parse_overrides(const std::vector<std::string> &items) {
    std::map<std::string, std::string> out;
    for (const auto &item : items) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got '" + item + "'");
        }
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

std::vector<Method> methods_for(const std::string &text) {
    if (text == "all") {
        return {Method::M0, Method::M1, Method::M2, Method::M3};
    }
    return {parse_method(text)};
}

void require_file(const std::string &path, const std::string &flag) {
    if (path.empty()) {
        throw ConfigError(flag + " is required");
    }
    if (!fs::is_regular_file(path)) {
        throw ConfigError(flag + " file does not exist: " + path);
    }
}

struct Inputs {
    MortalityTable table;
    std::optional<LagHistogram> hist;
};

// Loads the analysis table. With --schedule the input is a raw registry that
// is split here using the lag survival from --lag.
Inputs load_inputs(const RunConfig &cfg, bool need_lag) {
    require_file(cfg.input, "--input");
    if (!cfg.lag.empty()) {
        require_file(cfg.lag, "--lag");
    }
    if (need_lag && cfg.lag.empty()) {
        throw ConfigError("method " + cfg.method + " needs the lag histogram: pass --lag");
    }
    Inputs in;
    if (!cfg.lag.empty()) {
        in.hist = LagHistogram::read_csv_file(cfg.lag);
    }
    if (!cfg.schedule.empty()) {
        require_file(cfg.schedule, "--schedule");
        if (!in.hist) {
            throw ConfigError("splitting a raw registry with --schedule needs --lag");
        }
        const auto schedule = RolloutSchedule::read_csv_file(cfg.schedule);
        in.table = split_risk_time(parse_raw_csv(cfg.input), schedule,
                                   estimate_lag_survival(*in.hist));
    } else {
        in.table = parse_mortality_csv(cfg.input);
    }
    return in;
}

bool needs_lag(const std::vector<Method> &methods) {
    return std::any_of(methods.begin(), methods.end(),
                       [](Method m) { return m == Method::M1 || m == Method::M3; });
}

json config_echo(const RunConfig &cfg) {
    json j;
    j["command"] = cfg.command;
    if (cfg.command == "simulate") {
        j["scenario"] = cfg.scenario;
        j["set"] = cfg.overrides;
    } else {
        j["input"] = cfg.input;
        j["lag"] = cfg.lag;
        j["schedule"] = cfg.schedule;
        j["method"] = cfg.method;
    }
    if (cfg.command == "bootstrap") {
        j["replicates"] = cfg.replicates;
        j["ci_level"] = cfg.ci_level;
        j["jobs"] = cfg.jobs;
    }
    j["seed"] = cfg.seed;
    j["out"] = cfg.out;
    return j;
}

void write_manifest(const RunConfig &cfg, Outputs &outputs, const std::vector<std::string> &argv) {
    json m;
    m["tool"] = "refmort";
    m["version"] = REFMORT_VERSION;
    m["argv"] = argv;
    m["seed"] = cfg.seed;
    m["config"] = config_echo(cfg);
    json inputs = json::array();
    for (const auto *path : {&cfg.input, &cfg.lag, &cfg.schedule}) {
        if (!path->empty()) {
            inputs.push_back({{"path", *path}, {"sha256", sha256_file(*path)}});
        }
    }
    if (cfg.command == "simulate" && fs::is_regular_file(cfg.scenario)) {
        inputs.push_back({{"path", cfg.scenario}, {"sha256", sha256_file(cfg.scenario)}});
    }
    m["inputs"] = inputs;
    json outs = json::array();
    for (const auto &path : outputs.written()) {
        outs.push_back({{"path", fs::path(path).filename().string()}, {"sha256", sha256_file(path)}});
    }
    m["outputs"] = outs;
    outputs.write("manifest.json", [&](std::ostream &o) { o << m.dump(2) << '\n'; });
}

void run_simulate(const RunConfig &cfg, Outputs &out) {
    const auto scenario = load_scenario(cfg.scenario, parse_overrides(cfg.overrides));
    const auto sim = simulate(scenario, cfg.seed);
    out.write("raw.csv", [&](std::ostream &o) { write_raw_csv(sim.raw, o); });
    out.write("registry.csv", [&](std::ostream &o) { write_mortality_csv(sim.table, o); });
    out.write("lag.csv", [&](std::ostream &o) { sim.hist.write_csv(o); });
    out.write("schedule.csv", [&](std::ostream &o) { sim.schedule.write_csv(o); });
    out.write("true_rho.csv", [&](std::ostream &o) { sim.truth.lag_survival.write_csv(o); });
    out.write("truth.json", [&](std::ostream &o) {
        json t;
        t["scenario"] = scenario.name;
        t["seed"] = cfg.seed;
        t["true_screening_ratio"] = sim.truth.true_screening_ratio;
        t["person_years_scale"] = sim.truth.person_years_scale;
        t["expected_screened_deaths"] = sim.truth.expected_screened_deaths;
        t["expected_total_deaths"] = sim.truth.expected_total_deaths;
        t["strata"] = sim.table.size();
        t["lag_deaths"] = sim.hist.total();
        o << t.dump(2) << '\n';
    });
    std::cout << "simulated " << sim.table.size() << " strata, " << sim.table.total_cases()
              << " deaths, " << sim.hist.total() << " lag records -> " << out.dir().string()
              << '\n';
}

void run_estimate(const RunConfig &cfg, Outputs &out, bool bootstrap) {
    const auto methods = methods_for(cfg.method);
    const auto in = load_inputs(cfg, needs_lag(methods));
    const LagHistogram hist = in.hist.value_or(LagHistogram{});
    std::vector<EstimateResult> results;
    std::optional<EstimateResult> m2;
    for (auto m : methods) {
        EstimateResult r;
        if (bootstrap) {
            BootstrapConfig bc;
            bc.replicates = cfg.replicates;
            bc.seed = cfg.seed;
            bc.ci_level = cfg.ci_level;
            bc.jobs = cfg.jobs;
            r = bootstrap_estimate(m, in.table, hist, bc);
        } else if (m == Method::M3 && m2) {
            r = estimate_method3(in.table, hist, *m2);
        } else {
            r = run_estimator(m, in.table, hist);
        }
        if (m == Method::M2) {
            m2 = r;
        }
        const std::string tag(to_string(m));
        auto j = result_to_json(r);
        if (bootstrap) {
            j["bootstrap"]["replicate_file"] = "replicates_" + tag + ".csv";
        }
        out.write("estimate_" + tag + ".json", [&](std::ostream &o) { o << j.dump(2) << '\n'; });
        if (r.bootstrap) {
            out.write("replicates_" + tag + ".csv",
                      [&](std::ostream &o) { write_replicates_csv(*r.bootstrap, o); });
        }
        if (r.model && (m == Method::M2 || methods.size() == 1)) {
            out.write("model_" + tag + ".txt", [&](std::ostream &o) { write_model(*r.model, o); });
        }
        for (const auto &w : r.diagnostics.warnings) {
            std::cerr << "warning (" << tag << "): " << w << '\n';
        }
        results.push_back(std::move(r));
    }
    std::ostringstream table;
    write_comparison_table(results, table);
    out.write("comparison.txt", [&](std::ostream &o) { o << table.str(); });
    std::cout << table.str();
}

void run_report(const RunConfig &cfg, Outputs &out) {
    const auto method = parse_method(cfg.method);
    const auto in = load_inputs(cfg, method == Method::M1 || method == Method::M3);
    const auto r = run_estimator(method, in.table, in.hist.value_or(LagHistogram{}));
    const auto trends = mortality_trends(in.table, method == Method::M2 ? r.model.get() : nullptr);
    if (r.model) {
        out.write("model.txt", [&](std::ostream &o) { write_model(*r.model, o); });
    }
    out.write("trends.csv", [&](std::ostream &o) { write_trends_csv(trends, o); });
    out.write("trends.svg", [&](std::ostream &o) { write_trends_svg(trends, o); });
    out.write("estimate_" + std::string(to_string(method)) + ".json",
              [&](std::ostream &o) { o << result_to_json(r).dump(2) << '\n'; });
    std::cout << "wrote trends for " << trends.size() << " year-series rows -> "
              << out.dir().string() << '\n';
}

} // namespace

int main(int argc, char **argv) {
    RunConfig cfg;
    CLI::App app{"Screening-effect estimation on refined (incidence-based) mortality"};
    app.require_subcommand(1);
    app.set_version_flag("--version", REFMORT_VERSION);

    auto add_data_flags = [&](CLI::App *sub) {
        sub->add_option("--input", cfg.input, "analysis CSV, or raw registry CSV with --schedule");
        sub->add_option("--lag", cfg.lag, "lag histogram CSV");
        sub->add_option("--schedule", cfg.schedule, "rollout schedule CSV (input is raw)");
        sub->add_option("--method", cfg.method, "0, 1, 2, 3 or all")->capture_default_str();
        sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
    };
    auto *sim = app.add_subcommand("simulate", "draw a synthetic registry from a scenario");
    sim->add_option("--scenario", cfg.scenario, "built-in name or scenario file")
        ->capture_default_str();
    sim->add_option("--set", cfg.overrides, "override a scenario key (key=value)");
    sim->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    sim->add_option("--out", cfg.out, "output directory")->capture_default_str();

    auto *est = app.add_subcommand("estimate", "point estimates and comparison table");
    add_data_flags(est);

    auto *bs = app.add_subcommand("bootstrap", "estimates with bootstrap confidence intervals");
    add_data_flags(bs);
    bs->add_option("-B,--B", cfg.replicates, "bootstrap replicates")->capture_default_str();
    bs->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    bs->add_option("--jobs", cfg.jobs, "worker threads")->capture_default_str();
    bs->add_option("--ci-level", cfg.ci_level, "confidence level")->capture_default_str();

    auto *rep = app.add_subcommand("report", "fitted trends as CSV and SVG");
    add_data_flags(rep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return static_cast<int>(ExitCode::ConfigError);
    }

    std::vector<std::string> args(argv, argv + argc);
    try {
        cfg.command = app.get_subcommands().front()->get_name();
        Outputs out(cfg.out);
        if (cfg.command == "simulate") {
            run_simulate(cfg, out);
        } else if (cfg.command == "estimate") {
            run_estimate(cfg, out, false);
        } else if (cfg.command == "bootstrap") {
            run_estimate(cfg, out, true);
        } else {
            run_report(cfg, out);
        }
        write_manifest(cfg, out, args);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const fs::filesystem_error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::ConfigError);
    }
    return 0;
}
