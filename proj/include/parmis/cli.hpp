#pragma once

// Command implementations behind tools/parmis.cpp. Each returns a process exit code:
// 0 success, 2 configuration or input error, 3 runtime failure.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parmis/errors.hpp"
#include "parmis/governors.hpp"
#include "parmis/optimizer.hpp"
#include "parmis/pareto.hpp"
#include "parmis/policy.hpp"
#include "parmis/socsim.hpp"

namespace parmis::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kRunFormatVersion = 1;

// ---- experiment config ---------------------------------------------------------

struct ExperimentConfig {
    std::string strategy = "parmis";
    std::vector<std::string> apps{"all"};
    std::vector<socsim::ObjectiveId> objectives{socsim::ObjectiveId::Time, socsim::ObjectiveId::Energy};
    std::vector<std::uint64_t> seeds{0};
    std::size_t budget = 300;
    optimizer::ParmisConfig parmis;
    optimizer::ScalarizedConfig scalarized;
    optimizer::Nsga2DirectConfig nsga2;
    policy::PolicyArchitecture arch;
    double theta_lo = -5.0;
    double theta_hi = 5.0;
    socsim::Calibration calibration;
    std::string output = "parmis_out";
    json source; ///< parsed document, used for the config hash
};

namespace detail {

inline void reject_unknown(const json& obj, const std::vector<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw InputError(where + ": expected an object");
    for (const auto& [k, v] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            throw InputError(where + ": unknown key '" + k + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

inline void read_calibration(const json& j, socsim::Calibration& c) {
    reject_unknown(j,
                   {"ipc_big", "ipc_little", "kappa_big", "kappa_little", "static_big", "static_little", "uncore",
                    "contention", "branch_miss_base", "branch_miss_slope", "l2_miss_base", "l2_miss_slope",
                    "mem_access_base", "mem_access_slope", "ext_mem_base", "ext_mem_slope", "feature_scale"},
                   "calibration");
    read(j, "ipc_big", c.ipc_big);
    read(j, "ipc_little", c.ipc_little);
    read(j, "kappa_big", c.kappa_big);
    read(j, "kappa_little", c.kappa_little);
    read(j, "static_big", c.static_big);
    read(j, "static_little", c.static_little);
    read(j, "uncore", c.uncore);
    read(j, "contention", c.contention);
    read(j, "branch_miss_base", c.branch_miss_base);
    read(j, "branch_miss_slope", c.branch_miss_slope);
    read(j, "l2_miss_base", c.l2_miss_base);
    read(j, "l2_miss_slope", c.l2_miss_slope);
    read(j, "mem_access_base", c.mem_access_base);
    read(j, "mem_access_slope", c.mem_access_slope);
    read(j, "ext_mem_base", c.ext_mem_base);
    read(j, "ext_mem_slope", c.ext_mem_slope);
    read(j, "feature_scale", c.feature_scale);
    if (!(c.ipc_big > 0 && c.ipc_little > 0)) throw InputError("calibration: IPC values must be > 0");
    for (double s : c.feature_scale)
        if (!(s > 0)) throw InputError("calibration: feature_scale entries must be > 0");
}

} // namespace detail

inline ExperimentConfig parse_config(const json& j) {
    using detail::read;
    ExperimentConfig c;
    c.source = j;
    try {
        detail::reject_unknown(j,
                               {"strategy", "apps", "objectives", "seeds", "budget", "parmis", "scalarized", "nsga2",
                                "policy", "calibration", "output"},
                               "config");
        read(j, "strategy", c.strategy);
        const std::vector<std::string> strategies{"parmis", "random", "scalarized", "nsga2", "governors"};
        if (std::find(strategies.begin(), strategies.end(), c.strategy) == strategies.end())
            throw InputError("config: unknown strategy '" + c.strategy + "'");
        if (j.contains("apps")) {
            if (j.at("apps").is_string()) c.apps = {j.at("apps").get<std::string>()};
            else c.apps = j.at("apps").get<std::vector<std::string>>();
        }
        if (c.apps.empty()) throw InputError("config: apps must not be empty");
        if (j.contains("objectives")) {
            c.objectives.clear();
            for (const auto& o : j.at("objectives")) c.objectives.push_back(socsim::objective_from_string(o.get<std::string>()));
        }
        socsim::validate_objectives(c.objectives);
        read(j, "seeds", c.seeds);
        if (c.seeds.empty()) throw InputError("config: seeds must not be empty");
        read(j, "budget", c.budget);
        if (c.budget < 1) throw InputError("config: budget must be >= 1");
        read(j, "output", c.output);

        if (j.contains("parmis")) {
            const auto& p = j.at("parmis");
            detail::reject_unknown(p,
                                   {"init_samples", "candidate_budget", "front_samples", "rff_features",
                                    "inner_population", "inner_generations", "refit_every", "noise_variance",
                                    "stop_on_convergence", "convergence_window", "convergence_tolerance"},
                                   "parmis");
            read(p, "init_samples", c.parmis.init_samples);
            read(p, "candidate_budget", c.parmis.candidate_budget);
            read(p, "front_samples", c.parmis.front_samples);
            read(p, "rff_features", c.parmis.rff_features);
            read(p, "inner_population", c.parmis.inner_population);
            read(p, "inner_generations", c.parmis.inner_generations);
            read(p, "refit_every", c.parmis.refit_every);
            read(p, "noise_variance", c.parmis.noise_variance);
            read(p, "stop_on_convergence", c.parmis.convergence.enabled);
            read(p, "convergence_window", c.parmis.convergence.window);
            read(p, "convergence_tolerance", c.parmis.convergence.tolerance);
        }
        if (c.budget < c.parmis.init_samples && c.strategy == "parmis")
            throw InputError("config: budget must be >= parmis.init_samples");
        c.parmis.max_iters = c.budget > c.parmis.init_samples ? c.budget - c.parmis.init_samples : 0;
        c.parmis.validate();

        if (j.contains("scalarized")) {
            const auto& s = j.at("scalarized");
            detail::reject_unknown(s, {"weights", "init_per_weight", "candidate_budget"}, "scalarized");
            if (s.contains("weights")) {
                const auto& w = s.at("weights");
                if (w.is_number_integer()) {
                    c.scalarized.weights = optimizer::uniform_weight_grid(w.get<std::size_t>());
                } else {
                    c.scalarized.weights.clear();
                    for (const auto& l : w) c.scalarized.weights.push_back({l.get<std::vector<double>>()});
                }
            }
            read(s, "init_per_weight", c.scalarized.init_per_weight);
            read(s, "candidate_budget", c.scalarized.candidate_budget);
        }
        if (c.objectives.size() != 2 && !(j.contains("scalarized") && j.at("scalarized").contains("weights") &&
                                          j.at("scalarized").at("weights").is_array())) {
            // The default grid is 2-D; k > 2 needs explicit weights.
            if (c.strategy == "scalarized") throw InputError("scalarized: give explicit weights when k != 2");
        }
        c.scalarized.per_weight_budget = c.budget / std::max<std::size_t>(c.scalarized.weights.size(), 1);
        if (c.strategy == "scalarized") c.scalarized.validate();

        if (j.contains("nsga2")) {
            const auto& n = j.at("nsga2");
            detail::reject_unknown(n, {"population_size"}, "nsga2");
            read(n, "population_size", c.nsga2.population_size);
        }
        c.nsga2.budget = c.budget;
        if (c.strategy == "nsga2" &&
            (c.nsga2.population_size < 4 || c.nsga2.population_size % 2 != 0 || c.budget < c.nsga2.population_size))
            throw InputError("nsga2: population_size must be even, >= 4 and <= budget");

        if (j.contains("policy")) {
            const auto& p = j.at("policy");
            detail::reject_unknown(p, {"hidden", "bounds"}, "policy");
            read(p, "hidden", c.arch.hidden);
            if (p.contains("bounds")) {
                const auto b = p.at("bounds").get<std::vector<double>>();
                if (b.size() != 2 || !(b[0] < b[1])) throw InputError("policy.bounds must be [lo, hi] with lo < hi");
                c.theta_lo = b[0];
                c.theta_hi = b[1];
            }
        }
        policy::validate_for_decisions(c.arch);
        if (j.contains("calibration")) detail::read_calibration(j.at("calibration"), c.calibration);
    } catch (const json::exception& ex) {
        throw InputError(std::string("config: ") + ex.what());
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open config file " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& ex) {
        throw InputError("config file " + path + ": " + ex.what());
    }
    return parse_config(j);
}

/// 64-bit FNV-1a of the canonical (sorted-key) JSON dump.
inline std::string config_hash(const json& j) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

/// "all", built-in workload names, or paths to workload JSON files.
inline std::vector<socsim::WorkloadSpec> resolve_apps(const std::vector<std::string>& names) {
    const auto suite = socsim::default_suite();
    std::vector<socsim::WorkloadSpec> out;
    for (const auto& n : names) {
        if (n == "all") {
            out.insert(out.end(), suite.begin(), suite.end());
        } else if (fs::exists(n) && fs::is_regular_file(n)) {
            out.push_back(socsim::load_workload(n));
        } else {
            out.push_back(socsim::find_workload(suite, n));
        }
    }
    if (out.empty()) throw InputError("evaluate: empty application list");
    return out;
}

inline std::vector<std::string> split(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

inline std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// ---- run output -----------------------------------------------------------------

inline std::string objectives_string(const std::vector<socsim::ObjectiveId>& objs) {
    std::string s;
    for (std::size_t i = 0; i < objs.size(); ++i) s += (i ? "," : "") + socsim::to_string(objs[i]);
    return s;
}

struct FrontRow {
    std::size_t id = 0;
    ObjectiveVector objectives;
    std::string policy; ///< relative policy path or "governor:<name>"
};

struct FrontFile {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string strategy;
    std::vector<std::string> objectives;
    std::vector<FrontRow> rows;
};

inline void write_front(const std::string& path, const FrontFile& f) {
    std::ofstream os(path);
    if (!os) throw RunError("cannot write " + path);
    os << "# config_hash=" << f.config_hash << " seed=" << f.seed << " strategy=" << f.strategy << "\n";
    os << "id";
    for (const auto& o : f.objectives) os << "," << o;
    os << ",policy\n";
    for (const auto& r : f.rows) {
        os << r.id;
        for (double v : r.objectives) os << "," << fmt(v);
        os << "," << r.policy << "\n";
    }
}

inline FrontFile read_front(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open front file " + path);
    FrontFile f;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string tok;
            while (ls >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) continue;
                const auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
                if (key == "config_hash") f.config_hash = val;
                else if (key == "seed") f.seed = std::stoull(val);
                else if (key == "strategy") f.strategy = val;
            }
            continue;
        }
        auto cells = split(line);
        if (!header) {
            if (cells.size() < 4 || cells.front() != "id" || cells.back() != "policy")
                throw InputError("front file " + path + ": bad header");
            f.objectives.assign(cells.begin() + 1, cells.end() - 1);
            header = true;
            continue;
        }
        if (cells.size() != f.objectives.size() + 2) throw InputError("front file " + path + ": bad row '" + line + "'");
        FrontRow r;
        try {
            r.id = std::stoull(cells[0]);
            for (std::size_t j = 0; j < f.objectives.size(); ++j) r.objectives.push_back(std::stod(cells[j + 1]));
        } catch (const std::exception&) {
            throw InputError("front file " + path + ": bad number in '" + line + "'");
        }
        r.policy = cells.back();
        f.rows.push_back(std::move(r));
    }
    if (!header) throw InputError("front file " + path + ": missing header");
    return f;
}

inline json evaluation_record(const optimizer::Evaluation& e, double phv, const std::string& hash,
                              std::uint64_t seed) {
    json r{{"format", kRunFormatVersion}, {"config_hash", hash}, {"seed", seed}, {"id", e.id},
           {"iteration", e.iteration}, {"failed", e.failed}, {"phv", phv}};
    if (e.failed) r["error"] = e.error;
    else r["objectives"] = e.objectives;
    r["theta"] = e.theta;
    return r;
}

struct SeedSummary {
    std::string strategy;
    std::uint64_t seed = 0;
    double phv = 0.0;
    std::size_t evals = 0;
    double wall_seconds = 0.0;
};

inline SeedSummary write_run(const std::string& dir, const ExperimentConfig& cfg, const optimizer::RunRecord& rec,
                             double wall_seconds) {
    fs::create_directories(fs::path(dir) / "policies");
    const auto hash = config_hash(cfg.source);
    const auto curve = optimizer::phv_curve(rec.log, rec.tracking_reference);
    {
        std::ofstream os(fs::path(dir) / "run.jsonl");
        for (const auto& e : rec.log.entries()) os << evaluation_record(e, curve[e.id], hash, rec.seed).dump() << "\n";
    }
    FrontFile ff{hash, rec.seed, rec.strategy, split(objectives_string(cfg.objectives)), {}};
    for (std::size_t i = 0; i < rec.front.size(); ++i) {
        const auto id = rec.front.member_ids[i];
        const auto rel = "policies/" + std::to_string(id) + ".pol";
        policy::save_policy((fs::path(dir) / rel).string(),
                            policy::from_theta(cfg.arch, rec.log.entries()[id].theta));
        ff.rows.push_back({id, rec.front.points[i], rel});
    }
    write_front((fs::path(dir) / "front.csv").string(), ff);

    SeedSummary s{rec.strategy, rec.seed, curve.empty() ? 0.0 : curve.back(), rec.log.size(), wall_seconds};
    json summary{{"format", kRunFormatVersion},
                 {"config_hash", hash},
                 {"seed", rec.seed},
                 {"strategy", rec.strategy},
                 {"objectives", split(objectives_string(cfg.objectives))},
                 {"evaluations", rec.log.size()},
                 {"failed_evaluations", rec.log.size() - rec.log.successful()},
                 {"front_size", rec.front.size()},
                 {"reference", rec.tracking_reference},
                 {"phv", s.phv},
                 {"converged", rec.converged},
                 {"wall_seconds", wall_seconds},
                 {"config", cfg.source},
                 {"phase_seconds",
                  {{"fit", rec.seconds.fit},
                   {"sample", rec.seconds.sample},
                   {"select", rec.seconds.select},
                   {"evaluate", rec.seconds.evaluate}}}};
    std::ofstream(fs::path(dir) / "summary.json") << summary.dump(2) << "\n";
    return s;
}

inline SeedSummary write_governor_run(const std::string& dir, const ExperimentConfig& cfg, std::uint64_t seed,
                                      const std::vector<optimizer::GovernorPoint>& points) {
    fs::create_directories(dir);
    const auto hash = config_hash(cfg.source);
    std::vector<ObjectiveVector> pts;
    for (const auto& g : points) pts.push_back(g.objectives);
    const auto front = pareto_front(pts);
    const auto ref = reference_point(pts);
    const double phv = hypervolume_clipped(front.points, ref);
    {
        std::ofstream os(fs::path(dir) / "run.jsonl");
        for (std::size_t i = 0; i < points.size(); ++i) {
            os << json{{"format", kRunFormatVersion}, {"config_hash", hash}, {"seed", seed}, {"id", i},
                       {"iteration", 0}, {"failed", false},
                       {"governor", points[i].name}, {"objectives", points[i].objectives}}
                      .dump()
               << "\n";
        }
    }
    FrontFile ff{hash, seed, "governors", split(objectives_string(cfg.objectives)), {}};
    for (std::size_t i = 0; i < front.size(); ++i) {
        const auto id = front.member_ids[i];
        ff.rows.push_back({id, front.points[i], "governor:" + points[id].name});
    }
    write_front((fs::path(dir) / "front.csv").string(), ff);
    json summary{{"format", kRunFormatVersion}, {"config_hash", hash},       {"seed", seed},
                 {"strategy", "governors"},     {"objectives", ff.objectives}, {"evaluations", points.size()},
                 {"front_size", front.size()},  {"reference", ref},           {"phv", phv},
                 {"wall_seconds", 0.0},         {"config", cfg.source}};
    std::ofstream(fs::path(dir) / "summary.json") << summary.dump(2) << "\n";
    return {"governors", seed, phv, points.size(), 0.0};
}

inline optimizer::RunRecord execute(const ExperimentConfig& cfg, std::uint64_t seed,
                                    const std::vector<socsim::WorkloadSpec>& apps) {
    const auto eval = optimizer::policy_evaluator(cfg.arch, apps, cfg.objectives, cfg.calibration);
    const auto bounds = optimizer::policy_bounds(cfg.arch, cfg.theta_lo, cfg.theta_hi);
    if (cfg.strategy == "parmis") {
        auto p = cfg.parmis;
        p.seed = seed;
        return optimizer::run_parmis(eval, bounds, p);
    }
    if (cfg.strategy == "random") return optimizer::run_random_search(eval, bounds, cfg.budget, seed);
    if (cfg.strategy == "scalarized") {
        auto s = cfg.scalarized;
        s.seed = seed;
        return optimizer::run_scalarized(eval, bounds, s);
    }
    auto n = cfg.nsga2;
    n.seed = seed;
    return optimizer::run_nsga2_direct(eval, bounds, n);
}

// ---- commands --------------------------------------------------------------------

struct RunOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

inline int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg;
    std::vector<socsim::WorkloadSpec> apps;
    try {
        cfg = load_config(opts.config_path);
        if (opts.seed) cfg.seeds = {*opts.seed};
        if (opts.out) cfg.output = *opts.out;
        apps = resolve_apps(cfg.apps);
    } catch (const InputError& ex) {
        err << "config error: " << ex.what() << "\n";
        return kExitConfig;
    }
    try {
        std::vector<SeedSummary> rows;
        for (auto seed : cfg.seeds) {
            const auto dir = (fs::path(cfg.output) / ("seed_" + std::to_string(seed))).string();
            if (cfg.strategy == "governors") {
                rows.push_back(
                    write_governor_run(dir, cfg, seed, optimizer::governor_points(apps, cfg.objectives, cfg.calibration)));
                continue;
            }
            const auto t0 = std::chrono::steady_clock::now();
            const auto rec = execute(cfg, seed, apps);
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back(write_run(dir, cfg, rec, wall));
        }
        std::ofstream table(fs::path(cfg.output) / "summary.csv");
        table << "# config_hash=" << config_hash(cfg.source) << "\n";
        table << "strategy,seed,phv,evals,wall_seconds\n";
        out << "strategy,seed,phv,evals,wall_seconds\n";
        for (const auto& r : rows) {
            std::ostringstream line;
            line << r.strategy << "," << r.seed << "," << fmt(r.phv) << "," << r.evals << "," << r.wall_seconds;
            table << line.str() << "\n";
            out << line.str() << "\n";
        }
    } catch (const InputError& ex) {
        err << "input error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        err << "run failed: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

namespace detail {

struct LoadedRun {
    std::string dir;
    FrontFile front;
    std::vector<ObjectiveVector> evaluated;
};

inline LoadedRun load_run(const fs::path& dir) {
    LoadedRun r;
    r.dir = dir.string();
    r.front = read_front((dir / "front.csv").string());
    std::ifstream is(dir / "run.jsonl");
    if (!is) throw InputError("missing run.jsonl in " + dir.string());
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& ex) {
            throw InputError("run.jsonl in " + dir.string() + ": " + ex.what());
        }
        if (j.contains("objectives") && !j.value("failed", false))
            r.evaluated.push_back(j.at("objectives").get<ObjectiveVector>());
    }
    if (r.evaluated.empty()) for (const auto& row : r.front.rows) r.evaluated.push_back(row.objectives);
    return r;
}

/// A directory holding front.csv is one run; otherwise its seed_* subdirectories are.
inline std::vector<fs::path> expand_run_dirs(const std::vector<std::string>& dirs) {
    std::vector<fs::path> out;
    for (const auto& d : dirs) {
        const fs::path p(d);
        if (fs::exists(p / "front.csv")) {
            out.push_back(p);
            continue;
        }
        if (!fs::is_directory(p)) throw InputError("not a run directory: " + d);
        std::vector<fs::path> sub;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_directory() && fs::exists(e.path() / "front.csv")) sub.push_back(e.path());
        if (sub.empty()) throw InputError("no runs found under " + d);
        std::sort(sub.begin(), sub.end());
        out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
}

} // namespace detail

struct CompareOptions {
    std::vector<std::string> dirs;
    std::string reference = "auto"; ///< "auto" or comma-separated values
    std::optional<std::string> out_csv;
};

/// Shared reference, per-run PHV and PHV normalized by the first parmis run (or the first run).
inline int cmd_compare(const CompareOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        if (opts.dirs.empty()) throw InputError("compare: no run directories");
        std::vector<detail::LoadedRun> runs;
        for (const auto& d : detail::expand_run_dirs(opts.dirs)) runs.push_back(detail::load_run(d));
        for (const auto& r : runs) {
            if (r.front.objectives != runs.front().front.objectives) {
                throw InputError("compare: objective sets differ (" + r.dir + " has " +
                                 [&] {
                                     std::string s;
                                     for (const auto& o : r.front.objectives) s += o + " ";
                                     return s;
                                 }() +
                                 ")");
            }
        }
        ObjectiveVector ref;
        if (opts.reference == "auto") {
            std::vector<std::vector<ObjectiveVector>> sets;
            for (const auto& r : runs) sets.push_back(r.evaluated);
            ref = reference_point(sets);
        } else {
            for (const auto& v : split(opts.reference)) ref.push_back(std::stod(v));
            if (ref.size() != runs.front().front.objectives.size())
                throw InputError("compare: reference has the wrong number of objectives");
        }
        std::size_t base = 0;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            if (runs[i].front.strategy == "parmis") {
                base = i;
                break;
            }
        }
        std::vector<double> phv;
        for (const auto& r : runs) {
            std::vector<ObjectiveVector> pts;
            for (const auto& row : r.front.rows) pts.push_back(row.objectives);
            phv.push_back(pts.empty() ? 0.0 : hypervolume_clipped(pts, ref));
        }
        if (!(phv[base] > 0.0)) throw RunError("compare: base run " + runs[base].dir + " has zero hypervolume");
        std::ostringstream csv;
        csv << "# reference=";
        for (std::size_t j = 0; j < ref.size(); ++j) csv << (j ? "," : "") << fmt(ref[j]);
        csv << " base=" << runs[base].dir << "\n";
        csv << "run,strategy,seed,config_hash,phv,normalized_phv\n";
        for (std::size_t i = 0; i < runs.size(); ++i) {
            csv << runs[i].dir << "," << runs[i].front.strategy << "," << runs[i].front.seed << ","
                << runs[i].front.config_hash << "," << fmt(phv[i]) << "," << fmt(phv[i] / phv[base]) << "\n";
        }
        out << csv.str();
        if (opts.out_csv) {
            std::ofstream os(*opts.out_csv);
            if (!os) throw RunError("cannot write " + *opts.out_csv);
            os << csv.str();
        }
    } catch (const InputError& ex) {
        err << "compare: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        err << "compare failed: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

struct SelectOptions {
    std::string front_path;
    std::vector<double> weights;     ///< weighted sum over front-normalized objectives
    std::vector<std::string> lex;    ///< lexicographic objective order
    std::optional<std::string> out;  ///< copy of the chosen policy file
};

/// Index of the front row chosen by the preference; ties go to the earlier row.
inline std::size_t select_row(const FrontFile& f, const SelectOptions& opts) {
    if (f.rows.empty()) throw InputError("select: front file has no members");
    const std::size_t k = f.objectives.size();
    if (!opts.lex.empty()) {
        std::vector<std::size_t> order;
        for (const auto& name : opts.lex) {
            const auto it = std::find(f.objectives.begin(), f.objectives.end(), name);
            if (it == f.objectives.end()) throw InputError("select: objective '" + name + "' not in front file");
            order.push_back(static_cast<std::size_t>(it - f.objectives.begin()));
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < f.rows.size(); ++i) {
            for (auto j : order) {
                const double a = f.rows[i].objectives[j], b = f.rows[best].objectives[j];
                if (a < b) {
                    best = i;
                    break;
                }
                if (a > b) break;
            }
        }
        return best;
    }
    if (opts.weights.size() != k) throw InputError("select: need " + std::to_string(k) + " weights");
    for (double w : opts.weights)
        if (!(w >= 0.0)) throw InputError("select: weights must be >= 0");
    std::vector<double> lo(k, std::numeric_limits<double>::infinity()), hi(k, -std::numeric_limits<double>::infinity());
    for (const auto& r : f.rows)
        for (std::size_t j = 0; j < k; ++j) {
            lo[j] = std::min(lo[j], r.objectives[j]);
            hi[j] = std::max(hi[j], r.objectives[j]);
        }
    std::size_t best = 0;
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
        double v = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double range = hi[j] - lo[j];
            v += opts.weights[j] * (range > 0.0 ? (f.rows[i].objectives[j] - lo[j]) / range : 0.0);
        }
        if (v < best_value) {
            best_value = v;
            best = i;
        }
    }
    return best;
}

inline int cmd_select(const SelectOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        if (opts.weights.empty() == opts.lex.empty()) throw InputError("select: give exactly one of weights or lex");
        const auto f = read_front(opts.front_path);
        const auto i = select_row(f, opts);
        const auto& row = f.rows[i];
        out << "id," ;
        for (std::size_t j = 0; j < f.objectives.size(); ++j) out << f.objectives[j] << ",";
        out << "policy\n" << row.id << ",";
        for (double v : row.objectives) out << fmt(v) << ",";
        out << row.policy << "\n";
        if (opts.out) {
            if (row.policy.rfind("governor:", 0) == 0) throw InputError("select: chosen member is a governor");
            const auto src = fs::path(opts.front_path).parent_path() / row.policy;
            policy::save_policy(*opts.out, policy::load_policy(src.string()));
        }
    } catch (const InputError& ex) {
        err << "select: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        err << "select failed: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

struct EvalOptions {
    std::string policy; ///< policy file path or governor name
    std::vector<std::string> apps{"all"};
    std::vector<std::string> objectives{"time", "energy"};
    std::optional<std::string> trace_path;
};

inline json eval_json(const socsim::EvalResult& r, const std::vector<socsim::ObjectiveId>& objs) {
    json apps = json::array();
    for (const auto& a : r.apps)
        apps.push_back({{"name", a.name}, {"exec_time", a.exec_time}, {"energy", a.energy}, {"work", a.work}});
    return {{"exec_time", r.exec_time}, {"energy", r.energy}, {"work", r.work},
            {"ppw", r.ppw},             {"objectives", socsim::objective_vector(r, objs)}, {"apps", apps}};
}

inline int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
    try {
        std::vector<socsim::ObjectiveId> objs;
        for (const auto& o : opts.objectives) objs.push_back(socsim::objective_from_string(o));
        socsim::validate_objectives(objs);
        const auto apps = resolve_apps(opts.apps);
        const bool trace = opts.trace_path.has_value();
        socsim::EvalResult r;
        if (governors::is_governor(opts.policy)) {
            r = socsim::simulate(governors::by_name(opts.policy), apps, {}, trace);
        } else {
            const auto params = policy::load_policy(opts.policy);
            r = socsim::simulate(socsim::policy_controller(params), apps, {}, trace);
        }
        auto j = eval_json(r, objs);
        j["policy"] = opts.policy;
        j["objective_names"] = opts.objectives;
        out << std::setprecision(17) << j.dump(2) << "\n";
        if (trace) {
            std::ofstream os(*opts.trace_path);
            if (!os) throw RunError("cannot write " + *opts.trace_path);
            for (const auto& t : r.trace) {
                os << json{{"app", t.app},
                           {"epoch", t.epoch},
                           {"a_big", t.decision.a_big},
                           {"a_little", t.decision.a_little},
                           {"f_big_mhz", t.decision.f_big_mhz()},
                           {"f_little_mhz", t.decision.f_little_mhz()},
                           {"state", t.state.features},
                           {"time", t.time},
                           {"power", t.power}}
                          .dump()
                   << "\n";
            }
        }
    } catch (const InputError& ex) {
        err << "eval: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& ex) {
        err << "eval failed: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

/// Writes the built-in workload suite as JSON files.
inline int cmd_export_workloads(const std::string& dir, std::ostream& out, std::ostream& err) {
    try {
        fs::create_directories(dir);
        for (const auto& w : socsim::default_suite()) {
            const auto path = fs::path(dir) / (w.name + ".json");
            std::ofstream(path) << socsim::to_json(w).dump(2) << "\n";
            out << path.string() << "\n";
        }
    } catch (const std::exception& ex) {
        err << "export failed: " << ex.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}

} // namespace parmis::cli
