#pragma once

// Deterministic big.LITTLE SoC model. One DRM decision per epoch; the counters
// observed during epoch e feed the decision for epoch e + 1.
//
// Per-core instruction rate (parallel phase):
//   ipc_L(beta, mu) = ipc_little * (1 - 0.5 beta) * (1 - 0.5 mu)
//   ipc_B(beta, mu) = ipc_big * (0.5 + 0.5 beta) * (1 - 0.5 mu)
//   rate                = ipc * f / (1 + contention * mu * (n_active - 1)^2)
// The serial fraction runs on the fastest active core without contention:
//   time = work (1 - p) / R_single + work p / R_total
// Power = sum_cluster kappa f^3 * busy / T + a * P_static + P_uncore.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parmis/errors.hpp"
#include "parmis/pareto.hpp"
#include "parmis/policy.hpp"
#include "parmis/random.hpp"

namespace parmis::socsim {

using policy::DrmDecision;
using policy::SystemState;

struct Calibration {
    double ipc_big = 2.0;
    double ipc_little = 1.0;
    double kappa_big = 0.25;     ///< W / GHz^3 per busy core
    double kappa_little = 0.08;
    double static_big = 0.12;    ///< W per active core
    double static_little = 0.03;
    double uncore = 0.4;         ///< W
    double contention = 0.05;

    // Counter model, events per instruction: c0 + c1 * mu (branch misses use 1 - mu).
    double branch_miss_base = 0.002;
    double branch_miss_slope = 0.006;
    double l2_miss_base = 0.001;
    double l2_miss_slope = 0.03;
    double mem_access_base = 0.2;
    double mem_access_slope = 0.3;
    double ext_mem_base = 0.0005;
    double ext_mem_slope = 0.015;

    // Normalization scales for SystemState (value / scale, clamped to [0, 1]).
    std::array<double, policy::kNumFeatures> feature_scale{1e9, 4e9, 1e7, 5e7, 5e8, 2e7, 4.0,
                                                           1.0, 1.0, 1.0, 1.0, 12.0};
};

struct EpochSpec {
    double work = 1e8;              ///< instructions
    double parallel_fraction = 0.5; ///< p
    double memory_intensity = 0.2;  ///< mu
    double big_affinity = 0.5;      ///< beta

    void validate() const {
        if (!(work >= 1e6 && work <= 1e9)) throw InputError("EpochSpec: work must lie in [1e6, 1e9]");
        auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
        if (!unit(parallel_fraction) || !unit(memory_intensity) || !unit(big_affinity)) {
            throw InputError("EpochSpec: p, memory_intensity and big_affinity must lie in [0, 1]");
        }
    }
};

struct WorkloadSpec {
    std::string name;
    std::vector<EpochSpec> epochs;
    std::uint64_t seed = 0;

    void validate() const {
        if (epochs.empty()) throw InputError("WorkloadSpec '" + name + "': needs at least one epoch");
        for (const auto& e : epochs) e.validate();
    }
};

/// Raw counters of one epoch.
struct Counters {
    double instructions = 0.0;
    double cycles = 0.0;
    double branch_misses = 0.0;
    double l2_misses = 0.0;
    double data_memory_accesses = 0.0;
    double external_memory_requests = 0.0;
    double little_utilization_sum = 0.0;
    std::array<double, 4> big_utilization{};
    double power = 0.0;
};

struct StepResult {
    double time = 0.0;   ///< s
    double power = 0.0;  ///< W
    double energy = 0.0; ///< J
    Counters counters;
    SystemState state;   ///< normalized counters
};

inline SystemState normalize(const Counters& c, const Calibration& cal) {
    const std::array<double, policy::kNumFeatures> raw{c.instructions,
                                                       c.cycles,
                                                       c.branch_misses,
                                                       c.l2_misses,
                                                       c.data_memory_accesses,
                                                       c.external_memory_requests,
                                                       c.little_utilization_sum,
                                                       c.big_utilization[0],
                                                       c.big_utilization[1],
                                                       c.big_utilization[2],
                                                       c.big_utilization[3],
                                                       c.power};
    SystemState s;
    for (std::size_t i = 0; i < raw.size(); ++i) s.features[i] = std::clamp(raw[i] / cal.feature_scale[i], 0.0, 1.0);
    return s;
}

/// State fed to the first decision of every application.
inline SystemState boot_state() { return SystemState{}; }

inline StepResult step_model(const DrmDecision& d, const EpochSpec& e, const Calibration& cal = {}) {
    if (!d.valid()) throw InputError("step_model: invalid decision");
    const double mu = e.memory_intensity;
    const double p = e.parallel_fraction;
    const double fb = d.f_big_mhz() * 1e-3; // GHz
    const double fl = d.f_little_mhz() * 1e-3;
    const double mem_scale = 1.0 - 0.5 * mu;
    const double ipc_l = cal.ipc_little * (1.0 - 0.5 * e.big_affinity) * mem_scale;
    const double ipc_b = cal.ipc_big * (0.5 + 0.5 * e.big_affinity) * mem_scale;
    const int n_active = d.a_big + d.a_little;
    const double crowd = static_cast<double>(n_active - 1);
    const double contention = 1.0 + cal.contention * mu * crowd * crowd;

    const double single_b = ipc_b * fb * 1e9;
    const double single_l = ipc_l * fl * 1e9;
    const bool serial_on_big = d.a_big > 0 && single_b > single_l;
    const double r_single = serial_on_big ? single_b : single_l;
    const double r_total = (d.a_big * single_b + d.a_little * single_l) / contention;

    const double t_serial = e.work * (1.0 - p) / r_single;
    const double t_parallel = e.work * p / r_total;
    const double time = t_serial + t_parallel;

    const double busy_big = d.a_big * t_parallel + (serial_on_big ? t_serial : 0.0);
    const double busy_little = d.a_little * t_parallel + (serial_on_big ? 0.0 : t_serial);
    const double energy = cal.kappa_big * fb * fb * fb * busy_big + cal.kappa_little * fl * fl * fl * busy_little +
                          (d.a_big * cal.static_big + d.a_little * cal.static_little + cal.uncore) * time;

    StepResult r;
    r.time = time;
    r.energy = energy;
    r.power = energy / time;
    auto& c = r.counters;
    c.instructions = e.work;
    c.cycles = fb * 1e9 * busy_big + fl * 1e9 * busy_little;
    c.branch_misses = e.work * (cal.branch_miss_base + cal.branch_miss_slope * (1.0 - mu));
    c.l2_misses = e.work * (cal.l2_miss_base + cal.l2_miss_slope * mu);
    c.data_memory_accesses = e.work * (cal.mem_access_base + cal.mem_access_slope * mu);
    c.external_memory_requests = e.work * (cal.ext_mem_base + cal.ext_mem_slope * mu);
    c.little_utilization_sum = busy_little / time;
    for (int i = 0; i < d.a_big; ++i) {
        const double busy = t_parallel + (serial_on_big && i == 0 ? t_serial : 0.0);
        c.big_utilization[static_cast<std::size_t>(i)] = busy / time;
    }
    c.power = r.power;
    r.state = normalize(c, cal);
    return r;
}

enum class ObjectiveId { Time, Energy, Ppw };

inline std::string to_string(ObjectiveId id) {
    switch (id) {
    case ObjectiveId::Time: return "time";
    case ObjectiveId::Energy: return "energy";
    case ObjectiveId::Ppw: return "ppw";
    }
    return "?";
}

inline ObjectiveId objective_from_string(const std::string& s) {
    if (s == "time") return ObjectiveId::Time;
    if (s == "energy") return ObjectiveId::Energy;
    if (s == "ppw") return ObjectiveId::Ppw;
    throw InputError("unknown objective '" + s + "' (expected time, energy or ppw)");
}

struct TraceRecord {
    std::string app;
    std::size_t epoch = 0;
    DrmDecision decision;
    SystemState state; ///< counters observed during this epoch
    double time = 0.0;
    double power = 0.0;
};

struct AppResult {
    std::string name;
    double exec_time = 0.0;
    double energy = 0.0;
    double work = 0.0;
};

struct EvalResult {
    double exec_time = 0.0; ///< s
    double energy = 0.0;    ///< J
    double work = 0.0;      ///< instructions
    double ppw = 0.0;       ///< instructions per joule
    std::vector<AppResult> apps;
    std::vector<TraceRecord> trace;
};

/// A DRM controller: reset() at the start of every application, then one decision per epoch.
struct Controller {
    std::function<void()> reset;
    std::function<DrmDecision(const SystemState&)> decide;
};

inline Controller policy_controller(const policy::PolicyParams& params) {
    policy::validate_for_decisions(params.arch);
    return Controller{[] {}, [&params](const SystemState& s) { return policy::decide(params, s); }};
}

inline EvalResult simulate(const Controller& controller, std::span<const WorkloadSpec> apps,
                           const Calibration& cal = {}, bool record_trace = false) {
    if (apps.empty()) throw InputError("evaluate: empty application list");
    EvalResult out;
    for (const auto& app : apps) {
        app.validate();
        if (controller.reset) controller.reset();
        AppResult ar{app.name, 0.0, 0.0, 0.0};
        SystemState state = boot_state();
        for (std::size_t e = 0; e < app.epochs.size(); ++e) {
            const DrmDecision d = controller.decide(state);
            if (!d.valid()) throw InputError("controller produced an invalid decision");
            const auto step = step_model(d, app.epochs[e], cal);
            ar.exec_time += step.time;
            ar.energy += step.energy;
            ar.work += app.epochs[e].work;
            if (record_trace) out.trace.push_back({app.name, e, d, step.state, step.time, step.power});
            state = step.state;
        }
        out.exec_time += ar.exec_time;
        out.energy += ar.energy;
        out.work += ar.work;
        out.apps.push_back(std::move(ar));
    }
    out.ppw = out.work / out.energy;
    return out;
}

/// Objective vector in minimization form; PPW is reported as -(instructions per joule) / 1e9.
inline ObjectiveVector objective_vector(double exec_time, double energy, double work,
                                        std::span<const ObjectiveId> objectives) {
    ObjectiveVector v;
    for (auto id : objectives) {
        switch (id) {
        case ObjectiveId::Time: v.push_back(exec_time); break;
        case ObjectiveId::Energy: v.push_back(energy); break;
        case ObjectiveId::Ppw: v.push_back(-(work / energy) * 1e-9); break;
        }
    }
    return v;
}

inline ObjectiveVector objective_vector(const EvalResult& r, std::span<const ObjectiveId> objectives) {
    return objective_vector(r.exec_time, r.energy, r.work, objectives);
}

inline ObjectiveVector objective_vector(const AppResult& r, std::span<const ObjectiveId> objectives) {
    return objective_vector(r.exec_time, r.energy, r.work, objectives);
}

inline void validate_objectives(std::span<const ObjectiveId> objectives) {
    if (objectives.size() < 2) throw InputError("evaluate: need at least two objectives");
}

inline ObjectiveVector evaluate(const policy::PolicyParams& params, std::span<const WorkloadSpec> apps,
                                std::span<const ObjectiveId> objectives, const Calibration& cal = {}) {
    validate_objectives(objectives);
    return objective_vector(simulate(policy_controller(params), apps, cal), objectives);
}

// ---- workload files -----------------------------------------------------------
// {"name": str, "seed": int, "epochs": [{"work": n, "parallel_fraction": p,
//   "memory_intensity": mu, "big_affinity": beta}, ...]}

inline nlohmann::json to_json(const WorkloadSpec& w) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : w.epochs) {
        epochs.push_back({{"work", e.work},
                          {"parallel_fraction", e.parallel_fraction},
                          {"memory_intensity", e.memory_intensity},
                          {"big_affinity", e.big_affinity}});
    }
    return {{"name", w.name}, {"seed", w.seed}, {"epochs", epochs}};
}

inline WorkloadSpec workload_from_json(const nlohmann::json& j) {
    auto require = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
        if (!obj.is_object() || !obj.contains(key)) throw InputError(std::string("workload: missing key '") + key + "'");
        return obj.at(key);
    };
    static const std::vector<std::string> top_keys{"name", "seed", "epochs"};
    static const std::vector<std::string> epoch_keys{"work", "parallel_fraction", "memory_intensity", "big_affinity"};
    if (!j.is_object()) throw InputError("workload: expected an object");
    for (const auto& [k, v] : j.items())
        if (std::find(top_keys.begin(), top_keys.end(), k) == top_keys.end())
            throw InputError("workload: unknown key '" + k + "'");
    try {
        WorkloadSpec w;
        w.name = require(j, "name").get<std::string>();
        w.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : 0;
        for (const auto& ej : require(j, "epochs")) {
            for (const auto& [k, v] : ej.items())
                if (std::find(epoch_keys.begin(), epoch_keys.end(), k) == epoch_keys.end())
                    throw InputError("workload: unknown epoch key '" + k + "'");
            EpochSpec e;
            e.work = require(ej, "work").get<double>();
            e.parallel_fraction = require(ej, "parallel_fraction").get<double>();
            e.memory_intensity = require(ej, "memory_intensity").get<double>();
            e.big_affinity = require(ej, "big_affinity").get<double>();
            w.epochs.push_back(e);
        }
        w.validate();
        return w;
    } catch (const nlohmann::json::exception& ex) {
        throw InputError(std::string("workload: ") + ex.what());
    }
}

inline WorkloadSpec load_workload(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open workload file " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& ex) {
        throw InputError("workload file " + path + ": " + ex.what());
    }
    return workload_from_json(j);
}

// ---- built-in suite -------------------------------------------------------------

struct Phase {
    std::size_t epochs;
    double work;
    double p;
    double mu;
    double beta;
};

/// Phases are expanded into epochs with +-5% deterministic jitter.
inline WorkloadSpec make_workload(const std::string& name, std::uint64_t seed, const std::vector<Phase>& phases) {
    WorkloadSpec w{name, {}, seed};
    Rng rng(seed);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (const auto& ph : phases) {
        for (std::size_t i = 0; i < ph.epochs; ++i) {
            EpochSpec e;
            e.work = std::clamp(ph.work * (1.0 + jitter(rng)), 1e6, 1e9);
            e.parallel_fraction = std::clamp(ph.p + jitter(rng), 0.0, 1.0);
            e.memory_intensity = std::clamp(ph.mu + jitter(rng), 0.0, 1.0);
            e.big_affinity = std::clamp(ph.beta + jitter(rng), 0.0, 1.0);
            // Round so the JSON fixtures reproduce the suite exactly.
            e.work = std::round(e.work);
            e.parallel_fraction = std::round(e.parallel_fraction * 1e6) / 1e6;
            e.memory_intensity = std::round(e.memory_intensity * 1e6) / 1e6;
            e.big_affinity = std::round(e.big_affinity * 1e6) / 1e6;
            w.epochs.push_back(e);
        }
    }
    return w;
}

/// Twelve synthetic applications spanning the (p, mu, beta) corners.
inline std::vector<WorkloadSpec> default_suite() {
    return {
        make_workload("cipher_stream", 101, {{16, 3e8, 0.25, 0.10, 0.90}, {8, 2e8, 0.60, 0.15, 0.85}}),
        make_workload("block_encrypt", 102, {{12, 4e8, 0.55, 0.15, 0.80}, {12, 3e8, 0.70, 0.25, 0.75}}),
        make_workload("radix_sort", 103, {{8, 3e8, 0.85, 0.70, 0.50}, {8, 2e8, 0.30, 0.40, 0.60}, {8, 3e8, 0.90, 0.75, 0.45}}),
        make_workload("shortest_path", 104, {{10, 2e8, 0.45, 0.80, 0.30}, {10, 2e8, 0.70, 0.85, 0.25}}),
        make_workload("string_scan", 105, {{20, 2e8, 0.20, 0.50, 0.40}}),
        make_workload("fft_kernel", 106, {{8, 4e8, 0.90, 0.30, 0.90}, {8, 2e8, 0.50, 0.50, 0.70}, {8, 4e8, 0.92, 0.30, 0.90}}),
        make_workload("spectral_cluster", 107, {{6, 3e8, 0.90, 0.20, 0.85}, {6, 3e8, 0.80, 0.80, 0.40},
                                               {6, 3e8, 0.90, 0.20, 0.85}, {6, 3e8, 0.80, 0.80, 0.40}}),
        make_workload("pca_reduce", 108, {{10, 5e8, 0.95, 0.45, 0.70}, {10, 3e8, 0.85, 0.65, 0.55}}),
        make_workload("scalar_math", 109, {{20, 3e8, 0.08, 0.05, 0.95}}),
        make_workload("image_filter", 110, {{24, 4e8, 0.97, 0.20, 0.80}}),
        make_workload("motion_search", 111, {{8, 3e8, 0.75, 0.35, 0.65}, {8, 2e8, 0.40, 0.60, 0.50},
                                            {8, 3e8, 0.85, 0.30, 0.75}}),
        make_workload("text_summarize", 112, {{10, 2e8, 0.50, 0.30, 0.60}, {10, 2e8, 0.55, 0.70, 0.35}}),
    };
}

/// Workloads used for the single-application convergence and governor experiments.
inline std::vector<std::string> designated_workloads() {
    return {"radix_sort", "shortest_path", "spectral_cluster", "pca_reduce"};
}

inline const WorkloadSpec& find_workload(const std::vector<WorkloadSpec>& suite, const std::string& name) {
    for (const auto& w : suite)
        if (w.name == name) return w;
    throw InputError("unknown workload '" + name + "'");
}

} // namespace parmis::socsim
