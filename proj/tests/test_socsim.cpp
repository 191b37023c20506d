#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "parmis/socsim.hpp"

using namespace parmis;
using namespace parmis::socsim;
using policy::DrmDecision;

namespace {

Controller fixed(DrmDecision d) {
    return Controller{{}, [d](const SystemState&) { return d; }};
}

const std::vector<ObjectiveId> kTimeEnergy{ObjectiveId::Time, ObjectiveId::Energy};

void expect_rel(double actual, double expected, double tol = 1e-9) {
    EXPECT_NEAR(actual, expected, tol * std::abs(expected)) << "expected " << expected;
}

policy::PolicyParams random_policy(std::mt19937_64& rng, float scale = 2.0f) {
    std::normal_distribution<float> n(0.0f, scale);
    policy::PolicyParams p{{}, std::vector<float>(1073)};
    for (auto& v : p.theta) v = n(rng);
    return p;
}

WorkloadSpec random_workload(std::mt19937_64& rng, std::size_t epochs) {
    std::uniform_real_distribution<double> u(0.0, 1.0), w(1e6, 1e9);
    WorkloadSpec spec{"rand", {}, 0};
    for (std::size_t i = 0; i < epochs; ++i) spec.epochs.push_back({w(rng), u(rng), u(rng), u(rng)});
    return spec;
}

} // namespace

// Values below were computed by hand from the documented model with default calibration:
// ipc_L = 1.0 (1 - beta/2)(1 - mu/2), ipc_B = 2.0 (1/2 + beta/2)(1 - mu/2),
// contention = 1 + 0.05 mu (n - 1)^2, serial phase on the fastest single core,
// E = sum kappa f^3 busy + (static per active core + uncore) * time.
TEST(StepModel, SpreadsheetOracleTwoTwo) {
    const auto r = step_model(DrmDecision{2, 2, 8, 6}, EpochSpec{1e8, 0.8, 0.2, 0.6});
    expect_rel(r.time, 0.036316872427983538);
    expect_rel(r.energy, 0.041945325102880654);
    expect_rel(r.power, 1.1549817563739375);
    expect_rel(r.counters.cycles, 94629629.629629612);
    expect_rel(r.counters.little_utilization_sum, 1.2351274787535411);
    expect_rel(r.counters.big_utilization[0] + r.counters.big_utilization[1], 1.6175637393767703);
    EXPECT_EQ(r.counters.big_utilization[2], 0.0);
    EXPECT_EQ(r.counters.instructions, 1e8);
    expect_rel(r.counters.l2_misses, 1e8 * (0.001 + 0.03 * 0.2));
    expect_rel(r.counters.branch_misses, 1e8 * (0.002 + 0.006 * 0.8));
    expect_rel(r.counters.data_memory_accesses, 1e8 * (0.2 + 0.3 * 0.2));
    expect_rel(r.counters.external_memory_requests, 1e8 * (0.0005 + 0.015 * 0.2));
    expect_rel(r.counters.power, r.power);
    for (double v : r.state.features) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Simulate, FullThrottleThreeEpochSpreadsheet) {
    const WorkloadSpec w{"fixture", {{2e8, 0.9, 0.1, 0.8}, {5e7, 0.3, 0.7, 0.2}, {4e8, 0.6, 0.4, 0.5}}, 0};
    const auto r = simulate(fixed({4, 4, 18, 12}), std::vector<WorkloadSpec>{w});
    expect_rel(r.exec_time, 0.14917917959440824);
    expect_rel(r.energy, 0.82052661620688849);
    expect_rel(r.ppw, 792174180.77771199);
    const auto v = objective_vector(r, std::vector<ObjectiveId>{ObjectiveId::Ppw, ObjectiveId::Time});
    expect_rel(v[0], -0.79217418077771199);
}

TEST(StepModel, DoublingFrequencyHalvesParallelTime) {
    const EpochSpec e{3e8, 1.0, 0.0, 0.4};
    const auto a = step_model({3, 2, 2, 2}, e);  // 400 MHz both clusters
    const auto b = step_model({3, 2, 6, 6}, e);  // 800 MHz both clusters
    expect_rel(b.time, a.time / 2.0, 1e-14);
}

TEST(StepModel, GatedBigClusterContributesNothing) {
    const EpochSpec e{1e8, 0.7, 0.3, 0.9};
    const auto low = step_model({0, 3, 0, 5}, e);
    const auto high = step_model({0, 3, 18, 5}, e);
    EXPECT_EQ(low.time, high.time);
    EXPECT_EQ(low.energy, high.energy);
    for (double u : low.counters.big_utilization) EXPECT_EQ(u, 0.0);
}

TEST(StepModel, SerialWorkIgnoresCoreCounts) {
    const EpochSpec e{2e8, 0.0, 0.3, 1.0};
    const double t = step_model({1, 1, 10, 8}, e).time;
    for (int ab = 1; ab <= 4; ++ab)
        for (int al = 1; al <= 4; ++al) EXPECT_DOUBLE_EQ(step_model({ab, al, 10, 8}, e).time, t);
    double best = 1e300;
    DrmDecision arg;
    for (const auto& d : policy::all_decisions()) {
        const double ti = step_model(d, e).time;
        if (ti < best) {
            best = ti;
            arg = d;
        }
    }
    EXPECT_EQ(arg.f_big, 18);
}

TEST(StepModel, FrequencyMonotonicityWhenFullyParallel) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const EpochSpec e{1e8, 1.0, u(rng), u(rng)};
        const int ab = 1 + trial % 4, al = 1 + (trial / 4) % 4;
        for (int fb = 0; fb + 1 < 19; ++fb) {
            const auto a = step_model({ab, al, fb, 6}, e), b = step_model({ab, al, fb + 1, 6}, e);
            EXPECT_LT(b.time, a.time);
            EXPECT_GT(b.power, a.power);
        }
        for (int fl = 0; fl + 1 < 13; ++fl) {
            const auto a = step_model({ab, al, 9, fl}, e), b = step_model({ab, al, 9, fl + 1}, e);
            EXPECT_LT(b.time, a.time);
            EXPECT_GT(b.power, a.power);
        }
    }
}

TEST(StepModel, InvalidDecisionThrows) {
    EXPECT_THROW(step_model({0, 0, 0, 0}, EpochSpec{}), InputError);
}

TEST(Simulate, EnergyAndPpwIdentitiesOverRandomPolicies) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 30; ++trial) {
        const auto p = random_policy(rng);
        const std::vector<WorkloadSpec> apps{random_workload(rng, 7), random_workload(rng, 3)};
        const auto r = simulate(policy_controller(p), apps, {}, true);
        double energy = 0.0, work = 0.0;
        for (const auto& t : r.trace) energy += t.power * t.time;
        for (const auto& a : apps)
            for (const auto& e : a.epochs) work += e.work;
        EXPECT_GT(r.exec_time, 0.0);
        EXPECT_GT(r.energy, 0.0);
        expect_rel(r.energy, energy);
        expect_rel(r.ppw, work / r.energy);
        EXPECT_EQ(r.trace.size(), 10u);
    }
}

TEST(Simulate, EpochFeedbackUsesPreviousCounters) {
    std::mt19937_64 rng(5);
    const auto w = random_workload(rng, 5);
    std::vector<SystemState> seen;
    const DrmDecision d{2, 3, 7, 4};
    const Controller c{{}, [&](const SystemState& s) {
                           seen.push_back(s);
                           return d;
                       }};
    const auto r = simulate(c, std::vector<WorkloadSpec>{w, w}, {}, true);
    ASSERT_EQ(seen.size(), 10u);
    EXPECT_EQ(seen[0].features, boot_state().features);
    EXPECT_EQ(seen[5].features, boot_state().features);
    for (std::size_t e = 1; e < 5; ++e) EXPECT_EQ(seen[e].features, r.trace[e - 1].state.features);
}

TEST(Evaluate, DeterministicAndBlindToUnusedWeights) {
    std::mt19937_64 rng(6);
    const auto suite = default_suite();
    auto p = random_policy(rng);
    const auto a = evaluate(p, suite, kTimeEnergy);
    EXPECT_EQ(a, evaluate(p, suite, kTimeEnergy));

    // theta[0] is a first-layer weight of the a_big head; every later layer is zero, so it is unused
    policy::PolicyParams q{{}, std::vector<float>(1073, 0.0f)};
    auto r = q;
    r.theta[0] = 3.0f;
    EXPECT_EQ(evaluate(q, suite, kTimeEnergy), evaluate(r, suite, kTimeEnergy));
}

TEST(Evaluate, InputErrors) {
    const policy::PolicyParams p{{}, std::vector<float>(1073, 0.0f)};
    EXPECT_THROW(evaluate(p, std::vector<WorkloadSpec>{}, kTimeEnergy), InputError);
    EXPECT_THROW(evaluate(p, default_suite(), std::vector<ObjectiveId>{ObjectiveId::Time}), InputError);
    EXPECT_THROW(objective_from_string("latency"), InputError);
    EXPECT_THROW(WorkloadSpec{}.validate(), InputError);
    EXPECT_THROW((EpochSpec{1e5, 0.5, 0.5, 0.5}).validate(), InputError);
    EXPECT_THROW((EpochSpec{1e8, 1.5, 0.5, 0.5}).validate(), InputError);
}

TEST(Suite, NoDecisionMinimizesTimeAndEnergyTogether) {
    const auto suite = default_suite();
    double best_t = 1e300, best_e = 1e300;
    DrmDecision arg_t, arg_e;
    for (const auto& d : policy::all_decisions()) {
        const auto r = simulate(fixed(d), suite);
        if (r.exec_time < best_t) {
            best_t = r.exec_time;
            arg_t = d;
        }
        if (r.energy < best_e) {
            best_e = r.energy;
            arg_e = d;
        }
    }
    EXPECT_FALSE(arg_t == arg_e);
    const auto at_t = simulate(fixed(arg_t), suite), at_e = simulate(fixed(arg_e), suite);
    EXPECT_GT(at_t.energy, best_e);
    EXPECT_GT(at_e.exec_time, best_t);
}

TEST(Suite, TwelveNamedWorkloadsAndDesignatedSubset) {
    const auto suite = default_suite();
    EXPECT_EQ(suite.size(), 12u);
    for (const auto& w : suite) EXPECT_NO_THROW(w.validate());
    for (const auto& name : designated_workloads()) EXPECT_EQ(find_workload(suite, name).name, name);
    EXPECT_THROW(find_workload(suite, "nope"), InputError);
    EXPECT_EQ(default_suite()[3].epochs[2].work, suite[3].epochs[2].work);
}

TEST(WorkloadFiles, JsonRoundTripAndShippedFixturesMatchSuite) {
    for (const auto& w : default_suite()) {
        const auto back = workload_from_json(to_json(w));
        EXPECT_EQ(to_json(back), to_json(w));
        const auto path = std::filesystem::path(PARMIS_SOURCE_DIR) / "data" / "workloads" / (w.name + ".json");
        ASSERT_TRUE(std::filesystem::exists(path)) << path;
        EXPECT_EQ(to_json(load_workload(path.string())), to_json(w)) << w.name;
    }
}

TEST(WorkloadFiles, UnknownKeysAndBadValuesAreRejected) {
    auto j = to_json(default_suite()[0]);
    j["epochs"][0]["speed"] = 1.0;
    EXPECT_THROW(workload_from_json(j), InputError);
    auto k = to_json(default_suite()[0]);
    k["epochs"][0]["parallel_fraction"] = 2.0;
    EXPECT_THROW(workload_from_json(k), InputError);
    EXPECT_THROW(load_workload("/nonexistent.json"), InputError);
}
