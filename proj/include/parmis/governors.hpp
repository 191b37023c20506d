#pragma once

// Fixed frequency governors used as reference points. All of them read the
// previous epoch's utilization counters from the normalized state.

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "parmis/errors.hpp"
#include "parmis/policy.hpp"
#include "parmis/socsim.hpp"

namespace parmis::governors {

using policy::DrmDecision;
using policy::SystemState;
using socsim::Controller;

inline constexpr double kUpThreshold = 0.8;
inline constexpr double kDownThreshold = 0.2;

inline double big_utilization(const SystemState& s) {
    using namespace policy;
    const auto& f = s.features;
    return std::max({f[kBigUtilization0], f[kBigUtilization1], f[kBigUtilization2], f[kBigUtilization3]});
}

inline double little_utilization(const SystemState& s) { return s.features[policy::kLittleUtilizationSum]; }

inline Controller performance() {
    return {[] {}, [](const SystemState&) {
                return DrmDecision{policy::kMaxBigCores, policy::kMaxLittleCores, policy::kBigFrequencySteps - 1,
                                   policy::kLittleFrequencySteps - 1};
            }};
}

inline Controller powersave() {
    return {[] {}, [](const SystemState&) { return DrmDecision{0, 1, 0, 0}; }};
}

namespace detail {

struct StepState {
    int f_big = 0;
    int f_little = 0;
    double prev_big = 0.0;
    double prev_little = 0.0;
};

inline int step_index(int idx, int max_idx, double util, double prev, bool jump_on_rise) {
    if (util > kUpThreshold) {
        if (jump_on_rise && prev <= kUpThreshold) return max_idx;
        return std::min(idx + 1, max_idx);
    }
    if (util < kDownThreshold) return std::max(idx - 1, 0);
    return idx;
}

inline Controller stepping(bool jump_on_rise) {
    auto st = std::make_shared<StepState>();
    return {[st] { *st = StepState{}; },
            [st, jump_on_rise](const SystemState& s) {
                const double ub = big_utilization(s);
                const double ul = little_utilization(s);
                st->f_big = step_index(st->f_big, policy::kBigFrequencySteps - 1, ub, st->prev_big, jump_on_rise);
                st->f_little =
                    step_index(st->f_little, policy::kLittleFrequencySteps - 1, ul, st->prev_little, jump_on_rise);
                st->prev_big = ub;
                st->prev_little = ul;
                return DrmDecision{policy::kMaxBigCores, policy::kMaxLittleCores, st->f_big, st->f_little};
            }};
}

} // namespace detail

/// All cores on; each cluster moves one frequency step up above 80% utilization, down below 20%.
inline Controller ondemand() { return detail::stepping(false); }

/// As ondemand, but a rising edge across the 80% threshold jumps straight to the maximum frequency.
inline Controller interactive() { return detail::stepping(true); }

inline std::vector<std::string> names() { return {"performance", "powersave", "ondemand", "interactive"}; }

inline bool is_governor(const std::string& name) {
    const auto n = names();
    return std::find(n.begin(), n.end(), name) != n.end();
}

inline Controller by_name(const std::string& name) {
    if (name == "performance") return performance();
    if (name == "powersave") return powersave();
    if (name == "ondemand") return ondemand();
    if (name == "interactive") return interactive();
    throw InputError("unknown governor '" + name + "'");
}

} // namespace parmis::governors
