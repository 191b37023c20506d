#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "parmis/policy.hpp"

using namespace parmis;
using namespace parmis::policy;

namespace {

// Independent forward pass: explicit per-layer loops and a real softmax on every head.
std::vector<int> oracle_actions(const std::vector<float>& theta, const std::array<double, 12>& x) {
    const std::size_t hidden[2] = {8, 8};
    const std::size_t outs[4] = {5, 4, 19, 13};
    std::size_t pos = 0;
    std::vector<int> result;
    for (std::size_t out : outs) {
        std::vector<double> a(x.begin(), x.end());
        const std::size_t widths[4] = {12, hidden[0], hidden[1], out};
        for (int l = 0; l < 3; ++l) {
            const std::size_t in = widths[l], o = widths[l + 1];
            std::vector<double> z(o);
            for (std::size_t r = 0; r < o; ++r) {
                double s = theta[pos + in * o + r];
                for (std::size_t c = 0; c < in; ++c) s += double(theta[pos + r * in + c]) * a[c];
                z[r] = l < 2 ? (s > 0 ? s : 0) : s;
            }
            pos += in * o + o;
            a = z;
        }
        double mx = a[0], total = 0.0;
        for (double v : a) mx = std::max(mx, v);
        std::vector<double> p(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) total += p[i] = std::exp(a[i] - mx);
        int best = 0;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] / total > p[best] / total) best = static_cast<int>(i);
        result.push_back(best);
    }
    return result;
}

SystemState random_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SystemState s;
    for (auto& v : s.features) v = u(rng);
    return s;
}

PolicyParams random_params(std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
    PolicyParams p{PolicyArchitecture{}, std::vector<float>(param_count(PolicyArchitecture{}))};
    for (auto& v : p.theta) v = n(rng);
    return p;
}

// Offset of the output bias of `head` in the flat layout.
std::size_t output_bias_offset(const PolicyArchitecture& arch, std::size_t head) {
    std::size_t pos = 0;
    for (std::size_t h = 0; h < head; ++h) pos += arch.head_param_count(h);
    const auto s = arch.layer_sizes(head);
    for (std::size_t l = 0; l + 2 < s.size(); ++l) pos += (s[l] + 1) * s[l + 1];
    return pos + s[s.size() - 2] * s.back();
}

} // namespace

TEST(ParamCount, DefaultArchitectureIs1073) {
    const PolicyArchitecture arch;
    EXPECT_EQ(param_count(arch), 1073u);
    EXPECT_EQ(encode(arch, decode(arch, std::vector<float>(1073, 0.0f))).size(), 1073u);
}

TEST(ParamCount, LinearHeadAndWiderHidden) {
    PolicyArchitecture linear;
    linear.hidden = {};
    linear.heads = {1};
    EXPECT_EQ(param_count(linear), 13u);

    PolicyArchitecture wide;
    wide.hidden = {16, 16};
    std::size_t expected = 0;
    for (std::size_t out : {5, 4, 19, 13}) expected += 13 * 16 + 17 * 16 + 17 * out;
    EXPECT_EQ(param_count(wide), expected);
}

TEST(Codec, RoundTripsBitExactly) {
    const PolicyArchitecture arch;
    std::mt19937_64 rng(1);
    const auto zero = std::vector<float>(1073, 0.0f);
    EXPECT_EQ(encode(arch, decode(arch, zero)), zero);
    const auto p = random_params(rng, 3.0);
    const auto back = encode(arch, decode(arch, p.theta));
    ASSERT_EQ(back.size(), p.theta.size());
    EXPECT_EQ(std::memcmp(back.data(), p.theta.data(), back.size() * sizeof(float)), 0);
}

TEST(Codec, WrongLengthNamesExpectedCount) {
    try {
        decode(PolicyArchitecture{}, std::vector<float>(1072, 0.0f));
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("1073"), std::string::npos);
    }
}

TEST(Decide, ZeroThetaPicksLowestIndexEverywhere) {
    const PolicyParams p{PolicyArchitecture{}, std::vector<float>(1073, 0.0f)};
    std::mt19937_64 rng(2);
    const auto d = decide(p, random_state(rng));
    EXPECT_EQ(d, (DrmDecision{0, 1, 0, 0}));
    EXPECT_DOUBLE_EQ(d.f_big_mhz(), 200.0);
    EXPECT_DOUBLE_EQ(d.f_little_mhz(), 200.0);
}

TEST(Decide, LargeBiasSelectsThatAction) {
    const PolicyArchitecture arch;
    PolicyParams p{arch, std::vector<float>(1073, 0.0f)};
    p.theta[output_bias_offset(arch, kHeadBigCores) + 4] = 10.0f;
    p.theta[output_bias_offset(arch, kHeadLittleFrequency) + 12] = 10.0f;
    std::mt19937_64 rng(3);
    const auto d = decide(p, random_state(rng));
    EXPECT_EQ(d.a_big, 4);
    EXPECT_EQ(d.f_little, 12);
    EXPECT_DOUBLE_EQ(d.f_little_mhz(), 1400.0);
}

TEST(Decide, MatchesPlainLoopOracle) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 500; ++i) {
        const auto p = random_params(rng, 2.0);
        const auto s = random_state(rng);
        const auto a = oracle_actions(p.theta, s.features);
        const auto d = decide(p, s);
        EXPECT_EQ(d, (DrmDecision{a[0], a[1] + 1, a[2], a[3]}));
    }
}

TEST(Decide, AlwaysValidAndPure) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const auto p = random_params(rng, 5.0);
        const auto s = random_state(rng);
        const auto d = decide(p, s);
        EXPECT_TRUE(d.valid());
        EXPECT_EQ(d, decide(p, s));
    }
}

TEST(Decide, ShiftingOneHeadsLogitsKeepsDecision) {
    const PolicyArchitecture arch;
    std::mt19937_64 rng(6);
    for (int i = 0; i < 100; ++i) {
        auto p = random_params(rng);
        const auto s = random_state(rng);
        const auto before = decide(p, s);
        for (std::size_t h = 0; h < 4; ++h) {
            const auto off = output_bias_offset(arch, h);
            for (std::size_t o = 0; o < arch.heads[h]; ++o) p.theta[off + o] += 0.5f;
        }
        EXPECT_EQ(decide(p, s), before);
    }
}

TEST(Decide, NanNamesTheHead) {
    const PolicyArchitecture arch;
    PolicyParams p{arch, std::vector<float>(1073, 0.0f)};
    p.theta[output_bias_offset(arch, kHeadBigFrequency) + 3] = std::numeric_limits<float>::quiet_NaN();
    try {
        decide(p, SystemState{});
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("f_big"), std::string::npos);
    }
}

TEST(Decisions, SpaceHas4940ValidDistinctMembers) {
    const auto all = all_decisions();
    EXPECT_EQ(all.size(), 4940u);
    for (const auto& d : all) EXPECT_TRUE(d.valid());
    for (std::size_t i = 1; i < all.size(); ++i) EXPECT_FALSE(all[i] == all[i - 1]);
    EXPECT_FALSE((DrmDecision{0, 0, 0, 0}).valid());
    EXPECT_FALSE((DrmDecision{5, 1, 0, 0}).valid());
    EXPECT_FALSE((DrmDecision{0, 1, 19, 0}).valid());
}

TEST(PolicyFile, SaveLoadRoundTrip) {
    std::mt19937_64 rng(7);
    const auto p = random_params(rng);
    const auto path = std::filesystem::temp_directory_path() / "parmis_policy_roundtrip.pol";
    save_policy(path.string(), p);
    const auto q = load_policy(path.string());
    EXPECT_EQ(q.arch, p.arch);
    EXPECT_EQ(q.theta, p.theta);
    std::filesystem::remove(path);
}

TEST(PolicyFile, CorruptInputIsRejected) {
    std::mt19937_64 rng(8);
    const auto bytes = serialize(random_params(rng));
    EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 1)), InputError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize(bad_magic), InputError);
    EXPECT_THROW(deserialize(""), InputError);
    EXPECT_THROW(load_policy("/nonexistent/dir/p.pol"), InputError);
}

TEST(FromTheta, ConvertsToFloatAndChecksLength) {
    const PolicyArchitecture arch;
    std::vector<double> theta(1073, 0.1);
    const auto p = from_theta(arch, theta);
    EXPECT_EQ(p.theta[10], 0.1f);
    theta.pop_back();
    EXPECT_THROW(from_theta(arch, theta), InputError);
}
