#pragma once

// Parametric DRM policy: four small MLPs (one per control knob) mapping the
// normalized counter state to a (a_big, a_little, f_big, f_little) decision.
// The whole policy is a flat float vector so optimizers can treat it as a point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "parmis/errors.hpp"

namespace parmis::policy {

inline constexpr std::size_t kNumFeatures = 12;

/// Feature order of SystemState::features.
enum Feature : std::size_t {
    kInstructions = 0,
    kCycles,
    kBranchMisses,
    kL2Misses,
    kDataMemoryAccesses,
    kExternalMemoryRequests,
    kLittleUtilizationSum,
    kBigUtilization0,
    kBigUtilization1,
    kBigUtilization2,
    kBigUtilization3,
    kChipPower,
};

/// Normalized counter snapshot; every entry in [0, 1].
struct SystemState {
    std::array<double, kNumFeatures> features{};
};

inline constexpr int kMaxBigCores = 4;
inline constexpr int kMaxLittleCores = 4;
inline constexpr int kBigFrequencySteps = 19;    // 200..2000 MHz
inline constexpr int kLittleFrequencySteps = 13; // 200..1400 MHz
inline constexpr double kMinFrequencyMhz = 200.0;
inline constexpr double kFrequencyStepMhz = 100.0;

struct DrmDecision {
    int a_big = 0;      ///< active Big cores, 0..4
    int a_little = 1;   ///< active Little cores, 1..4
    int f_big = 0;      ///< Big frequency index, 0..18
    int f_little = 0;   ///< Little frequency index, 0..12

    double f_big_mhz() const { return kMinFrequencyMhz + kFrequencyStepMhz * f_big; }
    double f_little_mhz() const { return kMinFrequencyMhz + kFrequencyStepMhz * f_little; }

    bool valid() const {
        return a_big >= 0 && a_big <= kMaxBigCores && a_little >= 1 && a_little <= kMaxLittleCores && f_big >= 0 &&
               f_big < kBigFrequencySteps && f_little >= 0 && f_little < kLittleFrequencySteps;
    }

    friend bool operator==(const DrmDecision&, const DrmDecision&) = default;
};

/// Every decision the platform accepts (5 x 4 x 19 x 13 = 4940).
inline std::vector<DrmDecision> all_decisions() {
    std::vector<DrmDecision> out;
    out.reserve(4940);
    for (int ab = 0; ab <= kMaxBigCores; ++ab)
        for (int al = 1; al <= kMaxLittleCores; ++al)
            for (int fb = 0; fb < kBigFrequencySteps; ++fb)
                for (int fl = 0; fl < kLittleFrequencySteps; ++fl) out.push_back({ab, al, fb, fl});
    return out;
}

enum Head : std::size_t { kHeadBigCores = 0, kHeadLittleCores, kHeadBigFrequency, kHeadLittleFrequency };
inline constexpr std::array<const char*, 4> kHeadNames{"a_big", "a_little", "f_big", "f_little"};

struct PolicyArchitecture {
    std::size_t input_dim = kNumFeatures;
    std::vector<std::size_t> hidden{8, 8};
    std::vector<std::size_t> heads{5, 4, 19, 13};

    friend bool operator==(const PolicyArchitecture&, const PolicyArchitecture&) = default;

    /// Layer sizes of one head: input, hidden..., output.
    std::vector<std::size_t> layer_sizes(std::size_t head) const {
        std::vector<std::size_t> s{input_dim};
        s.insert(s.end(), hidden.begin(), hidden.end());
        s.push_back(heads[head]);
        return s;
    }

    std::size_t head_param_count(std::size_t head) const {
        const auto s = layer_sizes(head);
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < s.size(); ++l) n += (s[l] + 1) * s[l + 1];
        return n;
    }
};

/// Sum over every layer of every head of (in + 1) * out.
inline std::size_t param_count(const PolicyArchitecture& arch) {
    std::size_t n = 0;
    for (std::size_t h = 0; h < arch.heads.size(); ++h) n += arch.head_param_count(h);
    return n;
}

/// The default architecture must map onto DrmDecision; custom ones may not.
inline void validate_for_decisions(const PolicyArchitecture& arch) {
    if (arch.input_dim != kNumFeatures) throw InputError("policy: input_dim must be 12 to consume SystemState");
    const std::vector<std::size_t> expected{5, 4, 19, 13};
    if (arch.heads != expected) throw InputError("policy: head sizes must be 5,4,19,13 to produce a DrmDecision");
    for (auto h : arch.hidden)
        if (h == 0) throw InputError("policy: hidden layers must be non-empty");
}

struct PolicyParams {
    PolicyArchitecture arch;
    std::vector<float> theta;
};

struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<float> weights; ///< out x in, row-major
    std::vector<float> bias;
};

using HeadWeights = std::vector<Layer>;

/// Flat vector -> per-head layers (layout: per head, layer-major, weights then biases).
inline std::vector<HeadWeights> decode(const PolicyArchitecture& arch, std::span<const float> theta) {
    const auto d = param_count(arch);
    if (theta.size() != d) {
        throw InputError("policy decode: expected " + std::to_string(d) + " parameters, got " +
                         std::to_string(theta.size()));
    }
    std::vector<HeadWeights> heads(arch.heads.size());
    std::size_t pos = 0;
    for (std::size_t h = 0; h < arch.heads.size(); ++h) {
        const auto s = arch.layer_sizes(h);
        for (std::size_t l = 0; l + 1 < s.size(); ++l) {
            Layer layer{s[l], s[l + 1], {}, {}};
            layer.weights.assign(theta.begin() + static_cast<std::ptrdiff_t>(pos),
                                 theta.begin() + static_cast<std::ptrdiff_t>(pos + layer.in * layer.out));
            pos += layer.in * layer.out;
            layer.bias.assign(theta.begin() + static_cast<std::ptrdiff_t>(pos),
                              theta.begin() + static_cast<std::ptrdiff_t>(pos + layer.out));
            pos += layer.out;
            heads[h].push_back(std::move(layer));
        }
    }
    return heads;
}

inline std::vector<float> encode(const PolicyArchitecture& arch, const std::vector<HeadWeights>& heads) {
    if (heads.size() != arch.heads.size()) throw InputError("policy encode: wrong number of heads");
    std::vector<float> theta;
    theta.reserve(param_count(arch));
    for (std::size_t h = 0; h < heads.size(); ++h) {
        const auto s = arch.layer_sizes(h);
        if (heads[h].size() + 1 != s.size()) throw InputError("policy encode: wrong number of layers");
        for (std::size_t l = 0; l < heads[h].size(); ++l) {
            const auto& layer = heads[h][l];
            if (layer.in != s[l] || layer.out != s[l + 1] || layer.weights.size() != layer.in * layer.out ||
                layer.bias.size() != layer.out) {
                throw InputError("policy encode: layer shape does not match architecture");
            }
            theta.insert(theta.end(), layer.weights.begin(), layer.weights.end());
            theta.insert(theta.end(), layer.bias.begin(), layer.bias.end());
        }
    }
    return theta;
}

/// Greedy action of every head (argmax of softmax == argmax of logits; ties -> lowest index).
inline std::vector<int> head_actions(const PolicyArchitecture& arch, std::span<const float> theta,
                                       std::span<const double> input) {
    if (theta.size() != param_count(arch)) {
        throw InputError("policy: expected " + std::to_string(param_count(arch)) + " parameters, got " +
                         std::to_string(theta.size()));
    }
    if (input.size() != arch.input_dim) throw InputError("policy: state has wrong length");
    std::vector<int> actions(arch.heads.size());
    std::vector<double> cur, next;
    std::size_t pos = 0;
    for (std::size_t h = 0; h < arch.heads.size(); ++h) {
        const auto s = arch.layer_sizes(h);
        cur.assign(input.begin(), input.end());
        for (std::size_t l = 0; l + 1 < s.size(); ++l) {
            const std::size_t in = s[l], out = s[l + 1];
            const float* w = theta.data() + pos;
            const float* b = w + in * out;
            next.assign(out, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += static_cast<double>(w[o * in + i]) * cur[i];
                const bool hidden_layer = l + 2 < s.size();
                next[o] = hidden_layer ? std::max(acc, 0.0) : acc;
            }
            pos += in * out + out;
            cur.swap(next);
        }
        int best = 0;
        for (std::size_t o = 0; o < cur.size(); ++o) {
            if (std::isnan(cur[o])) {
                throw InputError(std::string("policy: NaN in forward pass of head ") +
                                 (h < kHeadNames.size() ? kHeadNames[h] : "?"));
            }
            if (cur[o] > cur[static_cast<std::size_t>(best)]) best = static_cast<int>(o);
        }
        actions[h] = best;
    }
    return actions;
}

inline DrmDecision decide(const PolicyParams& params, const SystemState& state) {
    if (params.arch.heads.size() != 4) throw InputError("policy: decide needs exactly 4 heads");
    const auto a = head_actions(params.arch, params.theta, state.features);
    DrmDecision d;
    d.a_big = a[kHeadBigCores];
    d.a_little = a[kHeadLittleCores] + 1;
    d.f_big = a[kHeadBigFrequency];
    d.f_little = a[kHeadLittleFrequency];
    return d;
}

/// Optimizer point (double) -> stored policy (float32).
inline PolicyParams from_theta(const PolicyArchitecture& arch, std::span<const double> theta) {
    if (theta.size() != param_count(arch)) {
        throw InputError("policy: expected " + std::to_string(param_count(arch)) + " parameters, got " +
                         std::to_string(theta.size()));
    }
    PolicyParams p{arch, std::vector<float>(theta.size())};
    std::transform(theta.begin(), theta.end(), p.theta.begin(), [](double v) { return static_cast<float>(v); });
    return p;
}

// ---- policy file -------------------------------------------------------------
// magic "PRMSPOL\0" | u32 version | u32 input_dim | u32 n_hidden | u32 hidden[n_hidden]
// | u32 n_heads | u32 heads[n_heads] | u32 d | f32 theta[d]; all little-endian.

inline constexpr char kPolicyMagic[8] = {'P', 'R', 'M', 'S', 'P', 'O', 'L', '\0'};
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw InputError("policy file: truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

} // namespace detail

inline std::string serialize(const PolicyParams& p) {
    if (p.theta.size() != param_count(p.arch)) throw InputError("policy file: parameter count mismatch");
    std::string out(kPolicyMagic, kPolicyMagic + 8);
    detail::put_u32(out, kPolicyFormatVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(p.arch.input_dim));
    detail::put_u32(out, static_cast<std::uint32_t>(p.arch.hidden.size()));
    for (auto h : p.arch.hidden) detail::put_u32(out, static_cast<std::uint32_t>(h));
    detail::put_u32(out, static_cast<std::uint32_t>(p.arch.heads.size()));
    for (auto h : p.arch.heads) detail::put_u32(out, static_cast<std::uint32_t>(h));
    detail::put_u32(out, static_cast<std::uint32_t>(p.theta.size()));
    for (float f : p.theta) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof bits);
        detail::put_u32(out, bits);
    }
    return out;
}

inline PolicyParams deserialize(const std::string& in) {
    if (in.size() < 8 || !std::equal(kPolicyMagic, kPolicyMagic + 8, in.begin())) {
        throw InputError("policy file: bad magic");
    }
    std::size_t pos = 8;
    const auto version = detail::get_u32(in, pos);
    if (version != kPolicyFormatVersion) throw InputError("policy file: unsupported version " + std::to_string(version));
    PolicyParams p;
    p.arch.input_dim = detail::get_u32(in, pos);
    const auto n_hidden = detail::get_u32(in, pos);
    if (n_hidden > 64) throw InputError("policy file: implausible hidden layer count");
    p.arch.hidden.clear();
    for (std::uint32_t i = 0; i < n_hidden; ++i) p.arch.hidden.push_back(detail::get_u32(in, pos));
    const auto n_heads = detail::get_u32(in, pos);
    if (n_heads == 0 || n_heads > 64) throw InputError("policy file: implausible head count");
    p.arch.heads.clear();
    for (std::uint32_t i = 0; i < n_heads; ++i) p.arch.heads.push_back(detail::get_u32(in, pos));
    const auto d = detail::get_u32(in, pos);
    if (d != param_count(p.arch)) {
        throw InputError("policy file: header says " + std::to_string(d) + " parameters, architecture needs " +
                         std::to_string(param_count(p.arch)));
    }
    if (in.size() != pos + 4ull * d) throw InputError("policy file: payload length does not match d");
    p.theta.resize(d);
    for (auto& f : p.theta) {
        const auto bits = detail::get_u32(in, pos);
        std::memcpy(&f, &bits, sizeof f);
    }
    return p;
}

inline void save_policy(const std::string& path, const PolicyParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open " + path + " for writing");
    const auto bytes = serialize(p);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline PolicyParams load_policy(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open policy file " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

} // namespace parmis::policy
