#pragma once

// Pareto dominance, front extraction and hypervolume (PHV).
// All objectives are minimized.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "parmis/errors.hpp"
#include "parmis/random.hpp"

namespace parmis {

using ObjectiveVector = std::vector<double>;

struct ParetoFront {
    std::vector<ObjectiveVector> points;
    std::vector<std::size_t> member_ids;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

inline std::string format_point(std::span<const double> p) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (i) os << ", ";
        os << p[i];
    }
    os << ')';
    return os.str();
}

/// a <= b componentwise with at least one strict inequality.
inline bool dominates(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InputError("dominates: objective vectors have different lengths (" +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

/// Non-dominated subset; duplicates collapse to the lowest id. Output sorted lexicographically.
inline ParetoFront pareto_front(std::span<const ObjectiveVector> points,
                                std::span<const std::size_t> ids = {}) {
    if (points.empty()) throw InputError("pareto_front: empty point set");
    if (!ids.empty() && ids.size() != points.size()) {
        throw InputError("pareto_front: ids and points differ in length");
    }
    const std::size_t n = points.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto id_of = [&](std::size_t i) { return ids.empty() ? i : ids[i]; };
    // Lexicographic order, ties by id, so the first duplicate is the kept one.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a] != points[b]) return points[a] < points[b];
        return id_of(a) < id_of(b);
    });

    ParetoFront front;
    for (std::size_t oi = 0; oi < n; ++oi) {
        const auto i = order[oi];
        if (oi > 0 && points[order[oi - 1]] == points[i]) continue;
        bool dominated = false;
        // Only lexicographically smaller points can dominate.
        for (std::size_t oj = 0; oj < oi && !dominated; ++oj) {
            dominated = dominates(points[order[oj]], points[i]);
        }
        if (!dominated) {
            front.points.push_back(points[i]);
            front.member_ids.push_back(id_of(i));
        }
    }
    return front;
}

namespace detail {

// Area dominated by 2-D points (all strictly below ref).
inline double hv2d(std::vector<std::pair<double, double>> pts, double rx, double ry) {
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    double best_y = ry;
    for (const auto& [x, y] : pts) {
        if (y < best_y) {
            area += (rx - x) * (best_y - y);
            best_y = y;
        }
    }
    return area;
}

inline double hv3d(std::span<const ObjectiveVector> pts, std::span<const double> ref) {
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pts[a][2] < pts[b][2]; });
    double volume = 0.0;
    std::vector<std::pair<double, double>> slice;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& p = pts[order[i]];
        slice.emplace_back(p[0], p[1]);
        const double z_next = (i + 1 < order.size()) ? pts[order[i + 1]][2] : ref[2];
        const double depth = z_next - p[2];
        if (depth > 0.0) volume += depth * hv2d(slice, ref[0], ref[1]);
    }
    return volume;
}

} // namespace detail

struct HypervolumeOptions {
    std::size_t monte_carlo_samples = 1'000'000; ///< used only for k >= 4
    std::uint64_t seed = 12345;
};

/// Hypervolume dominated by `points` and bounded by `reference`.
/// Every point must strictly dominate the reference componentwise.
inline double hypervolume(std::span<const ObjectiveVector> points, std::span<const double> reference,
                          const HypervolumeOptions& opts = {}) {
    const std::size_t k = reference.size();
    if (k < 2) throw InputError("hypervolume: need at least 2 objectives");
    for (const auto& p : points) {
        if (p.size() != k) throw InputError("hypervolume: point " + format_point(p) + " has wrong length");
        for (std::size_t j = 0; j < k; ++j) {
            if (!(p[j] < reference[j])) {
                throw InputError("hypervolume: point " + format_point(p) +
                                 " does not strictly dominate reference " + format_point(reference));
            }
        }
    }
    if (points.empty()) return 0.0;
    if (k == 2) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(points.size());
        for (const auto& p : points) pts.emplace_back(p[0], p[1]);
        return detail::hv2d(std::move(pts), reference[0], reference[1]);
    }
    if (k == 3) return detail::hv3d(points, reference);

    // k >= 4: Monte-Carlo over the bounding box [ideal, reference].
    std::vector<double> lo(k, std::numeric_limits<double>::infinity());
    for (const auto& p : points)
        for (std::size_t j = 0; j < k; ++j) lo[j] = std::min(lo[j], p[j]);
    double box = 1.0;
    for (std::size_t j = 0; j < k; ++j) box *= reference[j] - lo[j];
    Rng rng(opts.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(k);
    std::size_t hits = 0;
    for (std::size_t n = 0; n < opts.monte_carlo_samples; ++n) {
        for (std::size_t j = 0; j < k; ++j) s[j] = lo[j] + u(rng) * (reference[j] - lo[j]);
        for (const auto& p : points) {
            bool covers = true;
            for (std::size_t j = 0; j < k && covers; ++j) covers = p[j] <= s[j];
            if (covers) {
                ++hits;
                break;
            }
        }
    }
    return box * static_cast<double>(hits) / static_cast<double>(opts.monte_carlo_samples);
}

inline double hypervolume(const ParetoFront& front, std::span<const double> reference,
                          const HypervolumeOptions& opts = {}) {
    return hypervolume(std::span<const ObjectiveVector>(front.points), reference, opts);
}

/// Hypervolume of the points that strictly dominate `reference`; the rest are ignored.
inline double hypervolume_clipped(std::span<const ObjectiveVector> points, std::span<const double> reference,
                                  const HypervolumeOptions& opts = {}) {
    std::vector<ObjectiveVector> inside;
    for (const auto& p : points) {
        bool ok = p.size() == reference.size();
        for (std::size_t j = 0; ok && j < p.size(); ++j) ok = p[j] < reference[j];
        if (ok) inside.push_back(p);
    }
    return hypervolume(std::span<const ObjectiveVector>(inside), reference, opts);
}

/// Shared reference point: componentwise max over all sets pushed out by 10%
/// of its magnitude (1.1 x max for positive objectives; negated PPW stays dominated too).
inline ObjectiveVector reference_point(std::span<const std::vector<ObjectiveVector>> sets) {
    ObjectiveVector hi, lo;
    for (const auto& set : sets) {
        for (const auto& p : set) {
            if (hi.empty()) {
                hi = p;
                lo = p;
            }
            if (p.size() != hi.size()) throw InputError("reference_point: mixed objective counts");
            for (std::size_t j = 0; j < p.size(); ++j) {
                hi[j] = std::max(hi[j], p[j]);
                lo[j] = std::min(lo[j], p[j]);
            }
        }
    }
    if (hi.empty()) throw InputError("reference_point: no points");
    for (std::size_t j = 0; j < hi.size(); ++j) {
        double margin = 0.1 * std::abs(hi[j]);
        if (margin == 0.0) margin = hi[j] > lo[j] ? 0.1 * (hi[j] - lo[j]) : 0.1;
        hi[j] += margin;
    }
    return hi;
}

inline ObjectiveVector reference_point(const std::vector<ObjectiveVector>& points) {
    return reference_point(std::span<const std::vector<ObjectiveVector>>(&points, 1));
}

/// PHV of every method divided by the PHV of `base` (default "parmis").
inline std::map<std::string, double> normalized_phv(const std::map<std::string, ParetoFront>& fronts,
                                                    std::span<const double> reference,
                                                    const std::string& base = "parmis") {
    auto it = fronts.find(base);
    if (it == fronts.end()) throw InputError("normalized_phv: missing base entry '" + base + "'");
    const double base_hv = hypervolume(it->second, reference);
    if (!(base_hv > 0.0)) throw InputError("normalized_phv: base front '" + base + "' has zero hypervolume");
    std::map<std::string, double> out;
    for (const auto& [name, front] : fronts) {
        out[name] = name == base ? 1.0 : hypervolume(front, reference) / base_hv;
    }
    return out;
}

} // namespace parmis
