#pragma once

// NSGA-II (Deb et al. 2002): fast non-dominated sorting, crowding distance,
// binary tournament, simulated binary crossover, polynomial mutation and
// elitist (mu + lambda) survival.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "parmis/errors.hpp"
#include "parmis/pareto.hpp"
#include "parmis/random.hpp"

namespace parmis::nsga2 {

struct Config {
    std::size_t population_size = 100;
    std::size_t generations = 100;
    double crossover_prob = 0.9;
    double crossover_eta = 15.0;
    double mutation_prob = -1.0; ///< negative means 1/d
    double mutation_eta = 20.0;
    Bounds bounds;
    std::uint64_t seed = 0;

    void validate() const {
        if (population_size < 4 || population_size % 2 != 0) {
            throw InputError("nsga2: population_size must be even and >= 4");
        }
        if (crossover_prob < 0.0 || crossover_prob > 1.0) throw InputError("nsga2: crossover_prob outside [0,1]");
        if (mutation_prob > 1.0) throw InputError("nsga2: mutation_prob outside [0,1]");
        if (!(crossover_eta > 0.0) || !(mutation_eta > 0.0)) throw InputError("nsga2: distribution indices must be > 0");
        if (bounds.dim() == 0 || bounds.lo.size() != bounds.hi.size()) throw InputError("nsga2: bounds are empty");
        for (std::size_t i = 0; i < bounds.dim(); ++i) {
            if (!(bounds.lo[i] < bounds.hi[i])) throw InputError("nsga2: bounds need lo < hi in every dimension");
        }
    }
};

/// Fronts of indices; front 0 is the non-dominated set. Ranks partition [0, n).
inline std::vector<std::vector<std::size_t>> non_dominated_sort(std::span<const ObjectiveVector> points) {
    if (points.empty()) throw InputError("non_dominated_sort: empty point set");
    const std::size_t n = points.size();
    std::vector<std::vector<std::size_t>> dominated_by_me(n);
    std::vector<std::size_t> domination_count(n, 0);
    std::vector<std::vector<std::size_t>> fronts(1);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = p + 1; q < n; ++q) {
            if (dominates(points[p], points[q])) {
                dominated_by_me[p].push_back(q);
                ++domination_count[q];
            } else if (dominates(points[q], points[p])) {
                dominated_by_me[q].push_back(p);
                ++domination_count[p];
            }
        }
    }
    for (std::size_t p = 0; p < n; ++p)
        if (domination_count[p] == 0) fronts[0].push_back(p);
    while (true) {
        std::vector<std::size_t> next;
        for (auto p : fronts.back()) {
            for (auto q : dominated_by_me[p]) {
                if (--domination_count[q] == 0) next.push_back(q);
            }
        }
        if (next.empty()) break;
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(next));
    }
    return fronts;
}

/// Crowding distance of each point within one front. Boundary points are +inf;
/// objectives with zero range contribute nothing.
inline std::vector<double> crowding_distance(std::span<const ObjectiveVector> front) {
    const std::size_t n = front.size();
    if (n == 0) throw InputError("crowding_distance: empty front");
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
        return dist;
    }
    const std::size_t k = front[0].size();
    std::vector<std::size_t> order(n);
    for (std::size_t m = 0; m < k; ++m) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return front[a][m] < front[b][m]; });
        const double lo = front[order.front()][m];
        const double hi = front[order.back()][m];
        dist[order.front()] = std::numeric_limits<double>::infinity();
        dist[order.back()] = std::numeric_limits<double>::infinity();
        const double range = hi - lo;
        if (!(range > 0.0) || !std::isfinite(range)) continue;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            dist[order[i]] += (front[order[i + 1]][m] - front[order[i - 1]][m]) / range;
        }
    }
    return dist;
}

struct Individual {
    std::vector<double> x;
    ObjectiveVector f;
};

struct Result {
    std::vector<Individual> front; ///< non-dominated archive over every evaluation, sorted by objectives
    std::vector<Individual> population;
    std::size_t evaluations = 0;
};

/// Evaluates a batch: rows of the matrix are decision vectors, result rows are objective vectors.
using BatchObjective = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

/// Called after each generation (0 = initial population) with the current population.
using GenerationObserver = std::function<void(std::size_t, const std::vector<Individual>&)>;

namespace detail {

inline void sbx(std::vector<double>& c1, std::vector<double>& c2, const Config& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double eta = cfg.crossover_eta;
    for (std::size_t i = 0; i < c1.size(); ++i) {
        if (u(rng) > 0.5) continue;
        const double x1 = std::min(c1[i], c2[i]);
        const double x2 = std::max(c1[i], c2[i]);
        if (x2 - x1 < 1e-14) continue;
        const double lo = cfg.bounds.lo[i], hi = cfg.bounds.hi[i];
        const double r = u(rng);
        auto spread = [&](double beta) {
            const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
            return r <= 1.0 / alpha ? std::pow(r * alpha, 1.0 / (eta + 1.0))
                                    : std::pow(1.0 / (2.0 - r * alpha), 1.0 / (eta + 1.0));
        };
        const double bq1 = spread(1.0 + 2.0 * (x1 - lo) / (x2 - x1));
        const double bq2 = spread(1.0 + 2.0 * (hi - x2) / (x2 - x1));
        double y1 = std::clamp(0.5 * ((x1 + x2) - bq1 * (x2 - x1)), lo, hi);
        double y2 = std::clamp(0.5 * ((x1 + x2) + bq2 * (x2 - x1)), lo, hi);
        if (u(rng) <= 0.5) std::swap(y1, y2);
        c1[i] = y1;
        c2[i] = y2;
    }
}

inline void polynomial_mutation(std::vector<double>& x, double prob, const Config& cfg, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double eta = cfg.mutation_eta;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (u(rng) > prob) continue;
        const double lo = cfg.bounds.lo[i], hi = cfg.bounds.hi[i];
        const double d1 = (x[i] - lo) / (hi - lo);
        const double d2 = (hi - x[i]) / (hi - lo);
        const double r = u(rng);
        const double pw = 1.0 / (eta + 1.0);
        double dq;
        if (r < 0.5) {
            const double v = 2.0 * r + (1.0 - 2.0 * r) * std::pow(1.0 - d1, eta + 1.0);
            dq = std::pow(v, pw) - 1.0;
        } else {
            const double v = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * std::pow(1.0 - d2, eta + 1.0);
            dq = 1.0 - std::pow(v, pw);
        }
        x[i] = std::clamp(x[i] + dq * (hi - lo), lo, hi);
    }
}

inline void evaluate(std::vector<Individual>& pop, std::size_t first, const BatchObjective& objective,
                     std::size_t& evaluations) {
    const std::size_t count = pop.size() - first;
    if (count == 0) return;
    const auto d = static_cast<Eigen::Index>(pop[first].x.size());
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(count), d);
    for (std::size_t i = 0; i < count; ++i)
        for (Eigen::Index j = 0; j < d; ++j) xs(static_cast<Eigen::Index>(i), j) = pop[first + i].x[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd fs = objective(xs);
    if (static_cast<std::size_t>(fs.rows()) != count) throw InputError("nsga2: objective returned wrong row count");
    evaluations += count;
    for (std::size_t i = 0; i < count; ++i) {
        auto& f = pop[first + i].f;
        f.resize(static_cast<std::size_t>(fs.cols()));
        bool finite = true;
        for (Eigen::Index m = 0; m < fs.cols(); ++m) {
            f[static_cast<std::size_t>(m)] = fs(static_cast<Eigen::Index>(i), m);
            finite = finite && std::isfinite(f[static_cast<std::size_t>(m)]);
        }
        // Quarantine: a non-finite individual is worse than everything else.
        if (!finite) std::fill(f.begin(), f.end(), std::numeric_limits<double>::infinity());
    }
}

struct Ranking {
    std::vector<std::size_t> rank;
    std::vector<double> crowding;
};

inline Ranking rank_population(const std::vector<Individual>& pop,
                               std::vector<std::vector<std::size_t>>* fronts_out = nullptr) {
    std::vector<ObjectiveVector> objs;
    objs.reserve(pop.size());
    for (const auto& ind : pop) objs.push_back(ind.f);
    auto fronts = non_dominated_sort(objs);
    Ranking r{std::vector<std::size_t>(pop.size()), std::vector<double>(pop.size())};
    for (std::size_t fi = 0; fi < fronts.size(); ++fi) {
        std::vector<ObjectiveVector> fp;
        for (auto i : fronts[fi]) fp.push_back(objs[i]);
        const auto cd = crowding_distance(fp);
        for (std::size_t j = 0; j < fronts[fi].size(); ++j) {
            r.rank[fronts[fi][j]] = fi;
            r.crowding[fronts[fi][j]] = cd[j];
        }
    }
    if (fronts_out) *fronts_out = std::move(fronts);
    return r;
}

/// Merges the finite members of pop[first..] into a non-dominated archive.
inline void update_archive(std::vector<Individual>& archive, const std::vector<Individual>& pop, std::size_t first) {
    std::vector<Individual> all = std::move(archive);
    for (std::size_t i = first; i < pop.size(); ++i) {
        if (std::isfinite(pop[i].f[0])) all.push_back(pop[i]);
    }
    archive.clear();
    if (all.empty()) return;
    std::vector<ObjectiveVector> objs;
    objs.reserve(all.size());
    for (const auto& ind : all) objs.push_back(ind.f);
    for (auto id : pareto_front(objs).member_ids) archive.push_back(std::move(all[id]));
}

} // namespace detail

/// Runs NSGA-II. `initial` (optional) seeds the first population; remaining slots are uniform in bounds.
inline Result optimize(const BatchObjective& objective, const Config& cfg,
                       const std::vector<std::vector<double>>& initial = {},
                       const GenerationObserver& observer = {}) {
    cfg.validate();
    const std::size_t d = cfg.bounds.dim();
    const std::size_t n = cfg.population_size;
    const double pm = cfg.mutation_prob < 0.0 ? 1.0 / static_cast<double>(d) : cfg.mutation_prob;
    Rng rng(cfg.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    std::vector<Individual> pop;
    pop.reserve(2 * n);
    for (const auto& x : initial) {
        if (pop.size() == n) break;
        if (x.size() != d) throw InputError("nsga2: initial individual has wrong dimension");
        Individual ind{x, {}};
        clamp_to(cfg.bounds, ind.x);
        pop.push_back(std::move(ind));
    }
    while (pop.size() < n) pop.push_back({uniform_point(cfg.bounds, rng), {}});

    Result result;
    detail::evaluate(pop, 0, objective, result.evaluations);
    if (!pop.empty() && pop[0].f.size() < 2) throw InputError("nsga2: need at least 2 objectives");
    detail::update_archive(result.front, pop, 0);
    auto ranking = detail::rank_population(pop);
    if (observer) observer(0, pop);

    auto better = [&](std::size_t a, std::size_t b) {
        if (ranking.rank[a] != ranking.rank[b]) return ranking.rank[a] < ranking.rank[b];
        return ranking.crowding[a] > ranking.crowding[b];
    };
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    auto tournament = [&] {
        const auto a = pick(rng);
        const auto b = pick(rng);
        return better(b, a) ? b : a;
    };

    for (std::size_t gen = 1; gen <= cfg.generations; ++gen) {
        pop.resize(n);
        while (pop.size() < 2 * n) {
            auto c1 = pop[tournament()].x;
            auto c2 = pop[tournament()].x;
            if (u(rng) <= cfg.crossover_prob) detail::sbx(c1, c2, cfg, rng);
            detail::polynomial_mutation(c1, pm, cfg, rng);
            detail::polynomial_mutation(c2, pm, cfg, rng);
            clamp_to(cfg.bounds, c1);
            clamp_to(cfg.bounds, c2);
            pop.push_back({std::move(c1), {}});
            pop.push_back({std::move(c2), {}});
        }
        detail::evaluate(pop, n, objective, result.evaluations);
        detail::update_archive(result.front, pop, n);

        std::vector<std::vector<std::size_t>> fronts;
        auto combined = detail::rank_population(pop, &fronts);
        std::vector<Individual> next;
        next.reserve(2 * n);
        for (const auto& front : fronts) {
            if (next.size() + front.size() <= n) {
                for (auto i : front) next.push_back(pop[i]);
                continue;
            }
            std::vector<std::size_t> order(front.begin(), front.end());
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return combined.crowding[a] > combined.crowding[b];
            });
            for (std::size_t j = 0; next.size() < n; ++j) next.push_back(pop[order[j]]);
            break;
        }
        pop = std::move(next);
        ranking = detail::rank_population(pop);
        if (observer) observer(gen, pop);
    }

    result.population = std::move(pop);
    return result;
}

/// Convenience overload: one scalar function per objective.
inline Result optimize(const std::vector<std::function<double(std::span<const double>)>>& objectives,
                       const Config& cfg, const std::vector<std::vector<double>>& initial = {},
                       const GenerationObserver& observer = {}) {
    if (objectives.size() < 2) throw InputError("nsga2: need at least 2 objectives");
    BatchObjective batch = [&](const Eigen::MatrixXd& xs) {
        Eigen::MatrixXd out(xs.rows(), static_cast<Eigen::Index>(objectives.size()));
        std::vector<double> x(static_cast<std::size_t>(xs.cols()));
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            for (Eigen::Index j = 0; j < xs.cols(); ++j) x[static_cast<std::size_t>(j)] = xs(i, j);
            for (std::size_t m = 0; m < objectives.size(); ++m) {
                double v;
                try {
                    v = objectives[m](x);
                } catch (...) {
                    v = std::numeric_limits<double>::quiet_NaN();
                }
                out(i, static_cast<Eigen::Index>(m)) = v;
            }
        }
        return out;
    };
    return optimize(batch, cfg, initial, observer);
}

} // namespace parmis::nsga2
