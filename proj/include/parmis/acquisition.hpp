#pragma once

// Information gain about the optimal Pareto front, approximated with
// Pareto-front samples drawn from the GP posteriors, and its maximization
// over policy parameters.
//
// Internally every objective is in maximization form: an objective minimized
// in original units is negated (sign_flips[j] == true).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "parmis/errors.hpp"
#include "parmis/gp.hpp"
#include "parmis/nsga2.hpp"
#include "parmis/pareto.hpp"
#include "parmis/random.hpp"

namespace parmis::acquisition {

using gp::Matrix;
using gp::Vector;

/// Sampled Pareto front in maximization convention.
struct ParetoFrontSample {
    std::vector<ObjectiveVector> vectors;
    ObjectiveVector componentwise_max;

    std::size_t size() const { return vectors.size(); }

    static ParetoFrontSample from_vectors(std::vector<ObjectiveVector> vectors) {
        if (vectors.empty()) throw InputError("ParetoFrontSample: empty front");
        ParetoFrontSample s;
        s.componentwise_max = vectors.front();
        for (const auto& v : vectors) {
            if (v.size() != s.componentwise_max.size()) throw InputError("ParetoFrontSample: mixed lengths");
            for (std::size_t j = 0; j < v.size(); ++j) s.componentwise_max[j] = std::max(s.componentwise_max[j], v[j]);
        }
        s.vectors = std::move(vectors);
        return s;
    }
};

struct AcquisitionContext {
    std::vector<gp::GaussianProcess> models;
    std::vector<ParetoFrontSample> samples;
    std::vector<bool> sign_flips;
    Bounds bounds;
    /// Optional lower bound on every sample's y* (maximization form); empty means none.
    std::vector<double> y_star_floor;

    std::size_t num_objectives() const { return models.size(); }

    double y_star(const ParetoFrontSample& s, std::size_t j) const {
        return y_star_floor.empty() ? s.componentwise_max[j] : std::max(s.componentwise_max[j], y_star_floor[j]);
    }

    void validate() const {
        if (models.empty()) throw InputError("AcquisitionContext: no models");
        if (samples.empty()) throw InputError("AcquisitionContext: need at least one Pareto-front sample");
        if (sign_flips.size() != models.size()) throw InputError("AcquisitionContext: sign_flips length mismatch");
        for (const auto& s : samples) {
            if (s.componentwise_max.size() != models.size()) {
                throw InputError("AcquisitionContext: sample and model objective counts differ");
            }
        }
        for (const auto& m : models) {
            if (m.dim() != models.front().dim()) throw InputError("AcquisitionContext: models disagree on dimension");
        }
        if (bounds.dim() != 0 && bounds.dim() != models.front().dim()) {
            throw InputError("AcquisitionContext: bounds dimension mismatch");
        }
        if (!y_star_floor.empty() && y_star_floor.size() != models.size()) {
            throw InputError("AcquisitionContext: y_star_floor length mismatch");
        }
    }
};

/// Best observed value of every model in maximization form, raised by `sigmas` noise standard
/// deviations. The optimum of the true objective is never below what was measured, so y* is
/// floored here; otherwise a sampled front that falls short of the data makes known points look
/// maximally informative.
inline std::vector<double> observed_floor(const std::vector<gp::GaussianProcess>& models,
                                          const std::vector<bool>& sign_flips, double sigmas = 5.0) {
    if (sign_flips.size() != models.size()) throw InputError("observed_floor: sign_flips length mismatch");
    std::vector<double> out;
    for (std::size_t j = 0; j < models.size(); ++j) {
        const auto& m = models[j];
        if (m.size() == 0) throw InputError("observed_floor: model has no data");
        const double best = sign_flips[j] ? -m.targets().minCoeff() : m.targets().maxCoeff();
        out.push_back(best + sigmas * std::sqrt(m.noise_variance() + m.jitter()) * m.target_scale());
    }
    return out;
}

inline constexpr double kStdFloor = 1e-12;

/// Entropy of k independent Gaussians: k(1 + ln 2pi)/2 + sum ln sigma_i.
inline double gaussian_entropy(std::span<const double> stds) {
    double h = 0.0;
    for (double s : stds) {
        if (!(s > 0.0)) throw InputError("gaussian_entropy: standard deviations must be positive");
        h += 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)) + std::log(s);
    }
    return h;
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace detail {

// Mills ratio R(x) = (1 - Phi(x)) / phi(x) for x >= 6 by continued fraction (Lentz).
inline double mills_ratio(double x) {
    const double tiny = 1e-300;
    double f = x;
    double c = x;
    double d = 0.0;
    for (int n = 1; n < 500; ++n) {
        const double an = static_cast<double>(n);
        d = x + an * d;
        d = std::abs(d) < tiny ? tiny : d;
        c = x + an / c;
        c = std::abs(c) < tiny ? tiny : c;
        d = 1.0 / d;
        const double delta = c * d;
        f *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return 1.0 / f;
}

} // namespace detail

/// ln Phi(gamma), stable for very negative gamma.
inline double log_normal_cdf(double gamma) {
    if (gamma >= -6.0) return std::log(normal_cdf(gamma));
    return -0.5 * gamma * gamma - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(detail::mills_ratio(-gamma));
}

/// Entropy removed by truncating a Gaussian above at gamma standard deviations:
/// gamma phi(gamma) / (2 Phi(gamma)) - ln Phi(gamma). Non-negative; -> 0 as gamma -> +inf.
inline double truncated_entropy_term(double gamma) {
    if (std::isnan(gamma)) return 0.0;
    if (gamma == std::numeric_limits<double>::infinity()) return 0.0;
    if (gamma > 40.0) return 0.0;
    double ratio; // phi / Phi
    if (gamma >= -6.0) {
        ratio = normal_pdf(gamma) / normal_cdf(gamma);
    } else if (gamma > -1e150) {
        ratio = 1.0 / detail::mills_ratio(-gamma);
    } else {
        ratio = -gamma;
    }
    const double value = 0.5 * gamma * ratio - log_normal_cdf(std::max(gamma, -1e150));
    return std::max(value, 0.0);
}

/// gamma for one objective in maximization form; +inf when the point carries no uncertainty.
inline double gamma_of(double mean, double std, double y_star, bool flip) {
    if (!(std > kStdFloor)) return std::numeric_limits<double>::infinity();
    const double m = flip ? -mean : mean;
    return (y_star - m) / std;
}

/// Utility at every row of `thetas`.
inline Vector utility_batch(const Matrix& thetas, const AcquisitionContext& ctx) {
    Vector total = Vector::Zero(thetas.rows());
    Vector mean, std;
    for (std::size_t j = 0; j < ctx.models.size(); ++j) {
        ctx.models[j].predict_batch(thetas, mean, std);
        for (const auto& s : ctx.samples) {
            const double y_star = ctx.y_star(s, j);
            for (Eigen::Index i = 0; i < thetas.rows(); ++i) {
                total[i] += truncated_entropy_term(gamma_of(mean[i], std[i], y_star, ctx.sign_flips[j]));
            }
        }
    }
    return total / static_cast<double>(ctx.samples.size());
}

inline double utility(std::span<const double> theta, const AcquisitionContext& ctx) {
    ctx.validate();
    if (theta.size() != ctx.models.front().dim()) throw InputError("utility: theta has wrong dimension");
    Matrix q(1, static_cast<Eigen::Index>(theta.size()));
    for (std::size_t j = 0; j < theta.size(); ++j) q(0, static_cast<Eigen::Index>(j)) = theta[j];
    return utility_batch(q, ctx)[0];
}

struct FrontSamplingOptions {
    std::size_t rff_features = 500;
    nsga2::Config nsga;
};

/// One Pareto-front sample: an RFF posterior draw per model, then NSGA-II over the draws.
/// `initial` seeds the NSGA-II population (e.g. the evaluated parameters).
inline ParetoFrontSample sample_pareto_front(const std::vector<gp::GaussianProcess>& models,
                                             const std::vector<bool>& sign_flips,
                                             const FrontSamplingOptions& opts, std::uint64_t seed,
                                             const std::vector<std::vector<double>>& initial = {}) {
    if (models.empty()) throw InputError("sample_pareto_front: no models");
    if (sign_flips.size() != models.size()) throw InputError("sample_pareto_front: sign_flips length mismatch");
    std::vector<gp::RffSample> draws;
    draws.reserve(models.size());
    for (std::size_t j = 0; j < models.size(); ++j) {
        draws.push_back(gp::sample_posterior_function(models[j], opts.rff_features, mix_seed(seed, 1, j)));
    }
    // NSGA-II minimizes the negated maximization form.
    nsga2::BatchObjective objective = [&](const Matrix& xs) {
        Matrix out(xs.rows(), static_cast<Eigen::Index>(draws.size()));
        for (std::size_t j = 0; j < draws.size(); ++j) {
            const Vector v = draws[j].evaluate_batch(xs);
            out.col(static_cast<Eigen::Index>(j)) = sign_flips[j] ? v : Vector(-v);
        }
        return out;
    };
    nsga2::Config cfg = opts.nsga;
    cfg.seed = mix_seed(seed, 2);
    auto result = nsga2::optimize(objective, cfg, initial);
    std::vector<ObjectiveVector> vectors;
    for (const auto& ind : result.front) {
        ObjectiveVector z(ind.f.size());
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = -ind.f[j];
        vectors.push_back(std::move(z));
    }
    if (vectors.empty()) throw NumericalError("sample_pareto_front: NSGA-II returned no finite individuals");
    return ParetoFrontSample::from_vectors(std::move(vectors));
}

struct PoolOptions {
    double perturbation_scale = 0.1; ///< std of history perturbations, as a fraction of the box width
    std::size_t polish_steps = 20;
    std::size_t polish_directions = 4; ///< random directions per step when d > 4 (each polled both ways)
    double polish_initial_step = 0.05; ///< fraction of the box width
};

struct Selection {
    std::vector<double> theta;
    double score = 0.0;
    std::size_t candidate_index = 0; ///< index in the pool; == pool size when the polish point won
};

using BatchScore = std::function<Vector(const Matrix&)>;

/// Maximizes `score` over: `budget` uniform points, every row of `history` perturbed by Gaussian
/// noise, and a pattern-search polish from the best pool member. Ties go to the lowest index.
inline Selection maximize_pool(const BatchScore& score, const Matrix& history, const Bounds& bounds,
                               std::size_t budget, std::uint64_t seed, const PoolOptions& opts = {}) {
    if (budget < 1) throw InputError("select_next: candidate_budget must be >= 1");
    const std::size_t d = bounds.dim();
    const auto di = static_cast<Eigen::Index>(d);
    Rng uniform_rng(mix_seed(seed, 11));
    Rng perturb_rng(mix_seed(seed, 12));
    Rng polish_rng(mix_seed(seed, 13));
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto n_hist = history.rows();
    Matrix pool(static_cast<Eigen::Index>(budget) + n_hist, di);
    for (std::size_t i = 0; i < budget; ++i) {
        const auto x = uniform_point(bounds, uniform_rng);
        for (std::size_t j = 0; j < d; ++j) pool(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
    }
    for (Eigen::Index h = 0; h < n_hist; ++h) {
        const auto row = static_cast<Eigen::Index>(budget) + h;
        for (std::size_t j = 0; j < d; ++j) {
            const double width = bounds.hi[j] - bounds.lo[j];
            const double v = history(h, static_cast<Eigen::Index>(j)) + opts.perturbation_scale * width * normal(perturb_rng);
            pool(row, static_cast<Eigen::Index>(j)) = std::clamp(v, bounds.lo[j], bounds.hi[j]);
        }
    }

    auto safe = [](double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; };
    const Vector scores = score(pool);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i)
        if (safe(scores[i]) > safe(scores[best])) best = i;

    Selection sel;
    sel.candidate_index = static_cast<std::size_t>(best);
    sel.score = safe(scores[best]);
    Vector x = pool.row(best).transpose();

    // Pattern-search polish.
    Vector width(di);
    for (std::size_t j = 0; j < d; ++j) width[static_cast<Eigen::Index>(j)] = bounds.hi[j] - bounds.lo[j];
    double step = opts.polish_initial_step;
    double fx = sel.score;
    bool moved = false;
    for (std::size_t it = 0; it < opts.polish_steps; ++it) {
        std::vector<Vector> dirs;
        if (d <= 4) {
            for (Eigen::Index j = 0; j < di; ++j) dirs.push_back(Vector::Unit(di, j));
        } else {
            for (std::size_t m = 0; m < opts.polish_directions; ++m) {
                Vector g(di);
                for (Eigen::Index j = 0; j < di; ++j) g[j] = normal(polish_rng);
                dirs.push_back(g);
            }
        }
        Matrix polls(static_cast<Eigen::Index>(2 * dirs.size()), di);
        for (std::size_t m = 0; m < dirs.size(); ++m) {
            for (int sgn = 0; sgn < 2; ++sgn) {
                Vector y = x + (sgn == 0 ? 1.0 : -1.0) * step * width.cwiseProduct(dirs[m]);
                for (Eigen::Index j = 0; j < di; ++j)
                    y[j] = std::clamp(y[j], bounds.lo[static_cast<std::size_t>(j)], bounds.hi[static_cast<std::size_t>(j)]);
                polls.row(static_cast<Eigen::Index>(2 * m + static_cast<std::size_t>(sgn))) = y.transpose();
            }
        }
        const Vector ps = score(polls);
        Eigen::Index pb = -1;
        double pv = fx;
        for (Eigen::Index i = 0; i < ps.size(); ++i) {
            if (safe(ps[i]) > pv) {
                pv = safe(ps[i]);
                pb = i;
            }
        }
        if (pb >= 0) {
            x = polls.row(pb).transpose();
            fx = pv;
            moved = true;
        } else {
            step *= 0.5;
        }
    }
    if (moved && fx > sel.score) {
        sel.score = fx;
        sel.candidate_index = static_cast<std::size_t>(pool.rows());
    }
    sel.theta.assign(x.data(), x.data() + x.size());
    return sel;
}

/// Next policy parameters: argmax of the utility (history = every model's training inputs).
inline Selection select_next(const AcquisitionContext& ctx, std::size_t candidate_budget, std::uint64_t seed,
                             const PoolOptions& opts = {}) {
    ctx.validate();
    if (ctx.bounds.dim() == 0) throw InputError("select_next: context has no bounds");
    BatchScore score = [&](const Matrix& xs) { return utility_batch(xs, ctx); };
    return maximize_pool(score, ctx.models.front().inputs(), ctx.bounds, candidate_budget, seed, opts);
}

} // namespace parmis::acquisition
