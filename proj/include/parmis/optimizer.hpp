#pragma once

// Policy-search strategies over a black-box evaluator: the information-gain
// loop, random search, scalarized single-objective BO and direct NSGA-II.
// Every strategy returns a RunRecord whose front is recomputable from its log.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "parmis/acquisition.hpp"
#include "parmis/errors.hpp"
#include "parmis/gp.hpp"
#include "parmis/governors.hpp"
#include "parmis/nsga2.hpp"
#include "parmis/pareto.hpp"
#include "parmis/policy.hpp"
#include "parmis/random.hpp"
#include "parmis/socsim.hpp"

namespace parmis::optimizer {

using gp::Matrix;
using gp::Vector;

/// Black-box objective: theta -> objective vector (minimization). May throw to signal failure.
using Evaluator = std::function<ObjectiveVector(std::span<const double>)>;

struct Evaluation {
    std::size_t id = 0;
    std::size_t iteration = 0; ///< 0 for initial samples
    std::vector<double> theta;
    ObjectiveVector objectives; ///< empty when failed
    bool failed = false;
    std::string error;
};

/// Append-only log of evaluated (theta, objectives) pairs.
class TrainingSet {
public:
    explicit TrainingSet(std::size_t dim = 0) : dim_(dim) {}

    const Evaluation& add(std::vector<double> theta, ObjectiveVector f, std::size_t iteration) {
        check(theta);
        entries_.push_back({entries_.size(), iteration, std::move(theta), std::move(f), false, {}});
        return entries_.back();
    }

    const Evaluation& add_failure(std::vector<double> theta, std::string error, std::size_t iteration) {
        check(theta);
        entries_.push_back({entries_.size(), iteration, std::move(theta), {}, true, std::move(error)});
        return entries_.back();
    }

    const std::vector<Evaluation>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t dim() const { return dim_; }

    std::size_t successful() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.failed ? 0 : 1;
        return n;
    }

    Matrix inputs() const {
        Matrix x(static_cast<Eigen::Index>(successful()), static_cast<Eigen::Index>(dim_));
        Eigen::Index r = 0;
        for (const auto& e : entries_) {
            if (e.failed) continue;
            for (std::size_t j = 0; j < dim_; ++j) x(r, static_cast<Eigen::Index>(j)) = e.theta[j];
            ++r;
        }
        return x;
    }

    std::vector<double> objective_column(std::size_t j) const {
        std::vector<double> out;
        for (const auto& e : entries_)
            if (!e.failed) out.push_back(e.objectives.at(j));
        return out;
    }

    std::vector<ObjectiveVector> objective_vectors() const {
        std::vector<ObjectiveVector> out;
        for (const auto& e : entries_)
            if (!e.failed) out.push_back(e.objectives);
        return out;
    }

    std::vector<std::size_t> successful_ids() const {
        std::vector<std::size_t> out;
        for (const auto& e : entries_)
            if (!e.failed) out.push_back(e.id);
        return out;
    }

private:
    void check(const std::vector<double>& theta) const {
        if (theta.size() != dim_) {
            throw InputError("TrainingSet: theta has dimension " + std::to_string(theta.size()) + ", expected " +
                             std::to_string(dim_));
        }
    }

    std::size_t dim_;
    std::vector<Evaluation> entries_;
};

struct IterationRecord {
    std::size_t iteration = 0;
    std::size_t eval_id = 0;
    bool failed = false;
    double phv = 0.0; ///< front over every successful evaluation so far, tracking reference
};

struct PhaseTimes {
    double fit = 0.0;
    double sample = 0.0;
    double select = 0.0;
    double evaluate = 0.0;
};

struct RunRecord {
    std::string strategy;
    std::uint64_t seed = 0;
    std::size_t dim = 0;
    TrainingSet log;
    std::vector<IterationRecord> iterations;
    ObjectiveVector tracking_reference;
    ParetoFront front; ///< member_ids are evaluation ids
    PhaseTimes seconds;
    bool converged = false;
    std::optional<std::size_t> converged_at;
};

/// Front over every successful evaluation, ids referring to the log.
inline ParetoFront front_of(const TrainingSet& log) {
    const auto pts = log.objective_vectors();
    const auto ids = log.successful_ids();
    if (pts.empty()) return {};
    return pareto_front(pts, ids);
}

/// PHV after each evaluation (failed evaluations repeat the previous value); points not
/// dominating `reference` contribute nothing.
inline std::vector<double> phv_curve(const TrainingSet& log, std::span<const double> reference) {
    std::vector<double> out;
    std::vector<ObjectiveVector> front;
    double current = 0.0;
    for (const auto& e : log.entries()) {
        if (!e.failed) {
            bool dominated = false;
            for (const auto& p : front)
                if (dominates(p, e.objectives) || p == e.objectives) dominated = true;
            if (!dominated) {
                std::vector<ObjectiveVector> next;
                for (auto& p : front)
                    if (!dominates(e.objectives, p)) next.push_back(std::move(p));
                next.push_back(e.objectives);
                front = std::move(next);
                current = hypervolume_clipped(front, reference);
            }
        }
        out.push_back(current);
    }
    return out;
}

struct ConvergenceOptions {
    bool enabled = false;
    std::size_t window = 50;
    double tolerance = 1e-4;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Evaluates theta, logging a failure on exceptions or non-finite values.
class Runner {
public:
    Runner(const Evaluator& eval, RunRecord& rec, std::size_t max_consecutive_failures)
        : eval_(eval), rec_(rec), max_failures_(max_consecutive_failures) {}

    const Evaluation& operator()(std::vector<double> theta, std::size_t iteration) {
        const auto t0 = Clock::now();
        std::string error;
        ObjectiveVector f;
        try {
            f = eval_(theta);
            for (double v : f)
                if (!std::isfinite(v)) error = "non-finite objective";
            if (f.size() < 2) error = "evaluator returned fewer than 2 objectives";
            if (!rec_.log.objective_vectors().empty() && f.size() != rec_.log.objective_vectors().front().size())
                error = "objective count changed";
        } catch (const std::exception& ex) {
            error = ex.what();
        }
        rec_.seconds.evaluate += seconds_since(t0);
        if (!error.empty()) {
            ++consecutive_;
            const auto& e = rec_.log.add_failure(std::move(theta), error, iteration);
            if (consecutive_ >= max_failures_) {
                throw RunError(std::to_string(consecutive_) + " consecutive evaluation failures; last: " + error);
            }
            return e;
        }
        consecutive_ = 0;
        return rec_.log.add(std::move(theta), std::move(f), iteration);
    }

private:
    const Evaluator& eval_;
    RunRecord& rec_;
    std::size_t max_failures_;
    std::size_t consecutive_ = 0;
};

inline void finish(RunRecord& rec) {
    rec.front = front_of(rec.log);
    if (rec.tracking_reference.empty()) {
        const auto pts = rec.log.objective_vectors();
        if (!pts.empty()) rec.tracking_reference = reference_point(pts);
    }
    if (rec.iterations.empty() && !rec.tracking_reference.empty()) {
        const auto curve = phv_curve(rec.log, rec.tracking_reference);
        for (const auto& e : rec.log.entries()) rec.iterations.push_back({e.iteration, e.id, e.failed, curve[e.id]});
    }
}

inline std::vector<std::vector<double>> uniform_thetas(const Bounds& b, std::size_t n, Rng& rng) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(uniform_point(b, rng));
    return out;
}

} // namespace detail

// ---- information-gain loop ------------------------------------------------------

struct ParmisConfig {
    std::size_t init_samples = 10;
    std::size_t max_iters = 290;
    std::size_t candidate_budget = 512;
    std::size_t front_samples = 1;        ///< S
    std::size_t rff_features = 500;
    std::size_t inner_population = 40;    ///< NSGA-II over the sampled functions
    std::size_t inner_generations = 30;
    std::size_t refit_every = 10;
    double noise_variance = 1e-6;         ///< standardized units
    std::size_t max_consecutive_failures = 10;
    ConvergenceOptions convergence;
    acquisition::PoolOptions pool;
    gp::HyperparameterOptions hyper;
    std::uint64_t seed = 0;

    void validate() const {
        if (init_samples < 2) throw InputError("parmis: init_samples must be >= 2");
        if (front_samples < 1) throw InputError("parmis: front_samples must be >= 1");
        if (candidate_budget < 1) throw InputError("parmis: candidate_budget must be >= 1");
        if (rff_features < 1) throw InputError("parmis: rff_features must be >= 1");
        if (refit_every < 1) throw InputError("parmis: refit_every must be >= 1");
    }
};

/// Objectives are minimized; inside the acquisition they are negated into maximization form.
inline RunRecord run_parmis(const Evaluator& eval, const Bounds& bounds, const ParmisConfig& cfg) {
    cfg.validate();
    RunRecord rec;
    rec.strategy = "parmis";
    rec.seed = cfg.seed;
    rec.dim = bounds.dim();
    rec.log = TrainingSet(bounds.dim());
    detail::Runner run(eval, rec, cfg.max_consecutive_failures);

    Rng init_rng(mix_seed(cfg.seed, 1));
    for (auto& theta : detail::uniform_thetas(bounds, cfg.init_samples, init_rng)) run(std::move(theta), 0);
    if (rec.log.successful() == 0) throw RunError("parmis: every initial evaluation failed");

    rec.tracking_reference = reference_point(rec.log.objective_vectors());
    rec.front = front_of(rec.log);
    double phv = hypervolume_clipped(rec.log.objective_vectors(), rec.tracking_reference);
    for (const auto& e : rec.log.entries()) rec.iterations.push_back({0, e.id, e.failed, phv});

    const std::size_t k = rec.log.objective_vectors().front().size();
    const double width = bounds.hi[0] - bounds.lo[0];
    std::vector<gp::KernelSpec> kernels(k, gp::default_kernel(bounds.dim(), width));
    const std::vector<bool> flips(k, true);

    acquisition::FrontSamplingOptions fopts;
    fopts.rff_features = cfg.rff_features;
    fopts.nsga.population_size = cfg.inner_population;
    fopts.nsga.generations = cfg.inner_generations;
    fopts.nsga.bounds = bounds;

    std::vector<double> history{phv};
    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        auto t0 = detail::Clock::now();
        const Matrix x = rec.log.inputs();
        std::vector<gp::GaussianProcess> models;
        for (std::size_t j = 0; j < k; ++j) {
            const auto y = rec.log.objective_column(j);
            if ((it - 1) % cfg.refit_every == 0 && y.size() >= 2) {
                kernels[j] = gp::fit_hyperparameters(x, y, kernels[j], cfg.noise_variance, cfg.hyper);
            }
            models.push_back(gp::fit(x, y, kernels[j], cfg.noise_variance));
        }
        rec.seconds.fit += detail::seconds_since(t0);

        t0 = detail::Clock::now();
        std::vector<std::vector<double>> seeds_for_nsga;
        for (const auto& id : rec.front.member_ids) seeds_for_nsga.push_back(rec.log.entries()[id].theta);
        acquisition::AcquisitionContext ctx{std::move(models), {}, flips, bounds, {}};
        ctx.y_star_floor = acquisition::observed_floor(ctx.models, flips);
        for (std::size_t s = 0; s < cfg.front_samples; ++s) {
            ctx.samples.push_back(acquisition::sample_pareto_front(ctx.models, flips, fopts,
                                                                   mix_seed(cfg.seed, 100 + s, it), seeds_for_nsga));
        }
        rec.seconds.sample += detail::seconds_since(t0);

        t0 = detail::Clock::now();
        auto sel = acquisition::select_next(ctx, cfg.candidate_budget, mix_seed(cfg.seed, 3, it), cfg.pool);
        rec.seconds.select += detail::seconds_since(t0);

        const auto& e = run(std::move(sel.theta), it);
        if (!e.failed) {
            rec.front = front_of(rec.log);
            phv = hypervolume_clipped(rec.front.points, rec.tracking_reference);
        }
        rec.iterations.push_back({it, e.id, e.failed, phv});
        history.push_back(phv);

        if (cfg.convergence.enabled && history.size() > cfg.convergence.window) {
            const double past = history[history.size() - 1 - cfg.convergence.window];
            const double rel = past > 0.0 ? (phv - past) / past : (phv > 0.0 ? 1.0 : 0.0);
            if (rel < cfg.convergence.tolerance) {
                rec.converged = true;
                rec.converged_at = it;
                break;
            }
        }
    }
    detail::finish(rec);
    return rec;
}

// ---- random search ------------------------------------------------------------------

inline RunRecord run_random_search(const Evaluator& eval, const Bounds& bounds, std::size_t budget,
                                   std::uint64_t seed, std::size_t max_consecutive_failures = 10) {
    if (budget < 1) throw InputError("random search: budget must be >= 1");
    RunRecord rec;
    rec.strategy = "random";
    rec.seed = seed;
    rec.dim = bounds.dim();
    rec.log = TrainingSet(bounds.dim());
    detail::Runner run(eval, rec, max_consecutive_failures);
    Rng rng(mix_seed(seed, 1));
    for (std::size_t i = 0; i < budget; ++i) run(uniform_point(bounds, rng), i);
    detail::finish(rec);
    return rec;
}

// ---- scalarized BO --------------------------------------------------------------------

/// lambda on the probability simplex.
struct ScalarizationWeights {
    std::vector<double> lambda;

    void validate() const {
        double sum = 0.0;
        for (double l : lambda) {
            if (!(l >= 0.0)) throw InputError("scalarization weights must be >= 0");
            sum += l;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw InputError("scalarization weights must sum to 1");
    }
};

/// n evenly spaced weights on the 2-objective simplex, (1,0) first.
inline std::vector<ScalarizationWeights> uniform_weight_grid(std::size_t n) {
    if (n < 2) throw InputError("weight grid needs at least 2 points");
    std::vector<ScalarizationWeights> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = 1.0 - static_cast<double>(i) / static_cast<double>(n - 1);
        out.push_back({{a, 1.0 - a}});
    }
    return out;
}

/// Expected improvement below `best` for a minimized objective.
inline double expected_improvement(double mean, double std, double best) {
    if (!(std > acquisition::kStdFloor)) return std::max(best - mean, 0.0);
    const double z = (best - mean) / std;
    return (best - mean) * acquisition::normal_cdf(z) + std * acquisition::normal_pdf(z);
}

struct ScalarizedConfig {
    std::vector<ScalarizationWeights> weights = uniform_weight_grid(5);
    std::size_t per_weight_budget = 60;
    std::size_t init_per_weight = 10;
    std::size_t candidate_budget = 512;
    std::size_t refit_every = 10;
    double noise_variance = 1e-6;
    std::size_t max_consecutive_failures = 10;
    acquisition::PoolOptions pool;
    gp::HyperparameterOptions hyper;
    std::uint64_t seed = 0;

    void validate() const {
        if (weights.size() < 2) throw InputError("scalarized: weight grid needs at least 2 points");
        for (const auto& w : weights) w.validate();
        if (init_per_weight < 2 || init_per_weight > per_weight_budget)
            throw InputError("scalarized: need 2 <= init_per_weight <= per_weight_budget");
    }
};

/// One single-objective BO run per weight vector on min-max normalized objectives (normalization
/// fixed from that run's initial sample); the front is taken over the union of all runs.
inline RunRecord run_scalarized(const Evaluator& eval, const Bounds& bounds, const ScalarizedConfig& cfg) {
    cfg.validate();
    RunRecord rec;
    rec.strategy = "scalarized";
    rec.seed = cfg.seed;
    rec.dim = bounds.dim();
    rec.log = TrainingSet(bounds.dim());
    detail::Runner run(eval, rec, cfg.max_consecutive_failures);
    const double width = bounds.hi[0] - bounds.lo[0];
    std::size_t iteration = 0;

    for (std::size_t w = 0; w < cfg.weights.size(); ++w) {
        const auto& lambda = cfg.weights[w].lambda;
        std::vector<std::size_t> mine;
        Rng rng(mix_seed(cfg.seed, 20, w));
        for (std::size_t i = 0; i < cfg.init_per_weight; ++i) {
            const auto& e = run(uniform_point(bounds, rng), iteration++);
            if (!e.failed) mine.push_back(e.id);
        }
        if (mine.empty()) throw RunError("scalarized: every initial evaluation failed");
        const std::size_t k = rec.log.entries()[mine[0]].objectives.size();
        if (lambda.size() != k) throw InputError("scalarized: weight length does not match objective count");
        std::vector<double> lo(k, std::numeric_limits<double>::infinity());
        std::vector<double> hi(k, -std::numeric_limits<double>::infinity());
        for (auto id : mine) {
            const auto& f = rec.log.entries()[id].objectives;
            for (std::size_t j = 0; j < k; ++j) {
                lo[j] = std::min(lo[j], f[j]);
                hi[j] = std::max(hi[j], f[j]);
            }
        }
        auto scalar = [&](const ObjectiveVector& f) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double range = hi[j] - lo[j];
                s += lambda[j] * (range > 0.0 ? (f[j] - lo[j]) / range : 0.0);
            }
            return s;
        };

        gp::KernelSpec kernel = gp::default_kernel(bounds.dim(), width);
        for (std::size_t step = cfg.init_per_weight; step < cfg.per_weight_budget; ++step) {
            auto t0 = detail::Clock::now();
            Matrix x(static_cast<Eigen::Index>(mine.size()), static_cast<Eigen::Index>(bounds.dim()));
            std::vector<double> y;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < mine.size(); ++r) {
                const auto& e = rec.log.entries()[mine[r]];
                for (std::size_t j = 0; j < bounds.dim(); ++j)
                    x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = e.theta[j];
                y.push_back(scalar(e.objectives));
                best = std::min(best, y.back());
            }
            if ((step - cfg.init_per_weight) % cfg.refit_every == 0)
                kernel = gp::fit_hyperparameters(x, y, kernel, cfg.noise_variance, cfg.hyper);
            const auto model = gp::fit(x, y, kernel, cfg.noise_variance);
            rec.seconds.fit += detail::seconds_since(t0);

            t0 = detail::Clock::now();
            acquisition::BatchScore score = [&](const Matrix& q) {
                Vector mean, sd;
                model.predict_batch(q, mean, sd);
                Vector out(mean.size());
                for (Eigen::Index i = 0; i < mean.size(); ++i) out[i] = expected_improvement(mean[i], sd[i], best);
                return out;
            };
            auto sel = acquisition::maximize_pool(score, x, bounds, cfg.candidate_budget,
                                                  mix_seed(cfg.seed, 21 + w, step), cfg.pool);
            rec.seconds.select += detail::seconds_since(t0);
            const auto& e = run(std::move(sel.theta), iteration++);
            if (!e.failed) mine.push_back(e.id);
        }
    }
    detail::finish(rec);
    return rec;
}

// ---- direct NSGA-II ------------------------------------------------------------------

struct Nsga2DirectConfig {
    std::size_t population_size = 20;
    std::size_t budget = 300; ///< total evaluator calls
    std::size_t max_consecutive_failures = 10;
    std::uint64_t seed = 0;
};

/// NSGA-II on the true evaluator. Generations = budget / population - 1, so calls never exceed budget.
inline RunRecord run_nsga2_direct(const Evaluator& eval, const Bounds& bounds, const Nsga2DirectConfig& cfg) {
    if (cfg.budget < cfg.population_size) throw InputError("nsga2 direct: budget smaller than population");
    RunRecord rec;
    rec.strategy = "nsga2";
    rec.seed = cfg.seed;
    rec.dim = bounds.dim();
    rec.log = TrainingSet(bounds.dim());
    detail::Runner run(eval, rec, cfg.max_consecutive_failures);
    std::size_t generation = 0;
    std::size_t k = 0;
    nsga2::BatchObjective batch = [&](const Matrix& xs) {
        std::vector<ObjectiveVector> rows;
        for (Eigen::Index i = 0; i < xs.rows(); ++i) {
            std::vector<double> theta(static_cast<std::size_t>(xs.cols()));
            for (Eigen::Index j = 0; j < xs.cols(); ++j) theta[static_cast<std::size_t>(j)] = xs(i, j);
            const auto& e = run(std::move(theta), generation);
            if (!e.failed && k == 0) k = e.objectives.size();
            rows.push_back(e.objectives);
        }
        if (k == 0) throw RunError("nsga2 direct: no successful evaluation in the first generation");
        Matrix out(xs.rows(), static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (std::size_t j = 0; j < k; ++j)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    rows[i].empty() ? std::numeric_limits<double>::quiet_NaN() : rows[i][j];
        ++generation;
        return out;
    };
    nsga2::Config nc;
    nc.population_size = cfg.population_size;
    nc.generations = cfg.budget / cfg.population_size - 1;
    nc.bounds = bounds;
    nc.seed = mix_seed(cfg.seed, 30);
    nsga2::optimize(batch, nc);
    detail::finish(rec);
    return rec;
}

// ---- simulator glue --------------------------------------------------------------------

inline Bounds policy_bounds(const policy::PolicyArchitecture& arch, double lo = -5.0, double hi = 5.0) {
    return Bounds::uniform(policy::param_count(arch), lo, hi);
}

/// Evaluator that decodes theta into a policy and runs it on `apps`.
inline Evaluator policy_evaluator(policy::PolicyArchitecture arch, std::vector<socsim::WorkloadSpec> apps,
                                  std::vector<socsim::ObjectiveId> objectives, socsim::Calibration cal = {}) {
    policy::validate_for_decisions(arch);
    socsim::validate_objectives(objectives);
    if (apps.empty()) throw InputError("evaluate: empty application list");
    return [arch = std::move(arch), apps = std::move(apps), objectives = std::move(objectives),
            cal](std::span<const double> theta) {
        const auto params = policy::from_theta(arch, theta);
        return socsim::evaluate(params, apps, objectives, cal);
    };
}

struct GovernorPoint {
    std::string name;
    ObjectiveVector objectives;
    socsim::EvalResult result;
};

inline std::vector<GovernorPoint> governor_points(std::span<const socsim::WorkloadSpec> apps,
                                                  std::span<const socsim::ObjectiveId> objectives,
                                                  const socsim::Calibration& cal = {}) {
    socsim::validate_objectives(objectives);
    std::vector<GovernorPoint> out;
    for (const auto& name : governors::names()) {
        auto r = socsim::simulate(governors::by_name(name), apps, cal);
        out.push_back({name, socsim::objective_vector(r, objectives), std::move(r)});
    }
    return out;
}

} // namespace parmis::optimizer
