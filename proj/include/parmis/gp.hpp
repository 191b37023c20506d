#pragma once

// Zero-mean Gaussian-process regression with a squared-exponential kernel,
// type-II maximum likelihood for the kernel, and posterior function draws
// through random Fourier features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "parmis/errors.hpp"
#include "parmis/random.hpp"

namespace parmis::gp {

enum class KernelVariant { SquaredExponentialArd, SquaredExponentialIsotropic };

struct KernelSpec {
    KernelVariant variant = KernelVariant::SquaredExponentialIsotropic;
    std::vector<double> lengthscales{1.0};
    double signal_variance = 1.0;

    static KernelSpec isotropic(double lengthscale, double signal_variance = 1.0) {
        return {KernelVariant::SquaredExponentialIsotropic, {lengthscale}, signal_variance};
    }
    static KernelSpec ard(std::vector<double> lengthscales, double signal_variance = 1.0) {
        return {KernelVariant::SquaredExponentialArd, std::move(lengthscales), signal_variance};
    }

    bool is_ard() const { return variant == KernelVariant::SquaredExponentialArd; }
    double lengthscale(std::size_t dim) const { return is_ard() ? lengthscales[dim] : lengthscales[0]; }

    void validate(std::size_t dim) const {
        if (is_ard() && lengthscales.size() != dim) {
            throw InputError("KernelSpec: ARD kernel needs " + std::to_string(dim) + " lengthscales, got " +
                             std::to_string(lengthscales.size()));
        }
        if (!is_ard() && lengthscales.size() != 1) {
            throw InputError("KernelSpec: isotropic kernel needs exactly one lengthscale");
        }
        for (double l : lengthscales) {
            if (!(l > 0.0) || !std::isfinite(l)) throw InputError("KernelSpec: lengthscales must be positive");
        }
        if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
            throw InputError("KernelSpec: signal_variance must be positive");
        }
    }

    double operator()(std::span<const double> a, std::span<const double> b) const {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double z = (a[i] - b[i]) / lengthscale(i);
            s += z * z;
        }
        return signal_variance * std::exp(-0.5 * s);
    }
};

/// ARD up to 50 dimensions, isotropic above; lengthscale initialized from the input box width.
inline KernelSpec default_kernel(std::size_t dim, double box_width, double signal_variance = 1.0) {
    if (dim <= 50) return KernelSpec::ard(std::vector<double>(dim, 0.25 * box_width), signal_variance);
    return KernelSpec::isotropic(0.25 * box_width * std::sqrt(static_cast<double>(dim)), signal_variance);
}

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return Matrix(0, 0);
    const auto d = rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d) throw InputError("inputs have inconsistent dimensions");
        for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

namespace detail {

inline Matrix scale_inputs(const Matrix& x, const KernelSpec& k) {
    if (!k.is_ard()) return x / k.lengthscales[0];
    Matrix out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) /= k.lengthscales[static_cast<std::size_t>(j)];
    return out;
}

// Pairwise squared distances between rows of a and rows of b.
inline Matrix squared_distances(const Matrix& a, const Vector& a_norms, const Matrix& b, const Vector& b_norms) {
    Matrix d = -2.0 * a * b.transpose();
    d.colwise() += a_norms;
    d.rowwise() += b_norms.transpose();
    return d.cwiseMax(0.0);
}

struct Factorization {
    Eigen::LLT<Matrix> llt;
    double jitter = 0.0;
};

// Cholesky of m + jitter*I with jitter escalation: 1e-10 * mean diagonal, x10 per retry, up to 1e-4.
inline Factorization robust_cholesky(const Matrix& m) {
    const Eigen::Index n = m.rows();
    const double scale = n > 0 ? std::max(m.trace() / static_cast<double>(n), 1e-300) : 1.0;
    for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
        Factorization f;
        f.jitter = rel * scale;
        Matrix a = m;
        a.diagonal().array() += f.jitter;
        f.llt.compute(a);
        if (f.llt.info() == Eigen::Success) {
            const auto diag = f.llt.matrixLLT().diagonal();
            if ((diag.array() > 0.0).all() && diag.allFinite()) return f;
        }
    }
    throw NumericalError("kernel matrix is not positive definite after maximum jitter (1e-4)");
}

} // namespace detail

struct Prediction {
    double mean = 0.0;
    double std = 0.0;
};

/// Fitted model. Immutable after fit(); predictions are const and thread-safe.
class GaussianProcess {
public:
    const KernelSpec& kernel() const { return kernel_; }
    double noise_variance() const { return noise_; }
    double jitter() const { return jitter_; }
    std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }
    const Matrix& inputs() const { return x_; }
    const Vector& targets() const { return y_; }
    const Vector& standardized_targets() const { return ys_; }
    double target_mean() const { return y_mean_; }
    double target_scale() const { return y_scale_; }
    Matrix cholesky_factor() const { return llt_.matrixL(); }
    const Vector& alpha() const { return alpha_; }

    /// Kernel matrix of the training inputs (no noise, no jitter), standardized units.
    Matrix kernel_matrix() const {
        return kernel_.signal_variance * (-0.5 * detail::squared_distances(xs_, xs_norms_, xs_, xs_norms_)).array().exp().matrix();
    }

    Prediction predict(std::span<const double> query) const {
        if (query.size() != dim()) {
            throw InputError("predict: query has dimension " + std::to_string(query.size()) + ", model expects " +
                             std::to_string(dim()));
        }
        Matrix q(1, static_cast<Eigen::Index>(dim()));
        for (std::size_t j = 0; j < dim(); ++j) q(0, static_cast<Eigen::Index>(j)) = query[j];
        Vector mean, std;
        predict_batch(q, mean, std);
        return {mean[0], std[0]};
    }

    /// Rows of `queries` are query points.
    void predict_batch(const Matrix& queries, Vector& mean, Vector& std) const {
        if (static_cast<std::size_t>(queries.cols()) != dim()) {
            throw InputError("predict: query has dimension " + std::to_string(queries.cols()) + ", model expects " +
                             std::to_string(dim()));
        }
        const Matrix qs = detail::scale_inputs(queries, kernel_);
        const Vector q_norms = qs.rowwise().squaredNorm();
        const Matrix cross =
            kernel_.signal_variance *
            (-0.5 * detail::squared_distances(qs, q_norms, xs_, xs_norms_)).array().exp().matrix();
        mean = cross * alpha_;
        const Matrix v = llt_.matrixL().solve(cross.transpose());
        const Vector var =
            (kernel_.signal_variance + noise_ - v.colwise().squaredNorm().transpose().array()).cwiseMax(0.0);
        std = var.cwiseSqrt() * y_scale_;
        mean = (mean.array() * y_scale_ + y_mean_).matrix();
    }

    /// Log marginal likelihood of the standardized targets.
    double log_marginal_likelihood() const {
        const double n = static_cast<double>(size());
        const double logdet = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
        return -0.5 * ys_.dot(alpha_) - 0.5 * logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);
    }

private:
    friend GaussianProcess fit(const Matrix&, std::span<const double>, const KernelSpec&, double);

    KernelSpec kernel_;
    double noise_ = 0.0;
    double jitter_ = 0.0;
    Matrix x_;
    Matrix xs_;
    Vector xs_norms_;
    Vector y_;
    Vector ys_;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    Eigen::LLT<Matrix> llt_;
    Vector alpha_;
};

/// Rows of `inputs` are training points. Targets are standardized internally.
inline GaussianProcess fit(const Matrix& inputs, std::span<const double> targets, const KernelSpec& kernel,
                           double noise) {
    if (inputs.rows() == 0) throw InputError("fit: no training points");
    if (static_cast<std::size_t>(inputs.rows()) != targets.size()) {
        throw InputError("fit: " + std::to_string(inputs.rows()) + " inputs but " + std::to_string(targets.size()) +
                         " targets");
    }
    if (!(noise >= 0.0)) throw InputError("fit: noise variance must be >= 0");
    kernel.validate(static_cast<std::size_t>(inputs.cols()));
    if (!inputs.allFinite()) throw InputError("fit: non-finite input");

    GaussianProcess gp;
    gp.kernel_ = kernel;
    gp.noise_ = noise;
    gp.x_ = inputs;
    gp.y_ = Eigen::Map<const Vector>(targets.data(), static_cast<Eigen::Index>(targets.size()));
    if (!gp.y_.allFinite()) throw InputError("fit: non-finite target");
    const double n = static_cast<double>(targets.size());
    gp.y_mean_ = gp.y_.mean();
    const double var = (gp.y_.array() - gp.y_mean_).square().sum() / n;
    gp.y_scale_ = var > 1e-300 ? std::sqrt(var) : 1.0;
    gp.ys_ = (gp.y_.array() - gp.y_mean_) / gp.y_scale_;

    gp.xs_ = detail::scale_inputs(inputs, kernel);
    gp.xs_norms_ = gp.xs_.rowwise().squaredNorm();
    Matrix k = gp.kernel_matrix();
    k.diagonal().array() += noise;
    auto f = detail::robust_cholesky(k);
    gp.jitter_ = f.jitter;
    gp.llt_ = std::move(f.llt);
    gp.alpha_ = gp.llt_.solve(gp.ys_);
    return gp;
}

inline GaussianProcess fit(const std::vector<std::vector<double>>& inputs, std::span<const double> targets,
                           const KernelSpec& kernel, double noise) {
    if (inputs.empty()) throw InputError("fit: no training points");
    return fit(to_matrix(inputs), targets, kernel, noise);
}

struct HyperparameterOptions {
    double log_lower = std::log(1e-3);
    double log_upper = std::log(1e3);
    int max_evaluations_per_start = 120;
    double min_step = 1e-2;
};

namespace detail {

// LML of standardized targets; -inf when the factorization fails.
inline double lml_for(const Matrix& sqd_unscaled, const std::vector<Matrix>* per_dim, const Vector& ys,
                      const std::vector<double>& log_params, bool ard, double noise) {
    const std::size_t m = log_params.size() - 1;
    const double sv = std::exp(log_params[m]);
    Matrix scaled;
    if (!ard) {
        const double l = std::exp(log_params[0]);
        scaled = sqd_unscaled / (l * l);
    } else {
        scaled = Matrix::Zero(ys.size(), ys.size());
        for (std::size_t j = 0; j < m; ++j) {
            const double l = std::exp(log_params[j]);
            scaled += (*per_dim)[j] / (l * l);
        }
    }
    Matrix k = sv * (-0.5 * scaled).array().exp().matrix();
    k.diagonal().array() += noise;
    try {
        auto f = robust_cholesky(k);
        const Vector a = f.llt.solve(ys);
        const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
        const double v = -0.5 * ys.dot(a) - 0.5 * logdet -
                         0.5 * static_cast<double>(ys.size()) * std::log(2.0 * std::numbers::pi);
        return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

} // namespace detail

/// Log marginal likelihood of (inputs, targets) under `kernel`, targets standardized.
inline double log_marginal_likelihood(const Matrix& inputs, std::span<const double> targets,
                                      const KernelSpec& kernel, double noise) {
    try {
        return fit(inputs, targets, kernel, noise).log_marginal_likelihood();
    } catch (const NumericalError&) {
        return -std::numeric_limits<double>::infinity();
    }
}

/// Multi-start coordinate ascent on the log marginal likelihood over log-parameters in [1e-3, 1e3].
/// The returned spec never has lower likelihood than `init`.
inline KernelSpec fit_hyperparameters(const Matrix& inputs, std::span<const double> targets, const KernelSpec& init,
                                      double noise = 1e-6, const HyperparameterOptions& opts = {}) {
    const auto n = static_cast<std::size_t>(inputs.rows());
    if (n < 2) throw InputError("fit_hyperparameters: need at least 2 points");
    if (n != targets.size()) throw InputError("fit_hyperparameters: inputs/targets length mismatch");
    init.validate(static_cast<std::size_t>(inputs.cols()));

    Vector y = Eigen::Map<const Vector>(targets.data(), static_cast<Eigen::Index>(n));
    const double mean = y.mean();
    const double var = (y.array() - mean).square().sum() / static_cast<double>(n);
    if (!(var > 1e-300)) {
        KernelSpec out = init;
        out.signal_variance = std::max(out.signal_variance, 1e-6);
        return out;
    }
    const Vector ys = (y.array() - mean) / std::sqrt(var);

    const bool ard = init.is_ard();
    Matrix sqd;
    std::vector<Matrix> per_dim;
    if (!ard) {
        const Vector norms = inputs.rowwise().squaredNorm();
        sqd = detail::squared_distances(inputs, norms, inputs, norms);
    } else {
        for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
            const Vector c = inputs.col(j);
            per_dim.push_back((c.replicate(1, n) - c.transpose().replicate(n, 1)).array().square().matrix());
        }
    }

    auto clamp_log = [&](double v) { return std::clamp(v, opts.log_lower, opts.log_upper); };
    std::vector<double> init_params;
    for (double l : init.lengthscales) init_params.push_back(std::log(l));
    init_params.push_back(std::log(init.signal_variance));
    auto objective = [&](const std::vector<double>& p) {
        return detail::lml_for(sqd, ard ? &per_dim : nullptr, ys, p, ard, noise);
    };

    // The exact init is evaluated first so the ascent contract holds even if init lies outside the box.
    std::vector<double> best = init_params;
    double best_value = objective(best);
    bool improved_on_init = false;

    std::vector<std::vector<double>> starts;
    for (double shift : {0.0, std::log(0.2), std::log(5.0)}) {
        std::vector<double> s = init_params;
        for (std::size_t j = 0; j + 1 < s.size(); ++j) s[j] = clamp_log(s[j] + shift);
        s.back() = shift == 0.0 ? clamp_log(s.back()) : 0.0;
        starts.push_back(std::move(s));
    }

    for (auto x : starts) {
        double fx = objective(x);
        int evals = 1;
        double step = 1.0;
        while (step >= opts.min_step && evals < opts.max_evaluations_per_start) {
            bool improved = false;
            for (std::size_t j = 0; j < x.size() && evals < opts.max_evaluations_per_start; ++j) {
                for (double dir : {+1.0, -1.0}) {
                    auto trial = x;
                    trial[j] = clamp_log(x[j] + dir * step);
                    if (trial[j] == x[j]) continue;
                    const double ft = objective(trial);
                    ++evals;
                    if (ft > fx) {
                        x = std::move(trial);
                        fx = ft;
                        improved = true;
                        break;
                    }
                }
            }
            if (!improved) step *= 0.5;
        }
        if (fx > best_value) {
            best_value = fx;
            best = x;
            improved_on_init = true;
        }
    }
    if (!improved_on_init) return init;

    KernelSpec out = init;
    for (std::size_t j = 0; j + 1 < best.size(); ++j) out.lengthscales[j] = std::exp(best[j]);
    out.signal_variance = std::exp(best.back());
    return out;
}

inline KernelSpec fit_hyperparameters(const std::vector<std::vector<double>>& inputs,
                                      std::span<const double> targets, const KernelSpec& init,
                                      double noise = 1e-6, const HyperparameterOptions& opts = {}) {
    if (inputs.size() < 2) throw InputError("fit_hyperparameters: need at least 2 points");
    return fit_hyperparameters(to_matrix(inputs), targets, init, noise, opts);
}

/// One posterior function draw: f(x) = mean + scale * sqrt(2 s2 / F) * sum_i w_i cos(omega_i . x + b_i).
struct RffSample {
    Matrix frequencies; ///< num_features x d
    Vector phases;
    Vector weights;
    std::size_t num_features = 0;
    double amplitude = 1.0; ///< sqrt(2 * signal_variance / num_features)
    double target_mean = 0.0;
    double target_scale = 1.0;

    std::size_t dim() const { return static_cast<std::size_t>(frequencies.cols()); }

    /// Feature map phi(x) for rows of x, standardized units (phi . phi' approximates the kernel).
    Matrix features(const Matrix& x) const {
        Matrix proj = x * frequencies.transpose();
        proj.rowwise() += phases.transpose();
        return amplitude * proj.array().cos().matrix();
    }

    Vector evaluate_batch(const Matrix& x) const {
        if (static_cast<std::size_t>(x.cols()) != dim()) throw InputError("RffSample: dimension mismatch");
        return ((features(x) * weights).array() * target_scale + target_mean).matrix();
    }

    double operator()(std::span<const double> x) const {
        Matrix q(1, static_cast<Eigen::Index>(x.size()));
        for (std::size_t j = 0; j < x.size(); ++j) q(0, static_cast<Eigen::Index>(j)) = x[j];
        return evaluate_batch(q)[0];
    }
};

/// Draw random features for `kernel` (omega ~ N(0, diag(1/l^2)), b ~ U[0, 2pi)).
inline RffSample draw_features(const KernelSpec& kernel, std::size_t dim, std::size_t num_features, Rng& rng) {
    if (num_features < 1) throw InputError("sample_posterior_function: num_features must be >= 1");
    RffSample s;
    s.num_features = num_features;
    s.frequencies.resize(static_cast<Eigen::Index>(num_features), static_cast<Eigen::Index>(dim));
    s.phases.resize(static_cast<Eigen::Index>(num_features));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (Eigen::Index i = 0; i < s.frequencies.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.frequencies.cols(); ++j) {
            s.frequencies(i, j) = normal(rng) / kernel.lengthscale(static_cast<std::size_t>(j));
        }
        s.phases[i] = phase(rng);
    }
    s.amplitude = std::sqrt(2.0 * kernel.signal_variance / static_cast<double>(num_features));
    return s;
}

/// Posterior draw: weights of the Bayesian linear model in feature space conditioned on the
/// training data (w = w0 + Phi^T (Phi Phi^T + s2 I)^-1 (y - Phi w0 - eps)). Deterministic in `seed`.
inline RffSample sample_posterior_function(const GaussianProcess& model, std::size_t num_features,
                                           std::uint64_t seed) {
    Rng rng(seed);
    RffSample s = draw_features(model.kernel(), model.dim(), num_features, rng);
    s.target_mean = model.target_mean();
    s.target_scale = model.target_scale();

    std::normal_distribution<double> normal(0.0, 1.0);
    Vector w0(static_cast<Eigen::Index>(num_features));
    for (Eigen::Index i = 0; i < w0.size(); ++i) w0[i] = normal(rng);

    const double obs_var = model.noise_variance() + model.jitter();
    const Matrix phi = s.features(model.inputs());
    Vector residual = model.standardized_targets() - phi * w0;
    const double obs_sd = std::sqrt(obs_var);
    for (Eigen::Index i = 0; i < residual.size(); ++i) residual[i] -= obs_sd * normal(rng);

    Matrix gram = phi * phi.transpose();
    gram.diagonal().array() += obs_var;
    const auto f = detail::robust_cholesky(gram);
    s.weights = w0 + phi.transpose() * f.llt.solve(residual);
    return s;
}

} // namespace parmis::gp
