#pragma once

// Experiment pipeline: configuration, dataset generation, supervised
// training of a KANO on closed-form grid targets, and path-wise evaluation
// through the Feynman-Kac adapter.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kano/autodiff.hpp"
#include "kano/benchmarks.hpp"
#include "kano/elliptic.hpp"
#include "kano/fbno.hpp"
#include "kano/io.hpp"
#include "kano/kano_model.hpp"
#include "kano/rng.hpp"
#include "kano/sde.hpp"

#include <fftw3.h>

namespace kano::exp {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    // problem
    std::string benchmark = "periodic";  ///< periodic | lq
    std::size_t d = 5;
    double T = 1.0;
    std::size_t s = 32;
    // data and optimizer
    std::size_t samples = 4096;
    std::size_t batch_size = 1;
    std::size_t steps = 10000;
    double lr = 1e-3;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t monitor = 256;    ///< fixed training-set subset used for initial/final/best loss
    std::size_t log_every = 100;  ///< steps between loss-curve rows
    std::uint64_t seed = 0;
    // model
    std::size_t width = 32;
    std::size_t blocks = 4;
    std::size_t modes = 12;
    std::size_t pos_width = 8;
    int order = 4;
    double alpha = 3.0;
    int wavelet = 4;
    // evaluation
    std::string model;  ///< checkpoint path, "oracle" or "untrained"; empty means <out_dir>/model.ckpt
    std::size_t paths = 16;
    double dt = 1e-2;
    double x0 = 0.5;
    std::string scheme = "central";  ///< analytic (oracle only) | forward | central
    double fd_h = 0.0;               ///< 0 means one grid cell, 1/(s-1)
    std::string level = "full";      ///< value | gradient | hessian | full
    double near_t = 0.1;             ///< window [0, near_t] for the near-origin u error
    // picard
    std::string domain = "interval";  ///< interval | ball
    std::size_t nodes = 129;          ///< interval nodes, or cells per radius for the ball
    double delta = 0.5;
    double eps = 1e-6;
    double c = 1.0;
    std::size_t rho_pairs = 100;
    // riccati
    std::size_t riccati_steps = 10000;
    // output
    std::string out_dir = "runs/default";

    model::KanoConfig model_config() const {
        model::KanoConfig m;
        m.d = d;
        m.s = s;
        m.width = width;
        m.blocks = blocks;
        m.modes = modes;
        m.pos_width = pos_width;
        m.order = order;
        m.alpha = alpha;
        m.wavelet = wavelet;
        return m;
    }

    double step_h() const { return fd_h > 0.0 ? fd_h : 1.0 / static_cast<double>(s - 1); }

    fbno::Level eval_level() const {
        if (level == "value") return fbno::Level::Value;
        if (level == "gradient") return fbno::Level::Gradient;
        if (level == "hessian") return fbno::Level::Hessian;
        if (level == "full") return fbno::Level::Full;
        throw ConfigError("unknown level '" + level + "' (value, gradient, hessian, full)");
    }

    void validate() const {
        if (benchmark != "periodic" && benchmark != "lq") throw ConfigError("benchmark must be periodic or lq");
        if (!(T > 0.0)) throw ConfigError("T must be positive");
        if (batch_size == 0 || samples < batch_size) throw ConfigError("sample count must be >= batch size >= 1");
        if (!(lr > 0.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
            throw ConfigError("optimizer hyperparameters out of range");
        }
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        model_config().validate();
        eval_level();
        fbno::parse_scheme(scheme);
    }
};

namespace detail {

struct Field {
    std::string name;
    std::string doc;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class T>
Field number_field(const char* name, T ExperimentConfig::*member, const char* doc) {
    return {name, doc,
            [member](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return io::fmt(static_cast<double>(c.*member));
                else return std::to_string(c.*member);
            },
            [member, name](ExperimentConfig& c, const std::string& v) {
                try {
                    std::size_t used = 0;
                    if constexpr (std::is_floating_point_v<T>) c.*member = std::stod(v, &used);
                    else if constexpr (std::is_signed_v<T>) c.*member = static_cast<T>(std::stoll(v, &used));
                    else {
                        if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
                        c.*member = static_cast<T>(std::stoull(v, &used));
                    }
                    if (used != v.size()) throw std::invalid_argument("trailing characters");
                } catch (const std::exception&) {
                    throw ConfigError(std::string("bad value '") + v + "' for " + name);
                }
            }};
}

inline Field string_field(const char* name, std::string ExperimentConfig::*member, const char* doc) {
    return {name, doc, [member](const ExperimentConfig& c) { return c.*member; },
            [member](ExperimentConfig& c, const std::string& v) { c.*member = v; }};
}

}  // namespace detail

/// Every config key with its documentation, in canonical order.
inline const std::vector<detail::Field>& config_fields() {
    using C = ExperimentConfig;
    using detail::number_field;
    using detail::string_field;
    static const std::vector<detail::Field> fields = {
        string_field("benchmark", &C::benchmark, "periodic | lq"),
        number_field("d", &C::d, "spatial dimension"),
        number_field("T", &C::T, "horizon"),
        number_field("s", &C::s, "grid side, power of two"),
        number_field("samples", &C::samples, "training samples"),
        number_field("batch_size", &C::batch_size, "samples per optimizer step"),
        number_field("steps", &C::steps, "optimizer steps"),
        number_field("lr", &C::lr, "initial learning rate, halved every third of training"),
        number_field("beta2", &C::beta2, "second-moment decay"),
        number_field("adam_eps", &C::adam_eps, "denominator offset"),
        number_field("monitor", &C::monitor, "training samples in the fixed loss monitor"),
        number_field("log_every", &C::log_every, "steps between loss-curve rows"),
        number_field("seed", &C::seed, "master seed"),
        number_field("width", &C::width, "latent width W"),
        number_field("blocks", &C::blocks, "KANO blocks L"),
        number_field("modes", &C::modes, "retained Fourier modes per axis"),
        number_field("pos_width", &C::pos_width, "positional encoding width"),
        number_field("order", &C::order, "B-spline order I"),
        number_field("alpha", &C::alpha, "smoothness floor"),
        number_field("wavelet", &C::wavelet, "Daubechies order (1 = Haar)"),
        string_field("model", &C::model, "checkpoint path | oracle | untrained"),
        number_field("paths", &C::paths, "evaluation or simulation paths"),
        number_field("dt", &C::dt, "Euler-Maruyama step"),
        number_field("x0", &C::x0, "initial state, every coordinate"),
        string_field("scheme", &C::scheme, "analytic | forward | central"),
        number_field("fd_h", &C::fd_h, "finite-difference step, 0 = one grid cell"),
        string_field("level", &C::level, "value | gradient | hessian | full"),
        number_field("near_t", &C::near_t, "end of the near-origin error window"),
        string_field("domain", &C::domain, "interval | ball (picard)"),
        number_field("nodes", &C::nodes, "interval nodes or ball cells per radius (picard)"),
        number_field("delta", &C::delta, "contraction radius (picard)"),
        number_field("eps", &C::eps, "target accuracy (picard)"),
        number_field("c", &C::c, "quadratic nonlinearity coefficient (picard)"),
        number_field("rho_pairs", &C::rho_pairs, "random pairs for the measured contraction factor"),
        number_field("riccati_steps", &C::riccati_steps, "RK4 steps on [0, T]"),
        string_field("out_dir", &C::out_dir, "output directory"),
    };
    return fields;
}

inline void apply_kv(ExperimentConfig& cfg, const std::map<std::string, std::string>& kv) {
    const auto& fields = config_fields();
    for (const auto& [k, v] : kv) {
        auto it = std::find_if(fields.begin(), fields.end(), [&](const detail::Field& f) { return f.name == k; });
        if (it == fields.end()) throw ConfigError("unknown config key '" + k + "'");
        it->set(cfg, v);
    }
}

/// Canonical "key = value" text of every field.
inline std::string to_text(const ExperimentConfig& cfg) {
    std::ostringstream os;
    for (const auto& f : config_fields()) os << f.name << " = " << f.get(cfg) << "\n";
    return os.str();
}

/// FNV-1a over the canonical text, excluding out_dir so relocated runs share a hash.
inline std::string config_hash(const ExperimentConfig& cfg) {
    std::string text;
    for (const auto& f : config_fields())
        if (f.name != "out_dir") text += f.name + "=" + f.get(cfg) + "\n";
    return io::hex(io::fnv1a(text));
}

inline std::string run_manifest(const ExperimentConfig& cfg, const std::string& command) {
    std::ostringstream os;
    os << "command = " << command << "\n";
    os << "config_hash = " << config_hash(cfg) << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "library_version = " << kVersion << "\n";
    os << "compiler = " << __VERSION__ << "\n";
    os << "fftw = " << fftw_version << "\n";
    os << "[config]\n" << to_text(cfg);
    return os.str();
}

inline bench::Benchmark make_benchmark(const ExperimentConfig& cfg) {
    if (cfg.benchmark == "periodic") return bench::periodic_benchmark(cfg.d, cfg.T);
    if (cfg.benchmark == "lq") return bench::lq_benchmark(cfg.d, cfg.T, cfg.riccati_steps);
    throw ConfigError("benchmark must be periodic or lq");
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

struct TrainingSample {
    model::OperatorInput input;
    std::vector<double> target;  ///< exact u on the s x s grid, row-major
};

/// Closed-form target of one operator input on the s x s grid.
inline TrainingSample make_sample(const bench::Benchmark& b, std::size_t s, double t, std::vector<double> extra) {
    TrainingSample smp;
    smp.input.t = t;
    smp.input.extra = std::move(extra);
    std::vector<double> x(b.d);
    for (std::size_t k = 0; k < smp.input.extra.size(); ++k) x[2 + k] = smp.input.extra[k];
    smp.target.resize(s * s);
    for (std::size_t p = 0; p < s; ++p)
        for (std::size_t q = 0; q < s; ++q) {
            x[0] = model::grid_coord(p, s);
            x[1] = model::grid_coord(q, s);
            smp.target[p * s + q] = b.u(t, x.data());
        }
    return smp;
}

/// (t, x_3..x_d) uniform on [0, T] x [0, 1)^{d-2}; targets from the closed form.
inline std::vector<TrainingSample> generate_dataset(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto b = make_benchmark(cfg);
    RandomStream rng(cfg.seed, stream_tag::kDataset);
    std::vector<TrainingSample> out;
    out.reserve(cfg.samples);
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const double t = rng.uniform(0.0, cfg.T);
        std::vector<double> extra(cfg.d - 2);
        for (auto& e : extra) e = rng.uniform();
        out.push_back(make_sample(b, cfg.s, t, std::move(extra)));
    }
    return out;
}

inline std::uint64_t dataset_hash(const std::vector<TrainingSample>& data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& smp : data) {
        h = io::fnv1a(&smp.input.t, sizeof(double), h);
        h = io::fnv1a(smp.input.extra, h);
        h = io::fnv1a(smp.target, h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Adaptive first-order method without momentum: p -= lr g / (sqrt(v_hat) + eps).
class Optimizer {
public:
    Optimizer(std::vector<ad::Parameter*> params, double beta2, double eps)
        : params_(std::move(params)), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) v_.emplace_back(p->value.size(), 0.0);
    }

    void zero_grad() {
        for (auto* p : params_) p->zero_grad();
    }

    /// Gradients are divided by `scale` (batch size) before the update.
    void step(double lr, double scale) {
        ++t_;
        const double corr = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = *params_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                if (p.is_frozen(i)) continue;
                const double g = p.grad[i] / scale;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                p.value[i] -= lr * g / (std::sqrt(v[i] / corr) + eps_);
            }
        }
    }

private:
    std::vector<ad::Parameter*> params_;
    std::vector<std::vector<double>> v_;
    double beta2_, eps_;
    std::size_t t_ = 0;
};

/// Step size after `step` of `total` steps: lr halved after each third.
inline double scheduled_lr(double lr, std::size_t step, std::size_t total) {
    if (total < 3) return lr;
    const std::size_t third = total / 3;
    const std::size_t k = std::min<std::size_t>(step / third, 2);
    return lr * std::ldexp(1.0, -static_cast<int>(k));
}

struct LossRow {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;    ///< mean batch loss since the previous row
    double monitor_loss = NAN;  ///< loss on the fixed monitor subset when evaluated
};

struct TrainResult {
    std::unique_ptr<model::KanoModel> model;  ///< best model by monitor loss
    std::vector<LossRow> curve;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double best_loss = 0.0;
    std::size_t best_step = 0;
};

inline double sample_loss(model::KanoModel& m, const TrainingSample& smp) {
    ad::Tape tape(false);
    const auto y = m.forward(tape, smp.input).value();
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += (y[i] - smp.target[i]) * (y[i] - smp.target[i]);
    return acc / static_cast<double>(y.size());
}

inline double monitor_loss(model::KanoModel& m, const std::vector<TrainingSample>& data, std::size_t count) {
    const std::size_t n = std::min(count, data.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += sample_loss(m, data[i]);
    return acc / static_cast<double>(n);
}

namespace detail {

inline void dump_nan_batch(const ExperimentConfig& cfg, const std::vector<TrainingSample>& data,
                           const std::vector<std::size_t>& batch, std::size_t step) {
    std::ostringstream os;
    os << "non-finite loss at step " << step << "\n";
    for (auto i : batch) {
        os << "sample " << i << " t=" << io::fmt(data[i].input.t);
        for (double e : data[i].input.extra) os << " " << io::fmt(e);
        os << "\n";
    }
    if (!cfg.out_dir.empty()) io::write_file(std::filesystem::path(cfg.out_dir) / "nan_batch.txt", os.str());
    throw NumericalError(os.str());
}

}  // namespace detail

/// Mean-squared grid regression from a fresh model initialized with cfg.seed.
inline TrainResult train(const ExperimentConfig& cfg, const std::vector<TrainingSample>& data) {
    cfg.validate();
    if (data.size() < cfg.batch_size) throw ConfigError("dataset smaller than one batch");
    TrainResult res;
    res.model = std::make_unique<model::KanoModel>(cfg.model_config(), cfg.seed);
    auto& m = *res.model;
    auto params = m.parameters();
    Optimizer opt(params, cfg.beta2, cfg.adam_eps);
    RandomStream shuffle(cfg.seed, stream_tag::kShuffle);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto reshuffle = [&] {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    };
    reshuffle();

    res.initial_loss = monitor_loss(m, data, cfg.monitor);
    res.best_loss = res.initial_loss;
    res.curve.push_back({0, 0, cfg.lr, NAN, res.initial_loss});
    std::vector<std::vector<double>> best;
    for (auto* p : params) best.push_back(p->value.data);

    const std::size_t per_epoch = std::max<std::size_t>(1, data.size() / cfg.batch_size);
    std::size_t cursor = 0, epoch = 0;
    double window = 0.0;
    std::size_t window_n = 0;
    std::vector<std::size_t> batch(cfg.batch_size);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const double lr = scheduled_lr(cfg.lr, step - 1, cfg.steps);
        opt.zero_grad();
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                cursor = 0;
                reshuffle();
            }
            batch[b] = order[cursor++];
            const auto& smp = data[batch[b]];
            ad::Tape tape;
            const auto loss = ad::mse(m.forward(tape, smp.input), ad::Tensor({cfg.s * cfg.s, 1}, smp.target));
            const double v = loss.item();
            if (!std::isfinite(v)) detail::dump_nan_batch(cfg, data, batch, step);
            batch_loss += v;
            tape.backward(loss);
        }
        batch_loss /= static_cast<double>(cfg.batch_size);
        opt.step(lr, static_cast<double>(cfg.batch_size));
        window += batch_loss;
        ++window_n;

        const bool epoch_end = step % per_epoch == 0;
        if (epoch_end) ++epoch;
        const bool last = step == cfg.steps;
        const bool log = (cfg.log_every > 0 && step % cfg.log_every == 0) || epoch_end || last;
        if (!log) continue;
        LossRow row{step, epoch, lr, window / static_cast<double>(window_n), NAN};
        window = 0.0;
        window_n = 0;
        if (epoch_end || last) {
            row.monitor_loss = monitor_loss(m, data, cfg.monitor);
            if (!std::isfinite(row.monitor_loss)) detail::dump_nan_batch(cfg, data, batch, step);
            if (row.monitor_loss < res.best_loss) {
                res.best_loss = row.monitor_loss;
                res.best_step = step;
                for (std::size_t k = 0; k < params.size(); ++k) best[k] = params[k]->value.data;
            }
            if (last) res.final_loss = row.monitor_loss;
        }
        res.curve.push_back(row);
    }
    if (cfg.steps == 0) res.final_loss = res.initial_loss;
    for (std::size_t k = 0; k < params.size(); ++k) params[k]->value.data = best[k];
    return res;
}

inline io::Csv loss_csv(const ExperimentConfig& cfg, const TrainResult& r) {
    io::Csv csv(config_hash(cfg), cfg.seed, {"step", "epoch", "lr", "train_loss", "monitor_loss"});
    for (const auto& row : r.curve)
        csv.row({io::fmt(row.step), io::fmt(row.epoch), io::fmt(row.lr), io::fmt(row.train_loss),
                 io::fmt(row.monitor_loss)});
    return csv;
}

// ---------------------------------------------------------------------------
// Evaluation along paths
// ---------------------------------------------------------------------------

/// Point evaluator over a model with one cached field per (t, x_3..x_d).
/// Periodic benchmarks fold every coordinate into [0, 1).
class ModelSurrogate {
public:
    ModelSurrogate(model::KanoModel& m, bool periodic) : m_(m), periodic_(periodic) {}

    double operator()(double t, const double* x) {
        const std::size_t d = m_.config().d;
        std::vector<double> key(d - 1);
        key[0] = t;
        double x1 = x[0], x2 = x[1];
        if (periodic_) {
            x1 -= std::floor(x1);
            x2 -= std::floor(x2);
        }
        for (std::size_t k = 2; k < d; ++k) key[k - 1] = periodic_ ? x[k] - std::floor(x[k]) : x[k];
        auto it = cache_.find(key);
        if (it == cache_.end()) {
            if (cache_.size() >= kCacheLimit) cache_.clear();
            model::OperatorInput in{t, std::vector<double>(key.begin() + 1, key.end())};
            it = cache_.emplace(key, m_.field(in)).first;
        }
        return model::bilinear(it->second, m_.config().s, x1, x2);
    }

private:
    static constexpr std::size_t kCacheLimit = 2048;
    model::KanoModel& m_;
    bool periodic_;
    std::map<std::vector<double>, std::vector<double>> cache_;
};

struct EvalReport {
    std::size_t paths = 0;
    std::size_t states = 0;
    double rel_u = 0.0;
    double rel_z = NAN;
    double rel_ups = NAN;
    double rel_u_near = 0.0;   ///< relative L2 u error on t <= near_t
    double mse_u_near = 0.0;   ///< mean squared u error on t <= near_t
    double mean_residual = NAN;  ///< mean summed squared BSDE residual per path
};

struct EvalOutput {
    EvalReport report;
    io::Csv paths_csv;
    io::Csv summary_csv;
};

/// Margin kept from the hull [0, 1]^d so every stencil stays inside it.
inline double stencil_margin(fbno::SchemeKind kind, fbno::Level level, double h) {
    if (kind == fbno::SchemeKind::Analytic || level == fbno::Level::Value) return 0.0;
    const int reach = kind == fbno::SchemeKind::Central ? (level == fbno::Level::Full ? 2 : 1)
                                                        : (level == fbno::Level::Full ? 3 : 2);
    return reach * h;
}

/// Simulates cfg.paths paths, adapts `u` and the closed form along them and compares.
inline EvalOutput evaluate_along_paths(const ExperimentConfig& cfg, const fbno::Surrogate& u) {
    cfg.validate();
    const auto b = make_benchmark(cfg);
    auto spec = b.sde(cfg.dt);
    const auto level = cfg.eval_level();
    const auto kind = fbno::parse_scheme(cfg.scheme);
    const fbno::DerivativeScheme scheme{kind, cfg.step_h()};
    if (cfg.benchmark == "lq") {
        // The model is only defined on the training hull; paths stop where stencils would leave it.
        const double m = stencil_margin(kind, level, cfg.step_h());
        spec.inside = sde::box_domain(cfg.d, m, 1.0 - m);
    }
    const std::size_t d = cfg.d;
    const std::vector<double> x0(d, cfg.x0);

    std::vector<std::string> header = {"path_id", "n", "t"};
    auto add_cols = [&](const std::string& base) {
        for (std::size_t i = 1; i <= d; ++i) header.push_back(base + std::to_string(i));
    };
    add_cols("X");
    header.push_back("Y_pred");
    header.push_back("Y_true");
    add_cols("Z_pred");
    add_cols("Z_true");
    add_cols("Ups_diag_pred");
    add_cols("Ups_diag_true");
    add_cols("A_pred");
    add_cols("A_true");
    header.push_back("residual");
    EvalOutput out{{}, io::Csv(config_hash(cfg), cfg.seed, header),
                   io::Csv(config_hash(cfg), cfg.seed, {"metric", "value"})};

    const fbno::Surrogate truth{[&b](double t, const double* x) { return b.u(t, x); }, b.exact};
    double eu = 0, nu = 0, ez = 0, nz = 0, eh = 0, nh = 0, eun = 0, nun = 0, res_sum = 0;
    std::size_t near_count = 0, res_count = 0;
    const std::string na = "nan";
    for (std::size_t p = 0; p < cfg.paths; ++p) {
        auto bundle = sde::simulate(spec, x0, cfg.seed, p);
        // The first state outside the domain is dropped; the tuple ends at the last state inside.
        if (bundle.exited()) {
            if (bundle.exit_index == 0) throw ContractViolation("initial state outside the evaluation domain");
            --bundle.exit_index;
        }
        const auto tr = fbno::adapt(truth, fbno::DerivativeScheme::analytic(), bundle, spec, level);
        const auto pr = fbno::adapt(u, scheme, bundle, spec, level);
        std::vector<double> resid(pr.count, NAN);
        if (level >= fbno::Level::Hessian) {
            const auto rep = fbno::bsde_residual(pr, bundle, spec, b.driver, b.terminal);
            for (std::size_t n = 0; n < rep.per_step.size(); ++n) resid[n] = rep.per_step[n];
            res_sum += rep.sum_sq;
            ++res_count;
        }
        for (std::size_t n = 0; n < pr.count; ++n) {
            const double t = bundle.times[n];
            const double du = pr.Y[n] - tr.Y[n];
            eu += du * du;
            nu += tr.Y[n] * tr.Y[n];
            if (t <= cfg.near_t + 1e-12) {
                eun += du * du;
                nun += tr.Y[n] * tr.Y[n];
                ++near_count;
            }
            for (std::size_t i = 0; i < d; ++i) {
                ez += std::pow(pr.z(n)[i] - tr.z(n)[i], 2);
                nz += std::pow(tr.z(n)[i], 2);
            }
            for (std::size_t k = 0; k < d * d; ++k) {
                eh += std::pow(pr.ups(n)[k] - tr.ups(n)[k], 2);
                nh += std::pow(tr.ups(n)[k], 2);
            }
            std::vector<std::string> row = {io::fmt(p), io::fmt(n), io::fmt(t)};
            for (std::size_t i = 0; i < d; ++i) row.push_back(io::fmt(bundle.state(n)[i]));
            row.push_back(io::fmt(pr.Y[n]));
            row.push_back(io::fmt(tr.Y[n]));
            const bool g = level >= fbno::Level::Gradient, h = level >= fbno::Level::Hessian,
                       f = level >= fbno::Level::Full;
            for (std::size_t i = 0; i < d; ++i) row.push_back(g ? io::fmt(pr.z(n)[i]) : na);
            for (std::size_t i = 0; i < d; ++i) row.push_back(g ? io::fmt(tr.z(n)[i]) : na);
            for (std::size_t i = 0; i < d; ++i) row.push_back(h ? io::fmt(pr.ups(n)[i * d + i]) : na);
            for (std::size_t i = 0; i < d; ++i) row.push_back(h ? io::fmt(tr.ups(n)[i * d + i]) : na);
            for (std::size_t i = 0; i < d; ++i) row.push_back(f ? io::fmt(pr.a(n)[i]) : na);
            for (std::size_t i = 0; i < d; ++i) row.push_back(f ? io::fmt(tr.a(n)[i]) : na);
            row.push_back(io::fmt(resid[n]));
            out.paths_csv.row(row);
            ++out.report.states;
        }
    }
    auto rel = [](double e, double n) { return n > 0.0 ? std::sqrt(e / n) : std::sqrt(e); };
    auto& r = out.report;
    r.paths = cfg.paths;
    r.rel_u = rel(eu, nu);
    if (level >= fbno::Level::Gradient) r.rel_z = rel(ez, nz);
    if (level >= fbno::Level::Hessian) r.rel_ups = rel(eh, nh);
    r.rel_u_near = rel(eun, nun);
    r.mse_u_near = near_count ? eun / static_cast<double>(near_count) : 0.0;
    if (res_count) r.mean_residual = res_sum / static_cast<double>(res_count);
    for (const auto& [k, v] : std::vector<std::pair<std::string, double>>{
             {"paths", static_cast<double>(r.paths)},
             {"states", static_cast<double>(r.states)},
             {"rel_l2_u", r.rel_u},
             {"rel_l2_z", r.rel_z},
             {"rel_l2_ups", r.rel_ups},
             {"rel_l2_u_near_t0", r.rel_u_near},
             {"mse_u_near_t0", r.mse_u_near},
             {"mean_sum_sq_residual", r.mean_residual}})
        out.summary_csv.row({k, io::fmt(v)});
    return out;
}

/// Surrogate for cfg.model: "oracle" (closed form), "untrained" (fresh init)
/// or a checkpoint path (default <out_dir>/model.ckpt). Owns the model.
struct LoadedSurrogate {
    std::unique_ptr<model::KanoModel> model;
    std::unique_ptr<ModelSurrogate> eval;
    fbno::Surrogate surrogate;
};

inline LoadedSurrogate load_surrogate(const ExperimentConfig& cfg) {
    LoadedSurrogate ls;
    const bool periodic = cfg.benchmark == "periodic";
    if (cfg.model == "oracle") {
        auto b = std::make_shared<bench::Benchmark>(make_benchmark(cfg));
        ls.surrogate = {[b](double t, const double* x) { return b->u(t, x); },
                        [b](double t, const double* x) { return b->exact(t, x); }};
        return ls;
    }
    if (fbno::parse_scheme(cfg.scheme) == fbno::SchemeKind::Analytic) {
        throw ConfigError("the analytic scheme needs model = oracle");
    }
    if (cfg.model == "untrained") {
        ls.model = std::make_unique<model::KanoModel>(cfg.model_config(), cfg.seed);
    } else {
        const std::string path =
            cfg.model.empty() ? (std::filesystem::path(cfg.out_dir) / "model.ckpt").string() : cfg.model;
        ls.model = std::make_unique<model::KanoModel>(model::KanoModel::load(path));
        if (ls.model->config().d != cfg.d) throw ConfigError("checkpoint dimension differs from config d");
    }
    ls.eval = std::make_unique<ModelSurrogate>(*ls.model, periodic);
    auto* ev = ls.eval.get();
    ls.surrogate = {[ev](double t, const double* x) { return (*ev)(t, x); }, nullptr};
    return ls;
}

// ---------------------------------------------------------------------------
// Other subcommands
// ---------------------------------------------------------------------------

inline io::Csv simulate_csv(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto b = make_benchmark(cfg);
    const auto spec = b.sde(cfg.dt);
    std::vector<std::string> header = {"path_id", "n", "t"};
    for (std::size_t i = 1; i <= cfg.d; ++i) header.push_back("X" + std::to_string(i));
    header.push_back("exit_flag");
    io::Csv csv(config_hash(cfg), cfg.seed, header);
    for (std::size_t p = 0; p < cfg.paths; ++p) {
        const auto bundle = sde::simulate(spec, std::vector<double>(cfg.d, cfg.x0), cfg.seed, p);
        for (std::size_t n = 0; n <= bundle.steps; ++n) {
            std::vector<std::string> row = {io::fmt(p), io::fmt(n), io::fmt(bundle.times[n])};
            for (std::size_t i = 0; i < cfg.d; ++i) row.push_back(io::fmt(bundle.state(n)[i]));
            row.push_back(bundle.exited() && n >= bundle.exit_index ? "1" : "0");
            csv.row(row);
        }
    }
    return csv;
}

inline io::Csv riccati_csv(const ExperimentConfig& cfg) {
    const auto curve = bench::riccati_solve(cfg.d, cfg.T, cfg.riccati_steps);
    io::Csv csv(config_hash(cfg), cfg.seed, {"t", "k", "kdot"});
    for (std::size_t n = 0; n <= curve.steps(); ++n)
        csv.row({io::fmt(curve.time(n)), io::fmt(curve.k_at(n)), io::fmt(curve.kdot_at(n))});
    return csv;
}

struct PicardRun {
    elliptic::PicardResult result;
    double rho = 0.0;
    io::Csv csv;
};

/// Toy semilinear instance f~(z) = c z^2, f_0 = -delta^2, g = 0 on the chosen domain.
inline PicardRun picard_run(const ExperimentConfig& cfg) {
    if (cfg.domain != "interval" && cfg.domain != "ball") throw ConfigError("domain must be interval or ball");
    const auto toy = cfg.domain == "interval" ? elliptic::toy_interval(cfg.nodes, cfg.delta, cfg.c)
                                              : elliptic::toy_ball(cfg.nodes, cfg.delta, cfg.c);
    elliptic::PicardSolver solver(toy.mesh, toy.kernel, toy.problem);
    PicardRun run{{}, solver.measure_rho(cfg.rho_pairs, cfg.seed),
                  io::Csv(config_hash(cfg), cfg.seed, {"j", "step_norm", "ratio", "residual"})};
    if (!(run.rho < 1.0)) {
        throw DivergenceError("measured contraction factor " + io::fmt(run.rho) + " is not below 1; reduce delta or c");
    }
    run.result = solver.solve(cfg.eps, run.rho);
    for (const auto& e : run.result.log)
        run.csv.row({io::fmt(e.j), io::fmt(e.step_norm), io::fmt(e.ratio), io::fmt(e.residual)});
    return run;
}

}  // namespace kano::exp
