#pragma once

// Residual KAN layers
//   f_l = sigma_{beta_l}(A_l f_{l-1} + b_l) + G_l f_{l-1}
// with a rectangular diagonal gate G_l, followed by a final affine map.
// Also hosts the exact ReQU multiplication gadget.

#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "kano/autodiff.hpp"
#include "kano/rng.hpp"
#include "kano/spline.hpp"

namespace kano::reskan {

struct NetSpec {
    std::vector<std::size_t> widths;  ///< d_0 (input), hidden widths, d_{L+1} (output)
    int order = 4;                    ///< B-spline order I
    double alpha = 3.0;               ///< smoothness floor
    spline::WaveletPair pair = spline::WaveletPair::haar();
};

class ResKanNet {
public:
    ResKanNet() = default;

    /// Initialized net: A ~ N(0, 2/d_in), b = 0, G = identity, scale and
    /// wavelet coefficients ~ N(0, 0.1^2), spline coefficients zero.
    ResKanNet(NetSpec spec, RandomStream& rng, const std::string& prefix = "net") : spec_(std::move(spec)) {
        if (spec_.widths.size() < 2) throw ConfigError("a Res-KAN needs at least input and output widths");
        for (auto w : spec_.widths)
            if (w == 0) throw ConfigError("Res-KAN widths must be positive");
        if (spec_.order < 0) throw ConfigError("B-spline order must be non-negative");
        const std::size_t K = static_cast<std::size_t>(spec_.order + 2);
        const std::size_t hidden = spec_.widths.size() - 2;
        for (std::size_t l = 0; l < hidden; ++l) {
            const std::size_t din = spec_.widths[l], dout = spec_.widths[l + 1];
            const std::string tag = prefix + ".layer" + std::to_string(l);
            params_.emplace_back(tag + ".A", gaussian({dout, din}, std::sqrt(2.0 / static_cast<double>(din)), rng));
            params_.emplace_back(tag + ".b", ad::Tensor({dout}, 0.0));
            ad::Tensor beta({K, dout}, 0.0);
            for (std::size_t o = 0; o < dout; ++o) {
                beta[o] = rng.normal(0.0, 0.1);
                beta[dout + o] = rng.normal(0.0, 0.1);
            }
            params_.emplace_back(tag + ".beta", std::move(beta));
            params_.emplace_back(tag + ".gate", ad::Tensor({std::min(din, dout)}, 1.0));
            apply_sparsity(params_[params_.size() - 2]);
        }
        const std::size_t din = spec_.widths[hidden], dout = spec_.widths[hidden + 1];
        params_.emplace_back(prefix + ".out.A", gaussian({dout, din}, std::sqrt(2.0 / static_cast<double>(din)), rng));
        params_.emplace_back(prefix + ".out.b", ad::Tensor({dout}, 0.0));
    }

    const NetSpec& spec() const { return spec_; }
    std::size_t depth() const { return spec_.widths.size() - 2; }
    std::size_t input_width() const { return spec_.widths.front(); }
    std::size_t output_width() const { return spec_.widths.back(); }
    std::size_t width() const { return *std::max_element(spec_.widths.begin(), spec_.widths.end()); }

    ad::Parameter& A(std::size_t l) { return params_[4 * l]; }
    ad::Parameter& b(std::size_t l) { return params_[4 * l + 1]; }
    ad::Parameter& beta(std::size_t l) { return params_[4 * l + 2]; }
    ad::Parameter& gate(std::size_t l) { return params_[4 * l + 3]; }
    ad::Parameter& out_A() { return params_[4 * depth()]; }
    ad::Parameter& out_b() { return params_[4 * depth() + 1]; }

    std::deque<ad::Parameter>& parameters() { return params_; }
    const std::deque<ad::Parameter>& parameters() const { return params_; }

    /// Re-check the sparsity floor after external edits to beta.
    void validate() const {
        for (std::size_t l = 0; l < depth(); ++l) {
            const auto& p = params_[4 * l + 2];
            const std::size_t dout = spec_.widths[l + 1];
            for (std::size_t j = 0; j < p.value.shape[0]; ++j) {
                if (!spline::pinned_slot(j, spec_.alpha)) continue;
                for (std::size_t o = 0; o < dout; ++o)
                    if (p.value[j * dout + o] != 0.0)
                        throw ConfigError("sparsity violated in " + p.name + ": N_" + std::to_string(j - 1) +
                                          " coefficient must vanish for alpha=" + std::to_string(spec_.alpha));
            }
        }
    }

    /// x: [N, d_0] -> [N, d_{L+1}].
    ad::Var forward(ad::Tape& tape, const ad::Var& x) {
        tape.check_owned(x);
        if (ad::cols_of(x) != input_width()) {
            throw ContractViolation("Res-KAN input width " + std::to_string(ad::cols_of(x)) + " != " +
                                    std::to_string(input_width()));
        }
        ad::Var f = x;
        for (std::size_t l = 0; l < depth(); ++l) {
            const ad::Var pre = ad::linear(f, tape.param(A(l)), tape.param(b(l)));
            const ad::Var act = spline::activation(pre, tape.param(beta(l)), spec_.pair, spec_.order, spec_.alpha);
            const ad::Var skip = ad::diag_gate(f, tape.param(gate(l)), spec_.widths[l + 1]);
            f = ad::add(act, skip);
        }
        return ad::linear(f, tape.param(out_A()), tape.param(out_b()));
    }

    /// Inference on one input vector.
    std::vector<double> eval(const std::vector<double>& x) {
        ad::Tape tape(false);
        const auto y = forward(tape, tape.constant(ad::Tensor({1, x.size()}, x)));
        return y.value();
    }

private:
    static ad::Tensor gaussian(ad::Shape shape, double sd, RandomStream& rng) {
        ad::Tensor t(std::move(shape));
        for (auto& v : t.data) v = rng.normal(0.0, sd);
        return t;
    }

    void apply_sparsity(ad::Parameter& beta) const {
        const std::size_t K = beta.value.shape[0], dout = beta.value.shape[1];
        beta.frozen.assign(beta.value.size(), 0);
        bool any = false;
        for (std::size_t j = 0; j < K; ++j) {
            if (!spline::pinned_slot(j, spec_.alpha)) continue;
            any = true;
            for (std::size_t o = 0; o < dout; ++o) {
                beta.value[j * dout + o] = 0.0;
                beta.frozen[j * dout + o] = 1;
            }
        }
        if (!any) beta.frozen.clear();
    }

    NetSpec spec_;
    std::deque<ad::Parameter> params_;
};

/// Exact construction of the 1D Dirichlet Green kernel min(x,y) - xy on [0,1]^2:
///   N_1(x) - N_1(x-y) - 4 N_2((x+y)/2) + N_2(x) + N_2(y),
/// using N_1(u) = u and N_2(u) = u^2/2 on [0,1]. Scaled by `c`.
inline ResKanNet green_1d_net(double c = 1.0) {
    RandomStream rng(0, stream_tag::kInit);
    ResKanNet net(NetSpec{{2, 5, 1}, 2, 1.0, spline::WaveletPair::haar()}, rng, "green1d");
    auto& A = net.A(0).value;
    A.data = {1.0, 0.0, 1.0, -1.0, 0.5, 0.5, 1.0, 0.0, 0.0, 1.0};
    std::fill(net.b(0).value.data.begin(), net.b(0).value.data.end(), 0.0);
    auto& beta = net.beta(0).value;  // rows: phi, psi, N_1, N_2
    std::fill(beta.data.begin(), beta.data.end(), 0.0);
    for (std::size_t o = 0; o < 2; ++o) beta[2 * 5 + o] = 1.0;
    for (std::size_t o = 2; o < 5; ++o) beta[3 * 5 + o] = 1.0;
    std::fill(net.gate(0).value.data.begin(), net.gate(0).value.data.end(), 0.0);
    net.out_A().value.data = {c, -c, -4.0 * c, c, c};
    net.out_b().value.data = {0.0};
    return net;
}

// ---------------------------------------------------------------------------
// Exact multiplication with ReQU squares
// ---------------------------------------------------------------------------

inline double requ(double u) { return u > 0.0 ? u * u : 0.0; }

/// u^2 = ReQU(u) + ReQU(-u).
inline double requ_square(double u) { return requ(u) + requ(-u); }

/// xy = ((x + y)^2 - x^2 - y^2) / 2 on requ squares. Operands are first
/// rescaled by reciprocal powers of two (exact) so they have similar size.
inline double requ_pair(double x, double y) {
    if (x != 0.0 && y != 0.0) {
        int ex = 0, ey = 0;
        std::frexp(x, &ex);
        std::frexp(y, &ey);
        const int shift = (ex - ey) / 2;
        x = std::ldexp(x, -shift);
        y = std::ldexp(y, shift);
    }
    return 0.5 * (requ_square(x + y) - requ_square(x) - requ_square(y));
}

namespace detail {

// Balanced product tree; each gadget checks its operands against the cube
// M^{factors} it is exact on.
inline double product_tree(const double* xs, std::size_t n, double M) {
    if (n == 1) return xs[0];
    const std::size_t half = n / 2;
    const double left = product_tree(xs, half, M);
    const double right = product_tree(xs + half, n - half, M);
    const double bl = std::pow(M, static_cast<double>(half));
    const double br = std::pow(M, static_cast<double>(n - half));
    if (!(std::abs(left) <= bl) || !(std::abs(right) <= br)) {
        throw DomainError("multiplication gadget left its exactness cube");
    }
    return requ_pair(left, right);
}

}  // namespace detail

/// Product of `xs` through pairwise ReQU gadgets; every |x_i| must be <= M.
inline double exact_multiply(const std::vector<double>& xs, double M) {
    if (xs.empty()) throw ContractViolation("exact_multiply needs at least one factor");
    if (!(M > 0.0)) throw ContractViolation("cube bound must be positive");
    for (double x : xs) {
        if (!std::isfinite(x) || std::abs(x) > M) {
            throw DomainError("factor " + std::to_string(x) + " outside the cube [-M, M] with M=" + std::to_string(M));
        }
    }
    return detail::product_tree(xs.data(), xs.size(), M);
}

/// (u, u^2, ..., u^H) with each power produced by exact_multiply.
inline std::vector<double> requ_powers(double u, int H, double M) {
    if (H < 2) throw ContractViolation("requ_powers needs H >= 2");
    std::vector<double> out(static_cast<std::size_t>(H));
    out[0] = u;
    for (int h = 2; h <= H; ++h) out[static_cast<std::size_t>(h - 1)] = exact_multiply(std::vector<double>(static_cast<std::size_t>(h), u), M);
    return out;
}

}  // namespace kano::reskan
