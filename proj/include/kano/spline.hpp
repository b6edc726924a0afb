#pragma once

// Cardinal B-splines, Haar/Daubechies scale-wavelet pairs and the trainable
// KAN activation
//   sigma(x) = b_{-1} phi(x) + b_0 psi(x) + sum_{i >= ceil(alpha)} b_i N_i(x).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

#include "kano/autodiff.hpp"
#include "kano/errors.hpp"

namespace kano::spline {

inline double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

inline double ipow(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

inline double binomial(int n, int k) {
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return c;
}

/// Cardinal B-spline of order I with support [0, I+1] (Michelli form).
inline double bspline_eval(int I, double x) {
    if (I < 0) throw ContractViolation("B-spline order must be non-negative");
    if (I == 0) return (x >= 0.0 && x < 1.0) ? 1.0 : 0.0;
    if (!(x > 0.0) || x >= I + 1) return 0.0;
    double acc = 0.0;
    for (int j = 0; j <= I + 1 && j < x; ++j) {
        const double sign = (j % 2 == 0) ? 1.0 : -1.0;
        acc += sign * binomial(I + 1, j) * ipow(x - j, I);
    }
    return acc / factorial(I);
}

/// d/dx N_I(x) = N_{I-1}(x) - N_{I-1}(x-1); zero for I = 0.
inline double bspline_deriv(int I, double x) {
    if (I <= 0) return 0.0;
    return bspline_eval(I - 1, x) - bspline_eval(I - 1, x - 1.0);
}

// ---------------------------------------------------------------------------
// Daubechies filters
// ---------------------------------------------------------------------------

namespace detail {

// Tabulated in reverse order (last tap first); reversed on load.
inline const std::vector<double>& daubechies_reversed(int N) {
    static const std::array<std::vector<double>, 10> table = {{
        {0.7071067811865475244, 0.7071067811865475244},
        {-0.12940952255126038117, 0.22414386804201338103, 0.83651630373780790558, 0.48296291314453414337},
        {0.035226291885709536603, -0.085441273882026661693, -0.1350110200102545887, 0.4598775021184915701,
         0.80689150931109257649, 0.332670552950082616},
        {-0.010597401785069032105, 0.032883011666885199735, 0.030841381835560763627, -0.18703481171909308408,
         -0.027983769416859854211, 0.63088076792985890788, 0.71484657055291564709, 0.23037781330889650086},
        {0.003335725285473771278, -0.012580751999081999469, -0.0062414902127982742742, 0.077571493840045713523,
         -0.032244869584638374648, -0.24229488706638203186, 0.13842814590132073151, 0.72430852843777292773,
         0.60382926979718967054, 0.16010239797419291448},
        {-0.0010773010853084795649, 0.0047772575109455106396, 0.00055384220116149613925,
         -0.031582039317486029565, 0.027522865530305728626, 0.097501605587323049102, -0.12976686756726193556,
         -0.22626469396543982008, 0.31525035170919762909, 0.75113390802109535068, 0.49462389039845308568,
         0.11154074335010946362},
        {0.00035371379997452024845, -0.0018016407040474909153, 0.00042957797292136652113,
         0.012550998556099840613, -0.016574541630666880654, -0.03802993693501441358, 0.080612609151083071913,
         0.071309219266830264751, -0.22403618499387498264, -0.14390600392856497541, 0.46978228740519312247,
         0.72913209084623511992, 0.39653931948191730654, 0.07785205408500917902},
        {-0.00011747678412476953373, 0.00067544940645056936637, -0.0003917403733769470463,
         -0.0048703529934515743104, 0.0087460940474057767164, 0.013981027917398281649,
         -0.044088253930794751507, -0.01736930100180754617, 0.12874742662047845886, 0.00047248457391328277036,
         -0.28401554296154692652, -0.015829105256349305667, 0.58535468365420671277, 0.67563073629728980681,
         0.31287159091429997066, 0.054415842243104009955},
        {0.000039347320316271599481, -0.00025196318894271013697, 0.00023038576352319596721,
         0.0018476468830562264766, -0.0042815036824634298345, -0.0047232047577513972779,
         0.022361662123679097205, 0.00025094711483145195759, -0.067632829061329973676, 0.030725681479333379212,
         0.14854074933810638014, -0.096840783222976460514, -0.29327378327917490881, 0.13319738582500757619,
         0.65728807805130053808, 0.6048231236901111119, 0.24383467461259035373, 0.038077947363878346589},
        {-0.000013264202894521244812, 0.000093588670320069591334, -0.00011646685512928545095,
         -0.00068585669495971162656, 0.0019924052951850561172, 0.0013953517470529011658,
         -0.010733175483330575044, 0.0036065535669561696554, 0.03321267405934100174, -0.029457536821875812858,
         -0.071394147166397087145, 0.09305736460357235116, 0.12736934033579326008, -0.1959462743773770435,
         -0.24984642432731537942, 0.28117234366057746075, 0.68845903945360356574, 0.52720118893172558648,
         0.18817680007769148902, 0.026670057900555553587},
    }};
    return table[static_cast<std::size_t>(N - 1)];
}

/// Natural cubic spline through equally spaced samples.
class UniformCubic {
public:
    UniformCubic() = default;
    UniformCubic(double x0, double step, std::vector<double> y) : x0_(x0), h_(step), y_(std::move(y)) {
        const std::size_t n = y_.size();
        m_.assign(n, 0.0);
        if (n < 3) return;
        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        std::vector<double> c(n, 0.0), d(n, 0.0);
        const double inv = 6.0 / (h_ * h_);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double rhs = inv * (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]);
            const double denom = 4.0 - (i > 1 ? c[i - 1] : 0.0);
            c[i] = 1.0 / denom;
            d[i] = (rhs - (i > 1 ? d[i - 1] : 0.0)) / denom;
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m_[i] = d[i] - c[i] * m_[i + 1];
            if (i == 1) break;
        }
    }

    double lo() const { return x0_; }
    double hi() const { return x0_ + h_ * static_cast<double>(y_.size() - 1); }

    /// Value and first derivative; zero outside [lo, hi].
    std::pair<double, double> eval(double x) const {
        if (y_.empty() || x < lo() || x > hi()) return {0.0, 0.0};
        double pos = (x - x0_) / h_;
        auto i = static_cast<std::size_t>(pos);
        if (i >= y_.size() - 1) i = y_.size() - 2;
        const double t = pos - static_cast<double>(i);
        const double a = 1.0 - t;
        const double y0 = y_[i], y1 = y_[i + 1], m0 = m_[i], m1 = m_[i + 1];
        const double h2 = h_ * h_;
        const double v = a * y0 + t * y1 + h2 / 6.0 * ((a * a * a - a) * m0 + (t * t * t - t) * m1);
        const double dv = (y1 - y0) / h_ + h_ / 6.0 * ((1.0 - 3.0 * a * a) * m0 + (3.0 * t * t - 1.0) * m1);
        return {v, dv};
    }

    /// Raw sample at index i (exact table value).
    double sample(std::size_t i) const { return y_[i]; }
    std::size_t samples() const { return y_.size(); }

private:
    double x0_ = 0.0;
    double h_ = 1.0;
    std::vector<double> y_;
    std::vector<double> m_;
};

inline std::vector<double> solve_dense(std::vector<std::vector<double>> A, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-300) throw SolverError("singular system in cascade initialisation");
        std::swap(A[piv], A[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r][col] / A[col][col];
            if (f == 0.0) continue;
            for (std::size_t k = col; k < n; ++k) A[r][k] -= f * A[col][k];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (std::size_t k = i + 1; k < n; ++k) acc -= A[i][k] * x[k];
        x[i] = acc / A[i][i];
    }
    return x;
}

}  // namespace detail

/// Low-pass filter of the order-N Daubechies family (2N taps, sum sqrt 2).
inline std::vector<double> daubechies_filter(int N) {
    if (N < 1 || N > 10) throw ConfigError("Daubechies order must be in 1..10, got " + std::to_string(N));
    auto h = detail::daubechies_reversed(N);
    std::reverse(h.begin(), h.end());
    return h;
}

inline constexpr int kCascadeDepth = 12;

enum class WaveletKind { Haar, Daubechies };

/// Dyadic tables of phi and psi for one Daubechies order.
struct CascadeTable {
    int order = 0;
    std::vector<double> phi;  ///< phi(i / 2^depth), i = 0..(2N-1) 2^depth
    std::vector<double> psi;  ///< psi(1 - N + i / 2^depth)
    detail::UniformCubic phi_spline;
    detail::UniformCubic psi_spline;
};

/// Run the refinement cascade for order N >= 2.
inline CascadeTable build_cascade(int N) {
    const auto h = daubechies_filter(N);
    const int len = 2 * N - 1;  // support of phi is [0, len]
    const std::size_t scale = std::size_t{1} << kCascadeDepth;
    const std::size_t n_pts = static_cast<std::size_t>(len) * scale + 1;
    auto tap = [&](long k) { return (k >= 0 && k < static_cast<long>(h.size())) ? h[static_cast<std::size_t>(k)] : 0.0; };

    // Integer values: phi(i) = sqrt2 sum_j h_{2i-j} phi(j) on the interior
    // integers, normalized so sum_i phi(i) = 1.
    const std::size_t m = static_cast<std::size_t>(len - 1);
    std::vector<std::vector<double>> A(m, std::vector<double>(m, 0.0));
    std::vector<double> rhs(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            A[i][j] = std::numbers::sqrt2 * tap(2 * static_cast<long>(i + 1) - static_cast<long>(j + 1)) - (i == j ? 1.0 : 0.0);
    std::fill(A[m - 1].begin(), A[m - 1].end(), 1.0);
    rhs[m - 1] = 1.0;
    const auto ints = detail::solve_dense(A, rhs);

    std::vector<double> phi(n_pts, 0.0);
    for (std::size_t i = 0; i < m; ++i) phi[(i + 1) * scale] = ints[i];
    // Fill level by level: points with stride 2^(depth-lev) not yet set.
    for (int lev = 1; lev <= kCascadeDepth; ++lev) {
        const std::size_t stride = scale >> lev;
        for (std::size_t idx = stride; idx < n_pts; idx += 2 * stride) {
            // x = idx / scale; 2x - k lives on the coarser level.
            double acc = 0.0;
            for (long k = 0; k < static_cast<long>(h.size()); ++k) {
                const long j = 2 * static_cast<long>(idx) - k * static_cast<long>(scale);
                if (j < 0 || j >= static_cast<long>(n_pts)) continue;
                acc += h[static_cast<std::size_t>(k)] * phi[static_cast<std::size_t>(j)];
            }
            phi[idx] = std::numbers::sqrt2 * acc;
        }
    }

    // psi(x) = sqrt2 sum_k (-1)^k h_{1-k} phi(2x - k), support [1-N, N].
    std::vector<double> psi(n_pts, 0.0);
    for (std::size_t i = 0; i < n_pts; ++i) {
        const long xs = static_cast<long>(i) + static_cast<long>(1 - N) * static_cast<long>(scale);  // x * scale
        double acc = 0.0;
        for (long k = 2 - 2 * N; k <= 1; ++k) {
            const long j = 2 * xs - k * static_cast<long>(scale);
            if (j < 0 || j >= static_cast<long>(n_pts)) continue;
            const double sign = (k % 2 == 0) ? 1.0 : -1.0;
            acc += sign * tap(1 - k) * phi[static_cast<std::size_t>(j)];
        }
        psi[i] = std::numbers::sqrt2 * acc;
    }

    CascadeTable t;
    t.order = N;
    const double step = 1.0 / static_cast<double>(scale);
    t.phi_spline = detail::UniformCubic(0.0, step, phi);
    t.psi_spline = detail::UniformCubic(static_cast<double>(1 - N), step, psi);
    t.phi = std::move(phi);
    t.psi = std::move(psi);
    return t;
}

inline std::shared_ptr<const CascadeTable> cascade_table(int N) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const CascadeTable>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[N];
    if (!slot) slot = std::make_shared<const CascadeTable>(build_cascade(N));
    return slot;
}

/// Scale function phi (sigma_S) and wavelet psi (sigma_W) with their filter.
class WaveletPair {
public:
    static WaveletPair haar() {
        WaveletPair p;
        p.kind_ = WaveletKind::Haar;
        p.order_ = 1;
        p.h_ = {1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2};
        return p;
    }

    /// Order-N Daubechies pair; N = 1 is Haar.
    static WaveletPair daubechies(int N) {
        if (N == 1) return haar();
        WaveletPair p;
        p.kind_ = WaveletKind::Daubechies;
        p.order_ = N;
        p.h_ = daubechies_filter(N);
        p.table_ = cascade_table(N);
        return p;
    }

    WaveletKind kind() const { return kind_; }
    int order() const { return order_; }
    const std::vector<double>& filter() const { return h_; }

    double scale_lo() const { return 0.0; }
    double scale_hi() const { return static_cast<double>(2 * order_ - 1); }
    double wavelet_lo() const { return static_cast<double>(1 - order_); }
    double wavelet_hi() const { return static_cast<double>(order_); }

    double scale(double x) const {
        if (kind_ == WaveletKind::Haar) return (x >= 0.0 && x < 1.0) ? 1.0 : 0.0;
        return table_->phi_spline.eval(x).first;
    }
    double wavelet(double x) const {
        if (kind_ == WaveletKind::Haar) {
            if (x >= 0.0 && x < 0.5) return 1.0;
            if (x >= 0.5 && x < 1.0) return -1.0;
            return 0.0;
        }
        return table_->psi_spline.eval(x).first;
    }
    double scale_deriv(double x) const {
        return kind_ == WaveletKind::Haar ? 0.0 : table_->phi_spline.eval(x).second;
    }
    double wavelet_deriv(double x) const {
        return kind_ == WaveletKind::Haar ? 0.0 : table_->psi_spline.eval(x).second;
    }

    /// Cascade table (null for Haar).
    const CascadeTable* table() const { return table_.get(); }

private:
    WaveletKind kind_ = WaveletKind::Haar;
    int order_ = 1;
    std::vector<double> h_;
    std::shared_ptr<const CascadeTable> table_;
};

// ---------------------------------------------------------------------------
// Activation
// ---------------------------------------------------------------------------

inline int sparsity_floor(double alpha) { return static_cast<int>(std::ceil(alpha)); }

/// True when coefficient slot j (0 = scale, 1 = wavelet, 1 + i = N_i) is pinned to zero.
inline bool pinned_slot(std::size_t j, double alpha) {
    if (j < 2) return false;
    const auto i = static_cast<int>(j - 1);
    return i < sparsity_floor(alpha);
}

/// Basis values (phi, psi, N_1..N_I) and their x-derivatives at x.
inline void activation_basis(const WaveletPair& pair, int I, double x, double* val, double* dval) {
    val[0] = pair.scale(x);
    val[1] = pair.wavelet(x);
    if (dval) {
        dval[0] = pair.scale_deriv(x);
        dval[1] = pair.wavelet_deriv(x);
    }
    for (int i = 1; i <= I; ++i) {
        val[1 + i] = bspline_eval(i, x);
        if (dval) dval[1 + i] = bspline_deriv(i, x);
    }
}

/// Coefficients of one trainable activation.
struct SplineActivation {
    int order = 0;
    double alpha = 0.0;
    std::vector<double> beta;  ///< length I + 2: (b_{-1}, b_0, b_1, ..., b_I)

    SplineActivation(int I, double a, std::vector<double> b) : order(I), alpha(a), beta(std::move(b)) {
        if (I < 0) throw ConfigError("activation order must be non-negative");
        if (beta.size() != static_cast<std::size_t>(I + 2)) {
            throw ConfigError("activation needs " + std::to_string(I + 2) + " coefficients");
        }
        for (std::size_t j = 0; j < beta.size(); ++j) {
            if (pinned_slot(j, alpha) && beta[j] != 0.0) {
                throw ConfigError("sparsity violated: coefficient of N_" + std::to_string(j - 1) +
                                  " must vanish for alpha=" + std::to_string(alpha));
            }
        }
    }
};

inline double activation_eval(const SplineActivation& act, const WaveletPair& pair, double x) {
    std::vector<double> basis(act.beta.size());
    activation_basis(pair, act.order, x, basis.data(), nullptr);
    double acc = 0.0;
    for (std::size_t j = 0; j < basis.size(); ++j)
        if (!pinned_slot(j, act.alpha)) acc += act.beta[j] * basis[j];
    return acc;
}

/// Columnwise activation on the tape: y[n, o] = sigma_{beta[:, o]}(u[n, o]).
/// u: [N, C], beta: [I + 2, C]. Pinned slots contribute nothing.
inline ad::Var activation(const ad::Var& u, const ad::Var& beta, const WaveletPair& pair, int I, double alpha) {
    ad::Tape& t = *u.tape();
    t.check_owned(u);
    t.check_owned(beta);
    const std::size_t n_rows = ad::rows_of(u), C = ad::cols_of(u);
    const std::size_t K = static_cast<std::size_t>(I + 2);
    if (beta.shape().size() != 2 || beta.shape()[0] != K || beta.shape()[1] != C) {
        throw ContractViolation("activation: coefficient shape " + ad::shape_str(beta.shape()) +
                                " does not match order " + std::to_string(I) + " and width " + std::to_string(C));
    }
    std::vector<unsigned char> active(K);
    for (std::size_t j = 0; j < K; ++j) active[j] = pinned_slot(j, alpha) ? 0 : 1;

    const auto& uv = u.value();
    const auto& bv = beta.value();
    ad::Tensor out(ad::Shape{n_rows, C});
    // Cache basis values and derivatives for the backward sweep.
    auto basis = std::make_shared<std::vector<double>>(n_rows * C * K);
    auto dbasis = std::make_shared<std::vector<double>>(n_rows * C * K);
    for (std::size_t n = 0; n < n_rows; ++n) {
        for (std::size_t c = 0; c < C; ++c) {
            const std::size_t e = n * C + c;
            double* val = basis->data() + e * K;
            double* dval = dbasis->data() + e * K;
            activation_basis(pair, I, uv[e], val, dval);
            double acc = 0.0;
            for (std::size_t j = 0; j < K; ++j)
                if (active[j]) acc += bv[j * C + c] * val[j];
            out[e] = acc;
        }
    }
    const std::size_t iu = u.id(), ib = beta.id();
    return t.push(std::move(out), {u, beta},
                  [iu, ib, n_rows, C, K, active, basis, dbasis](ad::Tape& tp, std::size_t self) {
        const auto& g = tp.grad(self);
        const auto& bv = tp.value(ib).data;
        const bool need_u = tp.needs_grad(iu), need_b = tp.needs_grad(ib);
        double* gu = need_u ? tp.grad(iu).data() : nullptr;
        double* gb = need_b ? tp.grad(ib).data() : nullptr;
        for (std::size_t n = 0; n < n_rows; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
                const std::size_t e = n * C + c;
                const double ge = g[e];
                if (ge == 0.0) continue;
                const double* val = basis->data() + e * K;
                const double* dval = dbasis->data() + e * K;
                double du = 0.0;
                for (std::size_t j = 0; j < K; ++j) {
                    if (!active[j]) continue;
                    du += bv[j * C + c] * dval[j];
                    if (need_b) gb[j * C + c] += ge * val[j];
                }
                if (need_u) gu[e] += ge * du;
            }
        }
    });
}

}  // namespace kano::spline
