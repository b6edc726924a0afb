#pragma once

// FFTW-backed 2D transforms over square s x s grids with a trailing channel
// axis, plus tape-differentiable forward/inverse transforms and the spectral
// multiplier used by the KANO kernel path.
//
// Field layout: [s, s, c] row-major (axis 0 = x1 index, axis 1 = x2 index,
// channels contiguous). Spectra on the tape are [s, s, c, 2] with the last
// axis holding (re, im).

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include <fftw3.h>

#include "kano/autodiff.hpp"

namespace kano::fft {

using cplx = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline void require_power_of_two(std::size_t s) {
    if (!is_power_of_two(s)) {
        throw ConfigError("grid size must be a power of two, got " + std::to_string(s));
    }
}

namespace detail {

struct PlanKey {
    std::size_t s, c;
    bool inverse;
    bool operator<(const PlanKey& o) const { return std::tie(s, c, inverse) < std::tie(o.s, o.c, o.inverse); }
};

// FFTW planning is not thread safe; plans are built once per shape and reused.
inline fftw_plan cached_plan(std::size_t s, std::size_t c, bool inverse) {
    static std::mutex mu;
    static std::map<PlanKey, fftw_plan> plans;
    const std::lock_guard<std::mutex> lock(mu);
    auto it = plans.find({s, c, inverse});
    if (it != plans.end()) return it->second;
    std::vector<cplx> scratch(s * s * c);
    const int n[2] = {static_cast<int>(s), static_cast<int>(s)};
    const int ci = static_cast<int>(c);
    auto* ptr = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_many_dft(2, n, ci, ptr, nullptr, ci, 1, ptr, nullptr, ci, 1,
                                        inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw SolverError("FFTW could not build a plan");
    plans.emplace(PlanKey{s, c, inverse}, plan);
    return plan;
}

}  // namespace detail

/// Unnormalized 2D transform of an [s, s, c] complex buffer along both grid axes.
inline void fft2_inplace(std::vector<cplx>& buf, std::size_t s, std::size_t c, bool inverse) {
    require_power_of_two(s);
    if (buf.size() != s * s * c) throw ContractViolation("fft2: buffer size does not match [s, s, c]");
    auto* ptr = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_execute_dft(detail::cached_plan(s, c, inverse), ptr, ptr);
}

/// Complex array over (modes_x, modes_y, channels) with split storage.
struct ComplexGrid {
    std::array<std::size_t, 3> shape{};
    std::vector<double> re;
    std::vector<double> im;

    ComplexGrid() = default;
    explicit ComplexGrid(std::array<std::size_t, 3> sh)
        : shape(sh), re(sh[0] * sh[1] * sh[2], 0.0), im(sh[0] * sh[1] * sh[2], 0.0) {}

    std::size_t index(std::size_t kx, std::size_t ky, std::size_t ch) const {
        return (kx * shape[1] + ky) * shape[2] + ch;
    }
    cplx at(std::size_t kx, std::size_t ky, std::size_t ch) const {
        const auto i = index(kx, ky, ch);
        return {re[i], im[i]};
    }
};

namespace detail {

inline std::size_t grid_side(const ad::Shape& shape, const char* op) {
    if (shape.size() != 3 || shape[0] != shape[1]) {
        throw ContractViolation(std::string(op) + ": expected an [s, s, c] field, got " + ad::shape_str(shape));
    }
    require_power_of_two(shape[0]);
    return shape[0];
}

}  // namespace detail

/// Forward transform of a detached real field.
inline ComplexGrid fft2(const ad::Tensor& field) {
    const std::size_t s = detail::grid_side(field.shape, "fft2");
    const std::size_t c = field.shape[2];
    std::vector<cplx> buf(field.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = field[i];
    fft2_inplace(buf, s, c, false);
    ComplexGrid out({s, s, c});
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out.re[i] = buf[i].real();
        out.im[i] = buf[i].imag();
    }
    return out;
}

/// Real part of the normalized inverse transform.
inline ad::Tensor ifft2(const ComplexGrid& spec) {
    const std::size_t s = spec.shape[0];
    if (spec.shape[1] != s) throw ContractViolation("ifft2: spectrum must be square");
    require_power_of_two(s);
    const std::size_t c = spec.shape[2];
    std::vector<cplx> buf(spec.re.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = {spec.re[i], spec.im[i]};
    fft2_inplace(buf, s, c, true);
    ad::Tensor out(ad::Shape{s, s, c});
    const double norm = 1.0 / static_cast<double>(s * s);
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * norm;
    return out;
}

/// Tape-differentiable forward transform: [s, s, c] -> [s, s, c, 2].
inline ad::Var fft2_forward(const ad::Var& field) {
    ad::Tape& t = *field.tape();
    t.check_owned(field);
    const std::size_t s = detail::grid_side(field.shape(), "fft2_forward");
    const std::size_t c = field.shape()[2];
    const auto& v = field.value();
    std::vector<cplx> buf(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) buf[i] = v[i];
    fft2_inplace(buf, s, c, false);
    ad::Tensor out(ad::Shape{s, s, c, 2});
    for (std::size_t i = 0; i < buf.size(); ++i) {
        out[2 * i] = buf[i].real();
        out[2 * i + 1] = buf[i].imag();
    }
    const std::size_t iv = field.id();
    return t.push(std::move(out), {field}, [iv, s, c](ad::Tape& tp, std::size_t self) {
        if (!tp.needs_grad(iv)) return;
        // d/dx_n sum_k (g_re Re y_k + g_im Im y_k) = Re( sum_k g_k e^{+i w k n} ).
        const auto& g = tp.grad(self);
        std::vector<cplx> buf(s * s * c);
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = {g[2 * i], g[2 * i + 1]};
        fft2_inplace(buf, s, c, true);
        auto& gv = tp.grad(iv);
        for (std::size_t i = 0; i < buf.size(); ++i) gv[i] += buf[i].real();
    });
}

/// Tape-differentiable inverse: real part of the normalized inverse transform,
/// [s, s, c, 2] -> [s, s, c].
inline ad::Var fft2_inverse(const ad::Var& spectrum) {
    ad::Tape& t = *spectrum.tape();
    t.check_owned(spectrum);
    const auto& sh = spectrum.shape();
    if (sh.size() != 4 || sh[3] != 2) {
        throw ContractViolation("fft2_inverse: expected [s, s, c, 2], got " + ad::shape_str(sh));
    }
    const std::size_t s = detail::grid_side(ad::Shape{sh[0], sh[1], sh[2]}, "fft2_inverse");
    const std::size_t c = sh[2];
    const auto& v = spectrum.value();
    std::vector<cplx> buf(s * s * c);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = {v[2 * i], v[2 * i + 1]};
    fft2_inplace(buf, s, c, true);
    const double norm = 1.0 / static_cast<double>(s * s);
    ad::Tensor out(ad::Shape{s, s, c});
    for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * norm;
    const std::size_t iv = spectrum.id();
    return t.push(std::move(out), {spectrum}, [iv, s, c, norm](ad::Tape& tp, std::size_t self) {
        if (!tp.needs_grad(iv)) return;
        const auto& g = tp.grad(self);
        std::vector<cplx> buf(s * s * c);
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = g[i];
        fft2_inplace(buf, s, c, false);
        auto& gv = tp.grad(iv);
        for (std::size_t i = 0; i < buf.size(); ++i) {
            gv[2 * i] += buf[i].real() * norm;
            gv[2 * i + 1] += buf[i].imag() * norm;
        }
    });
}

/// Shape of the multiplier tensor for `modes` retained modes per axis.
inline ad::Shape spectral_weight_shape(std::size_t modes, std::size_t cin, std::size_t cout) {
    return {2 * modes - 1, modes, cin, cout, 2};
}

/// Learnable spectral multiplier on the half plane
/// H = {(kx, ky) : |kx| < modes, 0 <= ky < modes}:
///   Y(k)[o] = sum_c W(k)[c, o] X(k)[c]   for k in H,
/// extended to -H by conjugate symmetry so the inverse transform of the result
/// is the spectrum of a real field. Modes outside H +- are zeroed.
///
/// spectrum: [s, s, cin, 2]; weights: [2 modes - 1, modes, cin, cout, 2].
inline ad::Var spectral_mul(const ad::Var& spectrum, const ad::Var& weights, std::size_t modes) {
    ad::Tape& t = *spectrum.tape();
    t.check_owned(spectrum);
    t.check_owned(weights);
    const auto& sh = spectrum.shape();
    if (sh.size() != 4 || sh[3] != 2 || sh[0] != sh[1]) {
        throw ContractViolation("spectral_mul: expected [s, s, c, 2] spectrum, got " + ad::shape_str(sh));
    }
    const std::size_t s = sh[0], cin = sh[2];
    if (modes == 0 || 2 * modes > s) {
        throw ConfigError("retained modes must satisfy 1 <= modes <= s/2");
    }
    const auto& wsh = weights.shape();
    if (wsh.size() != 5 || wsh[0] != 2 * modes - 1 || wsh[1] != modes || wsh[2] != cin || wsh[4] != 2) {
        throw ContractViolation("spectral_mul: weight shape " + ad::shape_str(wsh) + " does not match modes " +
                                std::to_string(modes) + " and input width " + std::to_string(cin));
    }
    const std::size_t cout = wsh[3];
    const auto& X = spectrum.value();
    const auto& W = weights.value();
    ad::Tensor out(ad::Shape{s, s, cout, 2});
    const auto m = static_cast<long>(modes);
    const auto sl = static_cast<long>(s);
    auto wrap = [sl](long k) { return static_cast<std::size_t>((k % sl + sl) % sl); };

    std::vector<cplx> y(cout);
    for (long kx = -(m - 1); kx <= m - 1; ++kx) {
        for (long ky = 0; ky < m; ++ky) {
            const std::size_t px = wrap(kx), py = wrap(ky);
            const std::size_t a = static_cast<std::size_t>(kx + m - 1), b = static_cast<std::size_t>(ky);
            std::fill(y.begin(), y.end(), cplx{});
            const std::size_t xbase = (px * s + py) * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const cplx xv{X[2 * (xbase + ci)], X[2 * (xbase + ci) + 1]};
                const std::size_t wbase = ((a * modes + b) * cin + ci) * cout;
                for (std::size_t o = 0; o < cout; ++o) {
                    const cplx wv{W[2 * (wbase + o)], W[2 * (wbase + o) + 1]};
                    y[o] += wv * xv;
                }
            }
            const std::size_t obase = (px * s + py) * cout;
            for (std::size_t o = 0; o < cout; ++o) {
                out[2 * (obase + o)] = y[o].real();
                out[2 * (obase + o) + 1] = y[o].imag();
            }
            if (ky > 0) {
                const std::size_t nbase = (wrap(-kx) * s + wrap(-ky)) * cout;
                for (std::size_t o = 0; o < cout; ++o) {
                    out[2 * (nbase + o)] = y[o].real();
                    out[2 * (nbase + o) + 1] = -y[o].imag();
                }
            }
        }
    }

    const std::size_t ix = spectrum.id(), iw = weights.id();
    return t.push(std::move(out), {spectrum, weights},
                  [ix, iw, s, cin, cout, modes](ad::Tape& tp, std::size_t self) {
        const auto& G = tp.grad(self);
        const auto& X = tp.value(ix).data;
        const auto& W = tp.value(iw).data;
        const bool need_x = tp.needs_grad(ix), need_w = tp.needs_grad(iw);
        double* gx = need_x ? tp.grad(ix).data() : nullptr;
        double* gw = need_w ? tp.grad(iw).data() : nullptr;
        const auto m = static_cast<long>(modes);
        const auto sl = static_cast<long>(s);
        auto wrap = [sl](long k) { return static_cast<std::size_t>((k % sl + sl) % sl); };
        std::vector<cplx> gy(cout);
        for (long kx = -(m - 1); kx <= m - 1; ++kx) {
            for (long ky = 0; ky < m; ++ky) {
                const std::size_t px = wrap(kx), py = wrap(ky);
                const std::size_t a = static_cast<std::size_t>(kx + m - 1), b = static_cast<std::size_t>(ky);
                const std::size_t obase = (px * s + py) * cout;
                for (std::size_t o = 0; o < cout; ++o) gy[o] = {G[2 * (obase + o)], G[2 * (obase + o) + 1]};
                if (ky > 0) {
                    const std::size_t nbase = (wrap(-kx) * s + wrap(-ky)) * cout;
                    for (std::size_t o = 0; o < cout; ++o)
                        gy[o] += cplx{G[2 * (nbase + o)], -G[2 * (nbase + o) + 1]};
                }
                const std::size_t xbase = (px * s + py) * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const cplx xv{X[2 * (xbase + ci)], X[2 * (xbase + ci) + 1]};
                    const std::size_t wbase = ((a * modes + b) * cin + ci) * cout;
                    cplx acc{};
                    for (std::size_t o = 0; o < cout; ++o) {
                        const cplx wv{W[2 * (wbase + o)], W[2 * (wbase + o) + 1]};
                        if (need_x) acc += std::conj(wv) * gy[o];
                        if (need_w) {
                            const cplx gwv = std::conj(xv) * gy[o];
                            gw[2 * (wbase + o)] += gwv.real();
                            gw[2 * (wbase + o) + 1] += gwv.imag();
                        }
                    }
                    if (need_x) {
                        gx[2 * (xbase + ci)] += acc.real();
                        gx[2 * (xbase + ci) + 1] += acc.imag();
                    }
                }
            }
        }
    });
}

}  // namespace kano::fft
