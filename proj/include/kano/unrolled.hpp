#pragma once

// Picard iteration unrolled into a fixed-depth operator whose kernels are
// Res-KAN networks k(x, y) evaluated on a shared quadrature mesh:
//   v_0 = 0,  v_{j+1}(x) = sum_h int k_h(x, y) v_j(y)^h dy + v_{f0,g}(x),
//   v_{f0,g}(x) = -int k'(x, y) f_0(y) dy + w_g(x).

#include <vector>

#include "kano/autodiff.hpp"
#include "kano/elliptic.hpp"
#include "kano/reskan.hpp"

namespace kano::model {

/// Quadrature matrix Q[i][j] = k(x_i, y_j) w_j of a kernel network with 2 dim inputs.
inline std::vector<double> kernel_matrix(reskan::ResKanNet& net, const elliptic::Mesh& mesh) {
    const std::size_t n = mesh.size(), dim = mesh.dim;
    if (net.input_width() != 2 * dim || net.output_width() != 1) {
        throw ContractViolation("kernel network must map 2d inputs to one output");
    }
    ad::Tensor pairs(ad::Shape{n * n, 2 * dim});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double* row = pairs.data.data() + (i * n + j) * 2 * dim;
            for (std::size_t a = 0; a < dim; ++a) {
                row[a] = mesh.point(i)[a];
                row[dim + a] = mesh.point(j)[a];
            }
        }
    ad::Tape tape(false);
    auto k = net.forward(tape, tape.constant(std::move(pairs))).value();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) k[i * n + j] *= mesh.weights[j];
    return k;
}

class PicardUnrolledOperator {
public:
    /// kernels[h - 2] is k_h for h = 2..H; `bound` is the multiplication cube.
    PicardUnrolledOperator(const elliptic::Mesh& mesh, std::vector<reskan::ResKanNet*> kernels,
                           reskan::ResKanNet& k_prime, double bound = 10.0)
        : n_(mesh.size()), bound_(bound) {
        for (auto* k : kernels) power_kernels_.push_back(kernel_matrix(*k, mesh));
        source_kernel_ = kernel_matrix(k_prime, mesh);
    }

    std::size_t max_power() const { return power_kernels_.size() + 1; }

    /// v_J for the given source and boundary fields.
    std::vector<double> operator()(std::size_t J, const std::vector<double>& f0, const std::vector<double>& w_g) const {
        if (J < 1) throw ContractViolation("unrolled operator needs J >= 1");
        if (f0.size() != n_ || w_g.size() != n_) throw ContractViolation("field length does not match the mesh");
        std::vector<double> base(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n_; ++j) acc += source_kernel_[i * n_ + j] * f0[j];
            base[i] = w_g[i] - acc;
        }
        std::vector<double> v(n_, 0.0), next(n_);
        const int H = static_cast<int>(max_power());
        std::vector<std::vector<double>> powers(n_);
        for (std::size_t step = 0; step < J; ++step) {
            if (H >= 2)
                for (std::size_t j = 0; j < n_; ++j) powers[j] = reskan::requ_powers(v[j], H, bound_);
            for (std::size_t i = 0; i < n_; ++i) {
                double acc = base[i];
                for (std::size_t h = 0; h < power_kernels_.size(); ++h) {
                    const double* row = power_kernels_[h].data() + i * n_;
                    for (std::size_t j = 0; j < n_; ++j) acc += row[j] * powers[j][h + 1];
                }
                next[i] = acc;
            }
            v.swap(next);
        }
        return v;
    }

private:
    std::size_t n_;
    double bound_;
    std::vector<std::vector<double>> power_kernels_;
    std::vector<double> source_kernel_;
};

}  // namespace kano::model
