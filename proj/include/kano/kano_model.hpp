#pragma once

// KANO: pointwise Res-KAN lift, L blocks mixing a positional encoding, a
// Fourier-multiplier kernel path and the block input, then a pointwise
// projection to one output channel.

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kano/autodiff.hpp"
#include "kano/fft.hpp"
#include "kano/reskan.hpp"
#include "kano/rng.hpp"
#include "kano/spline.hpp"

namespace kano::model {

struct KanoConfig {
    std::size_t d = 5;          ///< spatial dimension; first two coordinates live on the grid
    std::size_t s = 32;         ///< grid side, power of two
    std::size_t width = 32;     ///< latent width W
    std::size_t blocks = 4;     ///< block count L
    std::size_t modes = 12;     ///< retained Fourier modes per axis
    std::size_t pos_width = 8;  ///< positional encoding width
    int order = 4;              ///< B-spline order I
    double alpha = 3.0;         ///< smoothness floor
    int wavelet = 4;            ///< Daubechies order of the scale/wavelet pair (1 = Haar)

    std::size_t channels() const { return d + 1; }

    void validate() const {
        if (d < 2) throw ConfigError("KANO needs d >= 2 (two grid coordinates)");
        if (!fft::is_power_of_two(s) || s < 2) throw ConfigError("grid size s must be a power of two >= 2");
        if (width == 0 || pos_width == 0) throw ConfigError("latent and positional widths must be positive");
        if (modes == 0 || 2 * modes > s) throw ConfigError("retained modes must lie in 1..s/2");
        if (alpha < 3.0 || alpha > order) throw ConfigError("KANO activations need 3 <= alpha <= I");
        if (wavelet < 1 || wavelet > 10) throw ConfigError("wavelet order must be in 1..10");
    }
};

/// Time and the non-grid coordinates (x_3, ..., x_d) of one operator input.
struct OperatorInput {
    double t = 0.0;
    std::vector<double> extra;
};

/// Grid coordinate of node index p: p / (s - 1).
inline double grid_coord(std::size_t p, std::size_t s) { return static_cast<double>(p) / static_cast<double>(s - 1); }

/// Bilinear interpolation of a row-major s x s field at (x1, x2) in [0,1]^2.
inline double bilinear(const std::vector<double>& field, std::size_t s, double x1, double x2) {
    if (!(x1 >= 0.0 && x1 <= 1.0 && x2 >= 0.0 && x2 <= 1.0)) {
        throw ExtrapolationError("query (" + std::to_string(x1) + ", " + std::to_string(x2) +
                                 ") outside the grid hull [0,1]^2");
    }
    const double scale = static_cast<double>(s - 1);
    const double px = x1 * scale, py = x2 * scale;
    auto i = static_cast<std::size_t>(px), j = static_cast<std::size_t>(py);
    if (i >= s - 1) i = s - 2;
    if (j >= s - 1) j = s - 2;
    const double fx = px - static_cast<double>(i), fy = py - static_cast<double>(j);
    const double f00 = field[i * s + j], f01 = field[i * s + j + 1];
    const double f10 = field[(i + 1) * s + j], f11 = field[(i + 1) * s + j + 1];
    return (1 - fx) * (1 - fy) * f00 + (1 - fx) * fy * f01 + fx * (1 - fy) * f10 + fx * fy * f11;
}

struct KanoBlock {
    reskan::ResKanNet positional;
    ad::Parameter spectral;
    reskan::ResKanNet mixer;
};

class KanoModel {
public:
    KanoModel() = default;

    KanoModel(KanoConfig cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        RandomStream rng(seed, stream_tag::kInit);
        const auto pair = spline::WaveletPair::daubechies(cfg_.wavelet);
        auto spec = [&](std::vector<std::size_t> widths) {
            return reskan::NetSpec{std::move(widths), cfg_.order, cfg_.alpha, pair};
        };
        const std::size_t W = cfg_.width, P = cfg_.pos_width;
        lift_ = reskan::ResKanNet(spec({cfg_.channels(), W, W}), rng, "lift");
        for (std::size_t l = 0; l < cfg_.blocks; ++l) {
            const std::string tag = "block" + std::to_string(l);
            KanoBlock b;
            b.positional = reskan::ResKanNet(spec({2, P, P}), rng, tag + ".pos");
            ad::Tensor w(fft::spectral_weight_shape(cfg_.modes, W, W));
            const double sd = 1.0 / std::sqrt(2.0 * static_cast<double>(W));
            for (auto& v : w.data) v = rng.normal(0.0, sd);
            b.spectral = ad::Parameter(tag + ".spectral", std::move(w));
            b.mixer = reskan::ResKanNet(spec({P + 2 * W, P + 2 * W, W}), rng, tag + ".mix");
            blocks_.push_back(std::move(b));
        }
        projection_ = reskan::ResKanNet(spec({W, W, 1}), rng, "proj");
        build_grid();
    }

    const KanoConfig& config() const { return cfg_; }
    std::size_t nodes() const { return cfg_.s * cfg_.s; }

    reskan::ResKanNet& lift() { return lift_; }
    reskan::ResKanNet& projection() { return projection_; }
    std::deque<KanoBlock>& blocks() { return blocks_; }

    /// Every trainable array in a fixed order.
    std::vector<ad::Parameter*> parameters() {
        std::vector<ad::Parameter*> out;
        auto add = [&](reskan::ResKanNet& n) {
            for (auto& p : n.parameters()) out.push_back(&p);
        };
        add(lift_);
        for (auto& b : blocks_) {
            add(b.positional);
            out.push_back(&b.spectral);
            add(b.mixer);
        }
        add(projection_);
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto* p : parameters()) n += p->value.size();
        return n;
    }

    /// Per-node channels (t, x1, x2, x3, ..., x_d) as an [s*s, d+1] tensor.
    ad::Tensor input_channels(const OperatorInput& in) const {
        if (in.extra.size() != cfg_.d - 2) {
            throw ContractViolation("operator input carries " + std::to_string(in.extra.size()) +
                                    " extra coordinates, model expects " + std::to_string(cfg_.d - 2));
        }
        const std::size_t C = cfg_.channels();
        ad::Tensor phi(ad::Shape{nodes(), C});
        for (std::size_t n = 0; n < nodes(); ++n) {
            phi[n * C] = in.t;
            phi[n * C + 1] = coords_[2 * n];
            phi[n * C + 2] = coords_[2 * n + 1];
            for (std::size_t k = 0; k < in.extra.size(); ++k) phi[n * C + 3 + k] = in.extra[k];
        }
        return phi;
    }

    /// Field output as [s*s, 1] on the tape.
    ad::Var forward(ad::Tape& tape, const OperatorInput& in) { return forward_channels(tape, tape.constant(input_channels(in))); }

    /// Forward from explicit channels; channels must be [s*s, d+1].
    ad::Var forward_channels(ad::Tape& tape, const ad::Var& phi) {
        if (phi.shape().size() != 2 || phi.shape()[0] != nodes() || phi.shape()[1] != cfg_.channels()) {
            throw ContractViolation("KANO input " + ad::shape_str(phi.shape()) + " does not match grid " +
                                    std::to_string(cfg_.s) + "x" + std::to_string(cfg_.s) + " with " +
                                    std::to_string(cfg_.channels()) + " channels");
        }
        ad::Var v = lift_.forward(tape, phi);
        const ad::Var xy = tape.constant(ad::Tensor(ad::Shape{nodes(), 2}, coords_));
        for (auto& b : blocks_) {
            const ad::Var v_pos = b.positional.forward(tape, xy);
            const ad::Var v_kf = spectral_path(tape, v, b);
            v = b.mixer.forward(tape, ad::concat_cols({v_pos, v_kf, v}));
        }
        return projection_.forward(tape, v);
    }

    /// Kernel path ifft(W . fft(v)) of one block, [s*s, W] -> [s*s, W].
    ad::Var spectral_path(ad::Tape& tape, const ad::Var& v, KanoBlock& b) {
        const std::size_t s = cfg_.s, W = cfg_.width;
        const ad::Var spec = fft::fft2_forward(ad::reshape(v, {s, s, W}));
        const ad::Var mixed = fft::spectral_mul(spec, tape.param(b.spectral), cfg_.modes);
        return ad::reshape(fft::fft2_inverse(mixed), {s * s, W});
    }

    /// Detached output field, row-major s x s.
    std::vector<double> field(const OperatorInput& in) {
        ad::Tape tape(false);
        return forward(tape, in).value();
    }

    /// Bilinear read-out of the field at x = (x1, ..., x_d).
    double query(double t, const std::vector<double>& x) {
        if (x.size() != cfg_.d) throw ContractViolation("query point must have d coordinates");
        if (!(x[0] >= 0.0 && x[0] <= 1.0 && x[1] >= 0.0 && x[1] <= 1.0)) {
            throw ExtrapolationError("query outside the grid hull");
        }
        OperatorInput in{t, std::vector<double>(x.begin() + 2, x.end())};
        return bilinear(field(in), cfg_.s, x[0], x[1]);
    }

    /// Node coordinates (x1, x2) interleaved, row-major over the grid.
    const std::vector<double>& coords() const { return coords_; }

    // -----------------------------------------------------------------------
    // Checkpoints: text manifest + little-endian float64 payload (path + ".bin")
    // -----------------------------------------------------------------------

    void save(const std::string& path) {
        std::ofstream man(path);
        if (!man) throw IoError("cannot write checkpoint manifest " + path);
        man << "kano-checkpoint 1\n";
        man << "d " << cfg_.d << "\ns " << cfg_.s << "\nwidth " << cfg_.width << "\nblocks " << cfg_.blocks
            << "\nmodes " << cfg_.modes << "\npos_width " << cfg_.pos_width << "\norder " << cfg_.order
            << "\nalpha " << format_double(cfg_.alpha) << "\nwavelet " << cfg_.wavelet << "\n";
        auto params = parameters();
        man << "params " << params.size() << "\n";
        std::size_t offset = 0;
        for (auto* p : params) {
            man << "param " << p->name << " " << p->value.shape.size();
            for (auto e : p->value.shape) man << " " << e;
            man << " " << offset << "\n";
            offset += p->value.size();
        }
        man << "total " << offset << "\n";
        if (!man) throw IoError("failed writing " + path);

        std::ofstream bin(path + ".bin", std::ios::binary);
        if (!bin) throw IoError("cannot write checkpoint payload " + path + ".bin");
        for (auto* p : params)
            for (double v : p->value.data) write_le(bin, v);
        if (!bin) throw IoError("failed writing " + path + ".bin");
    }

    static KanoModel load(const std::string& path) {
        std::ifstream man(path);
        if (!man) throw IoError("missing checkpoint manifest " + path);
        std::string magic;
        int version = 0;
        man >> magic >> version;
        if (magic != "kano-checkpoint" || version != 1) throw IoError("not a checkpoint manifest: " + path);
        KanoConfig cfg;
        std::map<std::string, std::string> kv;
        std::string key;
        std::size_t n_params = 0;
        while (man >> key) {
            if (key == "params") {
                man >> n_params;
                break;
            }
            std::string val;
            man >> val;
            kv[key] = val;
        }
        try {
            cfg.d = std::stoul(kv.at("d"));
            cfg.s = std::stoul(kv.at("s"));
            cfg.width = std::stoul(kv.at("width"));
            cfg.blocks = std::stoul(kv.at("blocks"));
            cfg.modes = std::stoul(kv.at("modes"));
            cfg.pos_width = std::stoul(kv.at("pos_width"));
            cfg.order = std::stoi(kv.at("order"));
            cfg.alpha = std::stod(kv.at("alpha"));
            cfg.wavelet = std::stoi(kv.at("wavelet"));
        } catch (const std::exception&) {
            throw IoError("checkpoint manifest " + path + " lacks a hyperparameter");
        }
        KanoModel model(cfg, 0);
        auto params = model.parameters();
        if (n_params != params.size()) throw IoError("checkpoint parameter count mismatch");
        std::vector<std::size_t> offsets;
        std::size_t expected_offset = 0;
        for (auto* p : params) {
            std::string tag, name;
            std::size_t ndim = 0;
            man >> tag >> name >> ndim;
            if (tag != "param" || name != p->name) throw IoError("unexpected checkpoint entry " + name);
            ad::Shape shape(ndim);
            for (auto& e : shape) man >> e;
            std::size_t offset = 0;
            man >> offset;
            if (!man || shape != p->value.shape || ad::numel(shape) != p->value.size() || offset != expected_offset) {
                throw IoError("shape mismatch for " + name);
            }
            expected_offset += p->value.size();
        }
        std::string total_tag;
        std::size_t total = 0;
        man >> total_tag >> total;
        if (total_tag != "total" || total != expected_offset) throw IoError("checkpoint total size mismatch");

        std::ifstream bin(path + ".bin", std::ios::binary | std::ios::ate);
        if (!bin) throw IoError("missing checkpoint payload " + path + ".bin");
        if (static_cast<std::size_t>(bin.tellg()) != total * 8) throw IoError("checkpoint payload has wrong length");
        bin.seekg(0);
        for (auto* p : params)
            for (auto& v : p->value.data) v = read_le(bin);
        if (!bin) throw IoError("failed reading checkpoint payload");
        model.lift_.validate();
        model.projection_.validate();
        for (auto& b : model.blocks_) {
            b.positional.validate();
            b.mixer.validate();
        }
        return model;
    }

private:
    void build_grid() {
        const std::size_t s = cfg_.s;
        coords_.resize(2 * s * s);
        for (std::size_t p = 0; p < s; ++p)
            for (std::size_t q = 0; q < s; ++q) {
                coords_[2 * (p * s + q)] = grid_coord(p, s);
                coords_[2 * (p * s + q) + 1] = grid_coord(q, s);
            }
    }

    static std::string format_double(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

    static void write_le(std::ostream& os, double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
        os.write(buf, 8);
    }

    static double read_le(std::istream& is) {
        unsigned char buf[8] = {};
        is.read(reinterpret_cast<char*>(buf), 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= std::uint64_t{buf[i]} << (8 * i);
        return std::bit_cast<double>(bits);
    }

    KanoConfig cfg_;
    reskan::ResKanNet lift_;
    std::deque<KanoBlock> blocks_;
    reskan::ResKanNet projection_;
    std::vector<double> coords_;
};

}  // namespace kano::model
