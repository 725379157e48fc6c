// Convolutional residual neural receiver: post-FFT grid in, per-bit LLR grid
// out (LLR > 0 means bit 0, matching the classical demapper).
//
// In ptq/qat modes every conv weight and bias tensor passes through exactly
// one fake-quantization operator per forward. Kernel quantizers follow the
// configured granularity (per-channel means the conv output-channel axis);
// bias quantizers are always per-tensor, since a per-channel bias slice
// would be a single scalar whose min/max calibration collapses. Weight
// updates during QAT land on full-precision master copies; only the forward
// sees quantized values.

#pragma once

#include <fstream>

#include "qrx/link.hpp"
#include "qrx/optim.hpp"
#include "qrx/tape.hpp"

namespace qrx {

enum class QuantMode : std::uint8_t { Fp32 = 0, Ptq = 1, Qat = 2 };

inline const char* quant_mode_name(QuantMode m) {
    switch (m) {
        case QuantMode::Fp32: return "fp32";
        case QuantMode::Ptq: return "ptq";
        case QuantMode::Qat: return "qat";
    }
    return "?";
}

struct NrxConfig {
    int num_blocks = 4;
    int width = 32;
    int kernel = 3;
    bool include_noise_plane = true;
    int in_planes = 5;   // 2 * n_rx (+ noise plane)
    int out_planes = 2;  // bits per symbol
    QuantMode quant_mode = QuantMode::Fp32;
    QuantSpec quant_spec{8, Granularity::PerTensor};

    void validate() const {
        if (num_blocks < 1) throw ConfigError("num_blocks must be >= 1");
        if (width < 2) throw ConfigError("width must be >= 2");
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd and positive");
        if (in_planes < 1 || out_planes < 1) throw ConfigError("plane counts must be positive");
        if (quant_mode != QuantMode::Fp32) quant_spec.validate();
    }

    static NrxConfig for_link(const LinkConfig& link, int blocks, int width_,
                              bool noise_plane = true) {
        NrxConfig cfg;
        cfg.num_blocks = blocks;
        cfg.width = width_;
        cfg.include_noise_plane = noise_plane;
        cfg.in_planes = 2 * link.n_rx + (noise_plane ? 1 : 0);
        cfg.out_planes = link.bits_per_symbol;
        return cfg;
    }
};

// Accumulates tape leaf ids of trainable tensors so gradients can be copied
// back after backward().
template <typename T>
struct TapeBinding {
    std::vector<std::pair<Tensor<T>*, typename Tape<T>::Id>> entries;

    typename Tape<T>::Id bind(Tape<T>& tape, Tensor<T>& t) {
        const auto id = tape.leaf(t, t.requires_grad);
        if (t.requires_grad) entries.push_back({&t, id});
        return id;
    }

    void harvest(Tape<T>& tape) {
        for (auto& [tensor, id] : entries) {
            const auto& g = tape.grad(id);
            for (std::size_t i = 0; i < tensor->grad.size(); ++i)
                tensor->grad[i] += g.data[i];
        }
    }
};

template <typename T>
struct NrxModel {
    struct Layer {
        std::string name;
        Tensor<T> weight;   // [K, C, R, S]
        Tensor<T> bias;     // [K]
        Tensor<T> w_alpha, w_beta;  // [G]; empty until quantizers attach
        Tensor<T> b_alpha, b_beta;  // [1]
        bool quantized() const { return w_alpha.numel() > 0; }
    };

    NrxConfig cfg;
    std::vector<Layer> layers;

    static NrxModel init(const NrxConfig& config, Rng& rng) {
        config.validate();
        NrxModel model;
        model.cfg = config;
        auto add = [&](const std::string& name, int out_c, int in_c) {
            Layer l;
            l.name = name;
            const T stddev =
                static_cast<T>(std::sqrt(2.0 / (in_c * config.kernel * config.kernel)));
            l.weight = Tensor<T>::randn({out_c, in_c, config.kernel, config.kernel}, rng, stddev);
            l.weight.set_requires_grad(true);
            l.bias = Tensor<T>({out_c});
            l.bias.set_requires_grad(true);
            model.layers.push_back(std::move(l));
        };
        add("in", config.width, config.in_planes);
        for (int b = 1; b <= config.num_blocks; ++b) {
            add("block" + std::to_string(b) + ".conv1", config.width, config.width);
            add("block" + std::to_string(b) + ".conv2", config.width, config.width);
        }
        add("out", config.out_planes, config.width);
        return model;
    }

    // PTQ initialization per layer: min/max calibration, then grid alignment
    // so the zero-zero-point grid covers the calibrated interval (otherwise
    // the integer clamp would lop off the wider tail of asymmetric weight
    // distributions). In qat mode the bounds become trainable.
    void attach_quantizers(const QuantSpec& spec, QuantMode mode) {
        if (mode == QuantMode::Fp32) throw ConfigError("attach_quantizers: mode must be ptq or qat");
        if (cfg.quant_mode != QuantMode::Fp32)
            throw ConfigError("attach_quantizers: quantizers already attached");
        spec.validate();
        const bool learnable = (mode == QuantMode::Qat);
        for (auto& l : layers) {
            auto wq = grid_aligned(calibrate_ptq(l.weight, spec));
            l.w_alpha = Tensor<T>({static_cast<std::int64_t>(wq.alpha.size())}, wq.alpha);
            l.w_beta = Tensor<T>({static_cast<std::int64_t>(wq.beta.size())}, wq.beta);
            QuantSpec bias_spec = spec;
            bias_spec.granularity = Granularity::PerTensor;
            auto bq = grid_aligned(calibrate_ptq(l.bias, bias_spec));
            l.b_alpha = Tensor<T>({1}, bq.alpha);
            l.b_beta = Tensor<T>({1}, bq.beta);
            l.w_alpha.set_requires_grad(learnable);
            l.w_beta.set_requires_grad(learnable);
            l.b_alpha.set_requires_grad(learnable);
            l.b_beta.set_requires_grad(learnable);
        }
        cfg.quant_mode = mode;
        cfg.quant_spec = spec;
    }

    QuantSpec bias_spec() const {
        QuantSpec s = cfg.quant_spec;
        s.granularity = Granularity::PerTensor;
        return s;
    }

    // Forward-effective tensors: fake-quantized in ptq/qat, raw in fp32.
    Tensor<T> effective_weight(const Layer& l) const {
        if (cfg.quant_mode == QuantMode::Fp32) return l.weight;
        FakeQuantizer<T> q{cfg.quant_spec, l.w_alpha.data, l.w_beta.data};
        return fake_quant_forward(l.weight, q);
    }

    Tensor<T> effective_bias(const Layer& l) const {
        if (cfg.quant_mode == QuantMode::Fp32) return l.bias;
        FakeQuantizer<T> q{bias_spec(), l.b_alpha.data, l.b_beta.data};
        return fake_quant_forward(l.bias, q);
    }

    // Evaluation path, no gradient recording.
    Tensor<T> forward(const Tensor<T>& features) const {
        Tensor<T> h = relu_forward(
            conv2d_forward(features, effective_weight(layers[0]), effective_bias(layers[0]),
                           Padding::Same));
        for (int b = 0; b < cfg.num_blocks; ++b) {
            const Layer& c1 = layers[1 + 2 * b];
            const Layer& c2 = layers[2 + 2 * b];
            Tensor<T> t = conv2d_forward(h, effective_weight(c1), effective_bias(c1), Padding::Same);
            t = relu_forward(t);
            t = conv2d_forward(t, effective_weight(c2), effective_bias(c2), Padding::Same);
            for (std::int64_t i = 0; i < h.numel(); ++i) t.data[i] += h.data[i];
            h = std::move(t);
        }
        const Layer& out = layers.back();
        return conv2d_forward(h, effective_weight(out), effective_bias(out), Padding::Same);
    }

    // Training path. ste_linearized replaces the rounding stage by plain
    // clipping so finite differences can probe the STE gradient field.
    typename Tape<T>::Id forward_tape(Tape<T>& tape, typename Tape<T>::Id features,
                                      TapeBinding<T>& binding, bool ste_linearized = false) {
        auto eff = [&](Layer& l) {
            auto w = binding.bind(tape, l.weight);
            auto b = binding.bind(tape, l.bias);
            if (cfg.quant_mode == QuantMode::Fp32) return std::pair{w, b};
            auto wq = tape.fake_quant(w, binding.bind(tape, l.w_alpha),
                                      binding.bind(tape, l.w_beta), cfg.quant_spec,
                                      ste_linearized);
            auto bq = tape.fake_quant(b, binding.bind(tape, l.b_alpha),
                                      binding.bind(tape, l.b_beta), bias_spec(), ste_linearized);
            return std::pair{wq, bq};
        };
        auto [w0, b0] = eff(layers[0]);
        auto h = tape.relu(tape.conv2d(features, w0, b0, Padding::Same));
        for (int b = 0; b < cfg.num_blocks; ++b) {
            auto [w1, b1] = eff(layers[1 + 2 * b]);
            auto [w2, b2] = eff(layers[2 + 2 * b]);
            auto t = tape.conv2d(tape.relu(tape.conv2d(h, w1, b1, Padding::Same)), w2, b2,
                                 Padding::Same);
            h = tape.residual_add(t, h);
        }
        auto [wo, bo] = eff(layers.back());
        return tape.conv2d(h, wo, bo, Padding::Same);
    }

    std::vector<NamedParam<T>> parameters() {
        std::vector<NamedParam<T>> out;
        for (auto& l : layers) {
            out.push_back({l.name + ".weight", &l.weight});
            out.push_back({l.name + ".bias", &l.bias});
            if (l.quantized() && cfg.quant_mode == QuantMode::Qat && l.w_alpha.requires_grad) {
                out.push_back({l.name + ".w_alpha", &l.w_alpha});
                out.push_back({l.name + ".w_beta", &l.w_beta});
                out.push_back({l.name + ".b_alpha", &l.b_alpha});
                out.push_back({l.name + ".b_beta", &l.b_beta});
            }
        }
        return out;
    }

    // Keeps beta >= alpha + floor after optimizer steps (midpoint split).
    // Returns the number of projected bound pairs.
    int project_bounds(T floor = T(1e-6)) {
        if (cfg.quant_mode != QuantMode::Qat) return 0;
        int count = 0;
        auto fix = [&](Tensor<T>& alpha, Tensor<T>& beta) {
            for (std::int64_t i = 0; i < alpha.numel(); ++i) {
                if (beta.data[i] < alpha.data[i] + floor) {
                    const T mid = (alpha.data[i] + beta.data[i]) / T(2);
                    alpha.data[i] = mid - floor / T(2);
                    beta.data[i] = mid + floor / T(2);
                    ++count;
                }
            }
        };
        for (auto& l : layers) {
            if (!l.quantized()) continue;
            fix(l.w_alpha, l.w_beta);
            fix(l.b_alpha, l.b_beta);
        }
        return count;
    }

    std::int64_t weight_count() const {
        std::int64_t n = 0;
        for (const auto& l : layers) n += l.weight.numel() + l.bias.numel();
        return n;
    }
};

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

// Planes: per rx antenna (Re, Im), then an optional constant log(sigma^2)
// plane. Output [1, planes, n_sym, n_sc]; batches are built by stacking.
template <typename T>
Tensor<T> featurize(const ReceivedGrid& y, double noise_var, bool include_noise_plane) {
    const int planes = 2 * y.n_rx + (include_noise_plane ? 1 : 0);
    Tensor<T> out({1, planes, y.n_sym, y.n_sc});
    const std::int64_t hw = static_cast<std::int64_t>(y.n_sym) * y.n_sc;
    for (int rx = 0; rx < y.n_rx; ++rx) {
        for (std::int64_t i = 0; i < hw; ++i) {
            const cplx v = y.y[static_cast<std::size_t>(rx) * hw + i];
            out.data[(2 * rx) * hw + i] = static_cast<T>(v.real());
            out.data[(2 * rx + 1) * hw + i] = static_cast<T>(v.imag());
        }
    }
    if (include_noise_plane) {
        const T lv = static_cast<T>(std::log(noise_var));
        for (std::int64_t i = 0; i < hw; ++i) out.data[(2 * y.n_rx) * hw + i] = lv;
    }
    return out;
}

// Inverse of the I/Q planes (noise plane ignored).
template <typename T>
ReceivedGrid defeaturize(const Tensor<T>& features, int n_rx) {
    const std::int64_t n_sym = features.shape[2], n_sc = features.shape[3];
    ReceivedGrid y(n_rx, static_cast<int>(n_sym), static_cast<int>(n_sc));
    const std::int64_t hw = n_sym * n_sc;
    for (int rx = 0; rx < n_rx; ++rx)
        for (std::int64_t i = 0; i < hw; ++i)
            y.y[static_cast<std::size_t>(rx) * hw + i] =
                cplx(features.data[(2 * rx) * hw + i], features.data[(2 * rx + 1) * hw + i]);
    return y;
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& samples) {
    if (samples.empty()) throw ConfigError("stack_batch: empty batch");
    Shape shape = samples[0].shape;
    shape[0] = static_cast<std::int64_t>(samples.size());
    Tensor<T> out(shape);
    const std::int64_t per = samples[0].numel();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].shape != samples[0].shape)
            throw ShapeError("stack_batch: inconsistent sample shapes");
        std::copy(samples[i].data.begin(), samples[i].data.end(),
                  out.data.begin() + static_cast<std::int64_t>(i) * per);
    }
    return out;
}

// Flat positions of payload bit b within one [M, n_sym, n_sc] LLR grid,
// scan order matching build_grid: data cell r carries bits [r*M, (r+1)*M).
inline std::vector<std::int64_t> payload_gather_indices(const LinkConfig& cfg) {
    const auto cells = data_cells(cfg);
    std::vector<std::int64_t> idx;
    idx.reserve(cells.size() * static_cast<std::size_t>(cfg.bits_per_symbol));
    const std::int64_t hw = static_cast<std::int64_t>(cfg.n_sym) * cfg.n_sc;
    for (const auto& [n, k] : cells)
        for (int b = 0; b < cfg.bits_per_symbol; ++b)
            idx.push_back(b * hw + static_cast<std::int64_t>(n) * cfg.n_sc + k);
    return idx;
}

// Payload LLRs from a single-sample LLR grid.
template <typename T>
std::vector<double> llr_grid_to_payload(const Tensor<T>& llr_grid, const LinkConfig& cfg) {
    const auto idx = payload_gather_indices(cfg);
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out[i] = static_cast<double>(llr_grid.data[idx[i]]);
    return out;
}

// Neural receiver as a drop-in LLR source for the decode chain.
template <typename T>
std::vector<double> neural_receive(const NrxModel<T>& model, const ReceivedGrid& y,
                                   double noise_var, const LinkConfig& cfg) {
    const auto feats = featurize<T>(y, noise_var, model.cfg.include_noise_plane);
    return llr_grid_to_payload(model.forward(feats), cfg);
}

// ---------------------------------------------------------------------------
// Serialization ("QRXM"): config echo, then per-layer tensors either raw
// fp32 or packed low-bit. Quantized models default to packed storage;
// force_fp32 keeps raw master weights (QAT checkpoints).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_tensor_f32(std::ostream& os, const Tensor<float>& t) {
    os.put(static_cast<char>(t.shape.size()));
    for (auto e : t.shape) write_u32(os, static_cast<std::uint32_t>(e));
    for (float v : t.data) write_f32(os, v);
}

inline Tensor<float> read_tensor_f32(std::istream& is) {
    const int rank = is.get();
    if (rank < 0 || rank > 8) throw ConfigError("model file: bad tensor rank");
    Shape shape;
    for (int i = 0; i < rank; ++i) shape.push_back(read_u32(is));
    Tensor<float> t(shape);
    for (auto& v : t.data) v = read_f32(is);
    if (!is) throw ConfigError("model file: truncated tensor");
    return t;
}

} // namespace detail

inline void save_model(const NrxModel<float>& model, std::ostream& os, bool force_fp32 = false) {
    const bool packed = (model.cfg.quant_mode != QuantMode::Fp32) && !force_fp32;
    os.write("QRXM", 4);
    const std::uint8_t head[6] = {1,
                                  static_cast<std::uint8_t>(model.cfg.quant_mode),
                                  static_cast<std::uint8_t>(model.cfg.quant_spec.bitwidth),
                                  static_cast<std::uint8_t>(model.cfg.quant_spec.granularity),
                                  static_cast<std::uint8_t>(model.cfg.include_noise_plane),
                                  static_cast<std::uint8_t>(packed)};
    os.write(reinterpret_cast<const char*>(head), 6);
    detail::write_u32(os, static_cast<std::uint32_t>(model.cfg.num_blocks));
    detail::write_u32(os, static_cast<std::uint32_t>(model.cfg.width));
    detail::write_u32(os, static_cast<std::uint32_t>(model.cfg.kernel));
    detail::write_u32(os, static_cast<std::uint32_t>(model.cfg.in_planes));
    detail::write_u32(os, static_cast<std::uint32_t>(model.cfg.out_planes));
    detail::write_u32(os, static_cast<std::uint32_t>(model.layers.size()));
    for (const auto& l : model.layers) {
        if (packed) {
            FakeQuantizer<float> wq{model.cfg.quant_spec, l.w_alpha.data, l.w_beta.data};
            write_packed(os, pack(model.effective_weight(l), wq));
            FakeQuantizer<float> bq{model.bias_spec(), l.b_alpha.data, l.b_beta.data};
            write_packed(os, pack(model.effective_bias(l), bq));
        } else {
            detail::write_tensor_f32(os, l.weight);
            detail::write_tensor_f32(os, l.bias);
            if (model.cfg.quant_mode != QuantMode::Fp32) {
                detail::write_tensor_f32(os, l.w_alpha);
                detail::write_tensor_f32(os, l.w_beta);
                detail::write_tensor_f32(os, l.b_alpha);
                detail::write_tensor_f32(os, l.b_beta);
            }
        }
    }
}

inline void save_model(const NrxModel<float>& model, const std::string& path,
                       bool force_fp32 = false) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write model file: " + path);
    save_model(model, f, force_fp32);
}

inline NrxModel<float> load_model(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "QRXM", 4) != 0) throw ConfigError("bad model magic");
    std::uint8_t head[6];
    is.read(reinterpret_cast<char*>(head), 6);
    if (!is) throw ConfigError("truncated model header");
    if (head[0] != 1) throw ConfigError("unsupported model version");

    NrxModel<float> model;
    model.cfg.quant_mode = static_cast<QuantMode>(head[1]);
    model.cfg.quant_spec.bitwidth = head[2];
    model.cfg.quant_spec.granularity = static_cast<Granularity>(head[3]);
    model.cfg.include_noise_plane = head[4] != 0;
    const bool packed = head[5] != 0;
    model.cfg.num_blocks = static_cast<int>(detail::read_u32(is));
    model.cfg.width = static_cast<int>(detail::read_u32(is));
    model.cfg.kernel = static_cast<int>(detail::read_u32(is));
    model.cfg.in_planes = static_cast<int>(detail::read_u32(is));
    model.cfg.out_planes = static_cast<int>(detail::read_u32(is));
    const std::uint32_t n_layers = detail::read_u32(is);
    model.cfg.validate();

    auto layer_name = [&](std::size_t i) -> std::string {
        if (i == 0) return "in";
        if (i + 1 == n_layers) return "out";
        const std::size_t b = (i - 1) / 2 + 1;
        return "block" + std::to_string(b) + ((i % 2) ? ".conv1" : ".conv2");
    };

    for (std::size_t i = 0; i < n_layers; ++i) {
        typename NrxModel<float>::Layer l;
        l.name = layer_name(i);
        if (packed) {
            auto pw = read_packed(is);
            l.weight = unpack(pw);
            l.w_alpha = Tensor<float>({static_cast<std::int64_t>(pw.alpha.size())}, pw.alpha);
            l.w_beta = Tensor<float>({static_cast<std::int64_t>(pw.beta.size())}, pw.beta);
            auto pb = read_packed(is);
            l.bias = unpack(pb);
            l.b_alpha = Tensor<float>({static_cast<std::int64_t>(pb.alpha.size())}, pb.alpha);
            l.b_beta = Tensor<float>({static_cast<std::int64_t>(pb.beta.size())}, pb.beta);
        } else {
            l.weight = detail::read_tensor_f32(is);
            l.bias = detail::read_tensor_f32(is);
            if (model.cfg.quant_mode != QuantMode::Fp32) {
                l.w_alpha = detail::read_tensor_f32(is);
                l.w_beta = detail::read_tensor_f32(is);
                l.b_alpha = detail::read_tensor_f32(is);
                l.b_beta = detail::read_tensor_f32(is);
            }
        }
        l.weight.set_requires_grad(true);
        l.bias.set_requires_grad(true);
        if (model.cfg.quant_mode == QuantMode::Qat) {
            l.w_alpha.set_requires_grad(true);
            l.w_beta.set_requires_grad(true);
            l.b_alpha.set_requires_grad(true);
            l.b_beta.set_requires_grad(true);
        }
        model.layers.push_back(std::move(l));
    }
    return model;
}

inline NrxModel<float> load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FileError("cannot open model file: " + path);
    return load_model(f);
}

} // namespace qrx
