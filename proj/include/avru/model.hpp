#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "avru/errors.hpp"
#include "avru/rng.hpp"

namespace avru {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

// Hyperparameters of the network: a local conv stem of depth D_L whose last
// channel count is the token width d, followed by D_G mixer blocks, then
// answer and rule heads fed by the same pooled embedding.
struct ModelConfig {
    int input_h = 544;
    int input_w = 416;
    std::vector<int> stem_channels = {16, 16, 32, 128};
    int blocks = 5;    // D_G
    int segments = 8;  // S
    int expansion = 4; // k
    int n_a = 8;
    int rule_dim = 50;

    static constexpr int aux_hidden = 128;

    int depth_local() const { return static_cast<int>(stem_channels.size()); }
    int dim() const { return stem_channels.back(); }
    int grid_rows() const { return input_h >> depth_local(); }
    int grid_cols() const { return input_w >> depth_local(); }
    int tokens() const { return grid_rows() * grid_cols(); }

    void validate() const {
        if (stem_channels.empty())
            throw ConfigError("model: stem_channels must not be empty");
        for (int c : stem_channels)
            if (c < 1)
                throw ConfigError("model: stem channel counts must be positive");
        const int dl = depth_local();
        if (dl > 16 || input_h % (1 << dl) != 0 || input_w % (1 << dl) != 0)
            throw ConfigError("model: input dimensions must be divisible by 2^D_L");
        if (segments < 1 || dim() % segments != 0)
            throw ConfigError("model: token width must be divisible by the segment count");
        if (blocks < 0)
            throw ConfigError("model: block count must be non-negative");
        if (expansion < 1)
            throw ConfigError("model: expansion factor must be at least 1");
        if (n_a < 2)
            throw ConfigError("model: n_a must be at least 2");
        if (rule_dim < 1)
            throw ConfigError("model: rule_dim must be at least 1");
    }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"input_h", c.input_h},   {"input_w", c.input_w},
                          {"stem_channels", c.stem_channels}, {"blocks", c.blocks},
                          {"segments", c.segments}, {"expansion", c.expansion},
                          {"n_a", c.n_a},           {"rule_dim", c.rule_dim}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.input_h = j.at("input_h").get<int>();
        c.input_w = j.at("input_w").get<int>();
        c.stem_channels = j.at("stem_channels").get<std::vector<int>>();
        c.blocks = j.at("blocks").get<int>();
        c.segments = j.at("segments").get<int>();
        c.expansion = j.at("expansion").get<int>();
        c.n_a = j.at("n_a").get<int>();
        c.rule_dim = j.at("rule_dim").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t fan_in = 0; // 0 = initialize to zero, 1 = initialize to one
};

// Declaration order fixes the checkpoint layout: stem stages, then blocks,
// final norm, answer head, auxiliary head.
inline std::vector<ParamEntry> parameter_layout(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ParamEntry> out;
    std::size_t offset = 0;
    auto add = [&](const std::string& name, std::vector<int> shape, std::size_t fan_in) {
        std::size_t size = 1;
        for (int s : shape)
            size *= static_cast<std::size_t>(s);
        out.push_back({name, std::move(shape), offset, size, fan_in});
        offset += size;
    };

    const int d = cfg.dim();
    const int r = cfg.grid_rows();
    const int c = cfg.grid_cols();
    const int s = cfg.segments;
    const int kd = cfg.expansion * d;

    int in_ch = 1;
    for (int i = 0; i < cfg.depth_local(); ++i) {
        const std::string p = "stem" + std::to_string(i) + ".";
        const int out_ch = cfg.stem_channels[static_cast<std::size_t>(i)];
        add(p + "conv.w", {out_ch, in_ch, 3, 3}, static_cast<std::size_t>(in_ch) * 9);
        add(p + "conv.b", {out_ch}, 0);
        add(p + "bn.gamma", {out_ch}, 1);
        add(p + "bn.beta", {out_ch}, 0);
        in_ch = out_ch;
    }
    for (int l = 0; l < cfg.blocks; ++l) {
        const std::string p = "block" + std::to_string(l) + ".";
        add(p + "ln1.gamma", {d}, 1);
        add(p + "ln1.beta", {d}, 0);
        add(p + "local.w", {d, d, 5, 5}, static_cast<std::size_t>(d) * 25);
        add(p + "local.b", {d}, 0);
        add(p + "hpath.w", {r * s, r * s}, static_cast<std::size_t>(r) * s);
        add(p + "hpath.b", {r * s}, 0);
        add(p + "wpath.w", {c * s, c * s}, static_cast<std::size_t>(c) * s);
        add(p + "wpath.b", {c * s}, 0);
        add(p + "cpath.w", {d, d}, static_cast<std::size_t>(d));
        add(p + "cpath.b", {d}, 0);
        add(p + "fuse.w", {d, 3 * d}, static_cast<std::size_t>(3) * d);
        add(p + "fuse.b", {d}, 0);
        add(p + "ln2.gamma", {d}, 1);
        add(p + "ln2.beta", {d}, 0);
        add(p + "mlp.w1", {kd, d}, static_cast<std::size_t>(d));
        add(p + "mlp.b1", {kd}, 0);
        add(p + "mlp.w2", {d, kd}, static_cast<std::size_t>(kd));
        add(p + "mlp.b2", {d}, 0);
    }
    add("final.gamma", {d}, 1);
    add("final.beta", {d}, 0);
    add("head.w", {cfg.n_a, d}, static_cast<std::size_t>(d));
    add("head.b", {cfg.n_a}, 0);
    add("aux1.w", {ModelConfig::aux_hidden, d}, static_cast<std::size_t>(d));
    add("aux1.b", {ModelConfig::aux_hidden}, 0);
    add("aux2.w", {cfg.rule_dim, ModelConfig::aux_hidden},
        static_cast<std::size_t>(ModelConfig::aux_hidden));
    add("aux2.b", {cfg.rule_dim}, 0);
    return out;
}

inline std::size_t count_params(const ModelConfig& cfg) {
    const auto layout = parameter_layout(cfg);
    return layout.empty() ? 0 : layout.back().offset + layout.back().size;
}

template <typename T>
struct ParameterSet {
    ModelConfig config;
    std::vector<ParamEntry> layout;
    std::vector<T> values;

    const ParamEntry& entry(const std::string& name) const {
        for (const auto& e : layout)
            if (e.name == name)
                return e;
        throw ConfigError("unknown parameter: " + name);
    }
    T* ptr(const std::string& name) { return values.data() + entry(name).offset; }
    const T* ptr(const std::string& name) const { return values.data() + entry(name).offset; }
};

// Batch-norm running statistics: state, not learnable parameters.
template <typename T>
struct BufferSet {
    std::vector<std::vector<T>> running_mean; // per stem stage
    std::vector<std::vector<T>> running_var;

    static BufferSet make(const ModelConfig& cfg) {
        BufferSet b;
        for (int c : cfg.stem_channels) {
            b.running_mean.emplace_back(static_cast<std::size_t>(c), T(0));
            b.running_var.emplace_back(static_cast<std::size_t>(c), T(1));
        }
        return b;
    }
};

// Fan-in-scaled truncated normal for weights; norm scales one, everything
// else (biases, shifts) zero.
template <typename T>
ParameterSet<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
    ParameterSet<T> p;
    p.config = cfg;
    p.layout = parameter_layout(cfg);
    p.values.assign(count_params(cfg), T(0));
    Rng rng(derive_seed(seed, 0x494e4954ULL));
    for (const auto& e : p.layout) {
        T* v = p.values.data() + e.offset;
        if (e.fan_in == 1) {
            std::fill(v, v + e.size, T(1));
        } else if (e.fan_in > 1) {
            const double stddev = 1.0 / std::sqrt(static_cast<double>(e.fan_in));
            for (std::size_t i = 0; i < e.size; ++i)
                v[i] = static_cast<T>(rng.truncated_normal(stddev));
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace nn {

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

template <typename T>
T gelu(T x) {
    return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
T gelu_grad(T x) {
    const T phi = T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440)));
    const T pdf = std::exp(T(-0.5) * x * x) * T(0.39894228040143267794);
    return phi + x * pdf;
}

// Unrolls conv patches: col is (C*k*k) x (Ho*Wo), row-major.
template <typename T>
void im2col(const T* in, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo, T* col) {
    for (int ch = 0; ch < C; ++ch) {
        const T* plane = in + static_cast<std::size_t>(ch) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = col + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) *
                                   (static_cast<std::size_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix < 0 || ix >= W) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
                T* in_grad) {
    for (int ch = 0; ch < C; ++ch) {
        T* plane = in_grad + static_cast<std::size_t>(ch) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col + (static_cast<std::size_t>(ch) * k * k + ky * k + kx) *
                                         (static_cast<std::size_t>(Ho) * Wo);
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H)
                        continue;
                    const T* src = row + static_cast<std::size_t>(oy) * Wo;
                    T* dst = plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W)
                            dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

struct ConvGeom {
    int C_in, H, W, C_out, k, stride, pad, Ho, Wo;
    std::size_t in_size() const { return static_cast<std::size_t>(C_in) * H * W; }
    std::size_t out_size() const { return static_cast<std::size_t>(C_out) * Ho * Wo; }
    std::size_t col_rows() const { return static_cast<std::size_t>(C_in) * k * k; }
    std::size_t col_cols() const { return static_cast<std::size_t>(Ho) * Wo; }
};

// --- Specialized 3x3 / stride-2 / unit-padding convolution -----------------
//
// The stem works on large, thin feature maps where im2col GEMMs are memory
// bound. Splitting the input into four (row, column)-parity phase planes
// turns every kernel tap into a dense whole-plane operation: with
// iy = 2*oy - 1 + ky, ix = 2*ox - 1 + kx, tap (ky, kx) touches exactly one
// phase plane, shifted by -1 in y when ky = 0 and in x when kx = 0.
// Forward and input-gradient become 9 * C_in * C_out plane axpys, the
// weight gradient the matching plane dots, all unit-stride.

template <typename T>
struct Stride2Phases {
    int C = 0, Hp = 0, Wp = 0; // phase plane size = (H/2, W/2)
    std::vector<T> planes;     // (C, 2, 2, Hp, Wp): [py][px]

    void build(const T* in, int C_in, int H_in, int W_in) {
        C = C_in;
        Hp = H_in / 2;
        Wp = W_in / 2;
        planes.resize(static_cast<std::size_t>(C) * 4 * Hp * Wp);
        for (int ci = 0; ci < C; ++ci)
            for (int py = 0; py < 2; ++py)
                for (int px = 0; px < 2; ++px) {
                    T* dst = plane(ci, py, px);
                    const T* src = in + static_cast<std::size_t>(ci) * H_in * W_in;
                    for (int y = 0; y < Hp; ++y) {
                        const T* row = src + static_cast<std::size_t>(2 * y + py) * W_in + px;
                        T* drow = dst + static_cast<std::size_t>(y) * Wp;
                        for (int x = 0; x < Wp; ++x)
                            drow[x] = row[2 * x];
                    }
                }
    }
    T* plane(int ci, int py, int px) {
        return planes.data() + ((static_cast<std::size_t>(ci) * 2 + py) * 2 + px) *
                                   (static_cast<std::size_t>(Hp) * Wp);
    }
    const T* plane(int ci, int py, int px) const {
        return planes.data() + ((static_cast<std::size_t>(ci) * 2 + py) * 2 + px) *
                                   (static_cast<std::size_t>(Hp) * Wp);
    }
};

namespace detail {

// Tap geometry: phase parity and shift for one kernel offset k in {0,1,2}.
// k=0 -> odd phase shifted by -1, k=1 -> even phase, k=2 -> odd phase.
inline void tap_phase(int k, int& parity, int& shift) {
    parity = (k + 1) % 2;
    shift = k == 0 ? -1 : 0;
}

} // namespace detail

// Single-sample forward; H and W must be even.
template <typename T>
void conv3x3s2_forward_one(const Stride2Phases<T>& ph, const T* weight, const T* bias, int C_out,
                           T* out) {
    const int C_in = ph.C, Ho = ph.Hp, Wo = ph.Wp;
    using M = MapM<T>;
    using CM = CMapM<T>;
    for (int co = 0; co < C_out; ++co) {
        M o(out + static_cast<std::size_t>(co) * Ho * Wo, Ho, Wo);
        o.setConstant(bias ? bias[co] : T(0));
        for (int ci = 0; ci < C_in; ++ci) {
            const T* wk = weight + (static_cast<std::size_t>(co) * C_in + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int py, sy;
                detail::tap_phase(ky, py, sy);
                for (int kx = 0; kx < 3; ++kx) {
                    int px, sx;
                    detail::tap_phase(kx, px, sx);
                    const T w = wk[ky * 3 + kx];
                    CM p(ph.plane(ci, py, px), Ho, Wo);
                    // out[oy][ox] += w * phase[oy+sy][ox+sx]
                    const int y0 = sy < 0 ? 1 : 0, x0 = sx < 0 ? 1 : 0;
                    o.block(y0, x0, Ho - y0, Wo - x0) +=
                        w * p.block(y0 + sy, x0 + sx, Ho - y0, Wo - x0);
                }
            }
        }
    }
}

// Single-sample weight/bias gradients from the cached input phases.
template <typename T>
void conv3x3s2_grad_weights_one(const Stride2Phases<T>& ph, const T* d_out, int C_out, T* d_weight,
                                T* d_bias) {
    const int C_in = ph.C, Ho = ph.Hp, Wo = ph.Wp;
    using CM = CMapM<T>;
    for (int co = 0; co < C_out; ++co) {
        CM go(d_out + static_cast<std::size_t>(co) * Ho * Wo, Ho, Wo);
        if (d_bias)
            d_bias[co] += go.sum();
        for (int ci = 0; ci < C_in; ++ci) {
            T* wg = d_weight + (static_cast<std::size_t>(co) * C_in + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int py, sy;
                detail::tap_phase(ky, py, sy);
                for (int kx = 0; kx < 3; ++kx) {
                    int px, sx;
                    detail::tap_phase(kx, px, sx);
                    CM p(ph.plane(ci, py, px), Ho, Wo);
                    const int y0 = sy < 0 ? 1 : 0, x0 = sx < 0 ? 1 : 0;
                    wg[ky * 3 + kx] +=
                        (go.block(y0, x0, Ho - y0, Wo - x0).array() *
                         p.block(y0 + sy, x0 + sx, Ho - y0, Wo - x0).array())
                            .sum();
                }
            }
        }
    }
}

// Single-sample input gradient: accumulate into phase planes, then
// interleave back into (C, H, W). d_in is overwritten.
template <typename T>
void conv3x3s2_grad_input_one(const T* d_out, int C_in, int H, int W, const T* weight, int C_out,
                              T* d_in, Stride2Phases<T>& dphases) {
    const int Ho = H / 2, Wo = W / 2;
    dphases.C = C_in;
    dphases.Hp = Ho;
    dphases.Wp = Wo;
    dphases.planes.assign(static_cast<std::size_t>(C_in) * 4 * Ho * Wo, T(0));
    using M = MapM<T>;
    using CM = CMapM<T>;
    for (int co = 0; co < C_out; ++co) {
        CM go(d_out + static_cast<std::size_t>(co) * Ho * Wo, Ho, Wo);
        for (int ci = 0; ci < C_in; ++ci) {
            const T* wk = weight + (static_cast<std::size_t>(co) * C_in + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                int py, sy;
                detail::tap_phase(ky, py, sy);
                for (int kx = 0; kx < 3; ++kx) {
                    int px, sx;
                    detail::tap_phase(kx, px, sx);
                    const T w = wk[ky * 3 + kx];
                    M p(dphases.plane(ci, py, px), Ho, Wo);
                    const int y0 = sy < 0 ? 1 : 0, x0 = sx < 0 ? 1 : 0;
                    p.block(y0 + sy, x0 + sx, Ho - y0, Wo - x0) +=
                        w * go.block(y0, x0, Ho - y0, Wo - x0);
                }
            }
        }
    }
    for (int ci = 0; ci < C_in; ++ci)
        for (int py = 0; py < 2; ++py)
            for (int px = 0; px < 2; ++px) {
                const T* src = dphases.plane(ci, py, px);
                T* dst = d_in + static_cast<std::size_t>(ci) * H * W;
                for (int y = 0; y < Ho; ++y) {
                    const T* srow = src + static_cast<std::size_t>(y) * Wo;
                    T* drow = dst + static_cast<std::size_t>(2 * y + py) * W + px;
                    for (int x = 0; x < Wo; ++x)
                        drow[2 * x] = srow[x];
                }
            }
}

inline ConvGeom conv_geom(int C_in, int H, int W, int C_out, int k, int stride, int pad) {
    return {C_in, H, W, C_out, k, stride, pad, (H + 2 * pad - k) / stride + 1,
            (W + 2 * pad - k) / stride + 1};
}

// Batched convolution, one im2col GEMM per sample. out = W * col + b.
template <typename T>
void conv_forward(const T* in, int B, const ConvGeom& g, const T* weight, const T* bias, T* out,
                  std::vector<T>& scratch) {
    scratch.resize(g.col_rows() * g.col_cols());
    CMapM<T> wmat(weight, g.C_out, static_cast<Eigen::Index>(g.col_rows()));
    for (int b = 0; b < B; ++b) {
        im2col(in + b * g.in_size(), g.C_in, g.H, g.W, g.k, g.stride, g.pad, g.Ho, g.Wo,
               scratch.data());
        CMapM<T> col(scratch.data(), static_cast<Eigen::Index>(g.col_rows()),
                     static_cast<Eigen::Index>(g.col_cols()));
        MapM<T> o(out + b * g.out_size(), g.C_out, static_cast<Eigen::Index>(g.col_cols()));
        o.noalias() = wmat * col;
        if (bias)
            for (int ch = 0; ch < g.C_out; ++ch)
                o.row(ch).array() += bias[ch];
    }
}

// Accumulates dW/db over the batch and writes dIn (overwritten, not added).
template <typename T>
void conv_backward(const T* in, const T* d_out, int B, const ConvGeom& g, const T* weight,
                   T* d_weight, T* d_bias, T* d_in, std::vector<T>& scratch,
                   std::vector<T>& scratch2) {
    scratch.resize(g.col_rows() * g.col_cols());
    scratch2.resize(g.col_rows() * g.col_cols());
    CMapM<T> wmat(weight, g.C_out, static_cast<Eigen::Index>(g.col_rows()));
    MapM<T> dw(d_weight, g.C_out, static_cast<Eigen::Index>(g.col_rows()));
    for (int b = 0; b < B; ++b) {
        CMapM<T> dout(d_out + b * g.out_size(), g.C_out, static_cast<Eigen::Index>(g.col_cols()));
        im2col(in + b * g.in_size(), g.C_in, g.H, g.W, g.k, g.stride, g.pad, g.Ho, g.Wo,
               scratch.data());
        CMapM<T> col(scratch.data(), static_cast<Eigen::Index>(g.col_rows()),
                     static_cast<Eigen::Index>(g.col_cols()));
        dw.noalias() += dout * col.transpose();
        if (d_bias)
            for (int ch = 0; ch < g.C_out; ++ch)
                d_bias[ch] += dout.row(ch).sum();
        if (d_in) {
            MapM<T> dcol(scratch2.data(), static_cast<Eigen::Index>(g.col_rows()),
                         static_cast<Eigen::Index>(g.col_cols()));
            dcol.noalias() = wmat.transpose() * dout;
            T* dst = d_in + b * g.in_size();
            std::fill(dst, dst + g.in_size(), T(0));
            col2im_add(scratch2.data(), g.C_in, g.H, g.W, g.k, g.stride, g.pad, g.Ho, g.Wo, dst);
        }
    }
}

// Layer normalization over the last (feature) axis of an (N x d) matrix.
template <typename T>
void layernorm_forward(const T* x, std::size_t n, int d, const T* gamma, const T* beta, T* y,
                       T* mean, T* invstd) {
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x + i * d;
        T mu = 0;
        for (int j = 0; j < d; ++j)
            mu += row[j];
        mu /= T(d);
        T var = 0;
        for (int j = 0; j < d; ++j) {
            const T c = row[j] - mu;
            var += c * c;
        }
        var /= T(d);
        const T is = T(1) / std::sqrt(var + T(kNormEps));
        mean[i] = mu;
        invstd[i] = is;
        T* out = y + i * d;
        for (int j = 0; j < d; ++j)
            out[j] = (row[j] - mu) * is * gamma[j] + beta[j];
    }
}

// d_x is overwritten; gamma/beta grads accumulate.
template <typename T>
void layernorm_backward(const T* x, const T* d_y, std::size_t n, int d, const T* gamma,
                        const T* mean, const T* invstd, T* d_x, T* d_gamma, T* d_beta) {
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = x + i * d;
        const T* dy = d_y + i * d;
        T* dx = d_x + i * d;
        const T mu = mean[i];
        const T is = invstd[i];
        T sum_dxh = 0, sum_dxh_xh = 0;
        for (int j = 0; j < d; ++j) {
            const T xh = (row[j] - mu) * is;
            const T dxh = dy[j] * gamma[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh;
            d_gamma[j] += dy[j] * xh;
            d_beta[j] += dy[j];
        }
        const T inv_d = T(1) / T(d);
        for (int j = 0; j < d; ++j) {
            const T xh = (row[j] - mu) * is;
            const T dxh = dy[j] * gamma[j];
            dx[j] = is * (dxh - inv_d * sum_dxh - xh * inv_d * sum_dxh_xh);
        }
    }
}

} // namespace nn

} // namespace avru
