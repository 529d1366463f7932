#pragma once

#include <vector>

#include "avru/model.hpp"

namespace avru {

// ---------------------------------------------------------------------------
// Forward caches
// ---------------------------------------------------------------------------

template <typename T>
struct StemStageCache {
    std::vector<T> conv_out; // (B, C, Ho, Wo), pre-normalization
    std::vector<T> mean;     // per channel, stats used by the normalizer
    std::vector<T> invstd;
    std::vector<T> out;      // post-ReLU, input of the next stage
};

template <typename T>
struct BlockCache {
    std::vector<T> input;    // z_{l-1}, (B, T, d)
    std::vector<T> ln1_mean; // (B*T)
    std::vector<T> ln1_invstd;
    std::vector<T> u;        // Norm(z_{l-1})
    std::vector<T> v;        // u + Conv5x5(u)
    std::vector<T> concat;   // (B*T, 3d): [height | width | channel] pathway outputs
    std::vector<T> zstar;    // z + fused pathways
    std::vector<T> ln2_mean;
    std::vector<T> ln2_invstd;
    std::vector<T> p;        // Norm(z*)
    std::vector<T> a1;       // (B*T, kd) pre-GELU
    std::vector<T> g;        // (B*T, kd) post-GELU
};

template <typename T>
struct NetCache {
    int batch = 0;
    std::vector<StemStageCache<T>> stem;
    std::vector<T> tokens0;   // z_0, (B, T, d)
    std::vector<BlockCache<T>> blocks;
    std::vector<T> final_in;  // z_{D_G}
    std::vector<T> lnf_mean;
    std::vector<T> lnf_invstd;
    std::vector<T> lnf_out;
    std::vector<T> pooled;    // (B, d) embedding feeding both heads
    std::vector<T> aux_pre;   // (B, 128) pre-GELU
    std::vector<T> answer_logits;
    std::vector<T> rule_logits;
};

namespace nn {

// Layout change between the token view (B, T, d) and the planar view
// (B, d, T) used by convolutions.
template <typename T>
void tokens_to_planar(const T* tok, int B, int tokens, int d, T* planar) {
    for (int b = 0; b < B; ++b) {
        const T* src = tok + static_cast<std::size_t>(b) * tokens * d;
        T* dst = planar + static_cast<std::size_t>(b) * tokens * d;
        for (int t = 0; t < tokens; ++t)
            for (int ch = 0; ch < d; ++ch)
                dst[static_cast<std::size_t>(ch) * tokens + t] = src[static_cast<std::size_t>(t) * d + ch];
    }
}

template <typename T>
void planar_add_to_tokens(const T* planar, int B, int tokens, int d, T* tok) {
    for (int b = 0; b < B; ++b) {
        const T* src = planar + static_cast<std::size_t>(b) * tokens * d;
        T* dst = tok + static_cast<std::size_t>(b) * tokens * d;
        for (int t = 0; t < tokens; ++t)
            for (int ch = 0; ch < d; ++ch)
                dst[static_cast<std::size_t>(t) * d + ch] += src[static_cast<std::size_t>(ch) * tokens + t];
    }
}

// Permute-pathway rearrangement. Channels factor as ch = e*S + s (segment
// index fastest); the height pathway mixes the (row, segment) axis of
// every (column, e) fibre, so the gathered matrix has c*e rows of length
// r*S per sample. The width pathway is the transpose arrangement.
template <typename T>
void gather_height(const T* tok, int B, int r, int c, int d, int S, T* x) {
    const int e = d / S;
    for (int b = 0; b < B; ++b) {
        const T* src = tok + static_cast<std::size_t>(b) * r * c * d;
        T* dst = x + static_cast<std::size_t>(b) * c * e * r * S;
        for (int y = 0; y < r; ++y)
            for (int xc = 0; xc < c; ++xc) {
                const T* cell = src + (static_cast<std::size_t>(y) * c + xc) * d;
                for (int ei = 0; ei < e; ++ei)
                    for (int s = 0; s < S; ++s)
                        dst[(static_cast<std::size_t>(xc) * e + ei) * (r * S) + y * S + s] =
                            cell[ei * S + s];
            }
    }
}

template <typename T>
void scatter_height(const T* x, int B, int r, int c, int d, int S, T* tok, bool add) {
    const int e = d / S;
    for (int b = 0; b < B; ++b) {
        const T* src = x + static_cast<std::size_t>(b) * c * e * r * S;
        T* dst = tok + static_cast<std::size_t>(b) * r * c * d;
        for (int y = 0; y < r; ++y)
            for (int xc = 0; xc < c; ++xc) {
                T* cell = dst + (static_cast<std::size_t>(y) * c + xc) * d;
                for (int ei = 0; ei < e; ++ei)
                    for (int s = 0; s < S; ++s) {
                        const T val =
                            src[(static_cast<std::size_t>(xc) * e + ei) * (r * S) + y * S + s];
                        if (add)
                            cell[ei * S + s] += val;
                        else
                            cell[ei * S + s] = val;
                    }
            }
    }
}

template <typename T>
void gather_width(const T* tok, int B, int r, int c, int d, int S, T* x) {
    const int e = d / S;
    for (int b = 0; b < B; ++b) {
        const T* src = tok + static_cast<std::size_t>(b) * r * c * d;
        T* dst = x + static_cast<std::size_t>(b) * r * e * c * S;
        for (int y = 0; y < r; ++y)
            for (int xc = 0; xc < c; ++xc) {
                const T* cell = src + (static_cast<std::size_t>(y) * c + xc) * d;
                for (int ei = 0; ei < e; ++ei)
                    for (int s = 0; s < S; ++s)
                        dst[(static_cast<std::size_t>(y) * e + ei) * (c * S) + xc * S + s] =
                            cell[ei * S + s];
            }
    }
}

template <typename T>
void scatter_width(const T* x, int B, int r, int c, int d, int S, T* tok, bool add) {
    const int e = d / S;
    for (int b = 0; b < B; ++b) {
        const T* src = x + static_cast<std::size_t>(b) * r * e * c * S;
        T* dst = tok + static_cast<std::size_t>(b) * r * c * d;
        for (int y = 0; y < r; ++y)
            for (int xc = 0; xc < c; ++xc) {
                T* cell = dst + (static_cast<std::size_t>(y) * c + xc) * d;
                for (int ei = 0; ei < e; ++ei)
                    for (int s = 0; s < S; ++s) {
                        const T val =
                            src[(static_cast<std::size_t>(y) * e + ei) * (c * S) + xc * S + s];
                        if (add)
                            cell[ei * S + s] += val;
                        else
                            cell[ei * S + s] = val;
                    }
            }
    }
}

// y (n x out) = x (n x in) * W^T (+ bias broadcast over rows).
template <typename T>
void linear_forward(const T* x, std::size_t n, int in, int out, const T* w, const T* b, T* y) {
    CMapM<T> xm(x, static_cast<Eigen::Index>(n), in);
    CMapM<T> wm(w, out, in);
    MapM<T> ym(y, static_cast<Eigen::Index>(n), out);
    ym.noalias() = xm * wm.transpose();
    if (b) {
        CMapM<T> bm(b, 1, out);
        ym.rowwise() += bm.row(0);
    }
}

// dW/db accumulate; dx overwritten unless null.
template <typename T>
void linear_backward(const T* x, const T* dy, std::size_t n, int in, int out, const T* w, T* dw,
                     T* db, T* dx) {
    CMapM<T> xm(x, static_cast<Eigen::Index>(n), in);
    CMapM<T> dym(dy, static_cast<Eigen::Index>(n), out);
    CMapM<T> wm(w, out, in);
    if (dw) {
        MapM<T> dwm(dw, out, in);
        dwm.noalias() += dym.transpose() * xm;
    }
    if (db) {
        MapM<T> dbm(db, 1, out);
        dbm.row(0) += dym.colwise().sum();
    }
    if (dx) {
        MapM<T> dxm(dx, static_cast<Eigen::Index>(n), in);
        dxm.noalias() = dym * wm;
    }
}

} // namespace nn

// ---------------------------------------------------------------------------
// Stem
// ---------------------------------------------------------------------------

// D_L stages of 3x3/stride-2/unit-padding convolution, batch norm, ReLU.
// In train mode normalization uses batch statistics and updates the running
// buffers; eval mode normalizes with the running statistics.
template <typename T>
void stem_forward(const T* canvases, int B, const ParameterSet<T>& params, BufferSet<T>& buffers,
                  Mode mode, NetCache<T>& cache) {
    using VecMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
    using CVecMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
    const ModelConfig& cfg = params.config;
    cache.batch = B;
    cache.stem.resize(static_cast<std::size_t>(cfg.depth_local()));

    int H = cfg.input_h, W = cfg.input_w, C_in = 1;
    const T* in = canvases;
    nn::Stride2Phases<T> phases;
    std::vector<T> scratch;
    for (int i = 0; i < cfg.depth_local(); ++i) {
        auto& st = cache.stem[static_cast<std::size_t>(i)];
        const int C = cfg.stem_channels[static_cast<std::size_t>(i)];
        const auto geom = nn::conv_geom(C_in, H, W, C, 3, 2, 1);
        const std::string p = "stem" + std::to_string(i) + ".";
        st.conv_out.resize(static_cast<std::size_t>(B) * geom.out_size());
        // Direct phase kernels win on large thin maps, im2col GEMM on the
        // deep small ones.
        if (geom.Ho * geom.Wo >= 4096) {
            for (int b = 0; b < B; ++b) {
                phases.build(in + b * geom.in_size(), C_in, H, W);
                nn::conv3x3s2_forward_one(phases, params.ptr(p + "conv.w"),
                                          params.ptr(p + "conv.b"), C,
                                          st.conv_out.data() + b * geom.out_size());
            }
        } else {
            nn::conv_forward(in, B, geom, params.ptr(p + "conv.w"), params.ptr(p + "conv.b"),
                             st.conv_out.data(), scratch);
        }

        st.mean.resize(static_cast<std::size_t>(C));
        st.invstd.resize(static_cast<std::size_t>(C));
        const std::size_t plane = static_cast<std::size_t>(geom.Ho) * geom.Wo;
        const std::size_t per_sample = static_cast<std::size_t>(C) * plane;
        if (mode == Mode::train) {
            const T n = T(B) * T(plane);
            for (int ch = 0; ch < C; ++ch) {
                T sum = 0, sq = 0;
                for (int b = 0; b < B; ++b) {
                    CVecMap v(st.conv_out.data() + b * per_sample + ch * plane,
                              static_cast<Eigen::Index>(plane));
                    sum += v.sum();
                    sq += v.square().sum();
                }
                const T mu = sum / n;
                const T var = std::max(sq / n - mu * mu, T(0));
                st.mean[static_cast<std::size_t>(ch)] = mu;
                st.invstd[static_cast<std::size_t>(ch)] = T(1) / std::sqrt(var + T(nn::kNormEps));
                auto& rm = buffers.running_mean[static_cast<std::size_t>(i)];
                auto& rv = buffers.running_var[static_cast<std::size_t>(i)];
                rm[static_cast<std::size_t>(ch)] =
                    T(1 - nn::kBnMomentum) * rm[static_cast<std::size_t>(ch)] + T(nn::kBnMomentum) * mu;
                rv[static_cast<std::size_t>(ch)] =
                    T(1 - nn::kBnMomentum) * rv[static_cast<std::size_t>(ch)] + T(nn::kBnMomentum) * var;
            }
        } else {
            for (int ch = 0; ch < C; ++ch) {
                st.mean[static_cast<std::size_t>(ch)] =
                    buffers.running_mean[static_cast<std::size_t>(i)][static_cast<std::size_t>(ch)];
                st.invstd[static_cast<std::size_t>(ch)] =
                    T(1) / std::sqrt(
                               buffers.running_var[static_cast<std::size_t>(i)][static_cast<std::size_t>(ch)] +
                               T(nn::kNormEps));
            }
        }

        const T* gamma = params.ptr(p + "bn.gamma");
        const T* beta = params.ptr(p + "bn.beta");
        st.out.resize(st.conv_out.size());
        for (int b = 0; b < B; ++b)
            for (int ch = 0; ch < C; ++ch) {
                CVecMap src(st.conv_out.data() + b * per_sample + ch * plane,
                            static_cast<Eigen::Index>(plane));
                VecMap dst(st.out.data() + b * per_sample + ch * plane,
                           static_cast<Eigen::Index>(plane));
                const T mu = st.mean[static_cast<std::size_t>(ch)];
                const T scale = st.invstd[static_cast<std::size_t>(ch)] * gamma[ch];
                dst = ((src - mu) * scale + beta[ch]).max(T(0));
            }

        in = st.out.data();
        H = geom.Ho;
        W = geom.Wo;
        C_in = C;
    }

    // Planar (B, d, r, c) -> token (B, T, d) layout.
    const int tokens = cfg.tokens(), d = cfg.dim();
    cache.tokens0.resize(static_cast<std::size_t>(B) * tokens * d);
    const auto& last = cache.stem.back();
    for (int b = 0; b < B; ++b) {
        const T* src = last.out.data() + static_cast<std::size_t>(b) * d * tokens;
        T* dst = cache.tokens0.data() + static_cast<std::size_t>(b) * tokens * d;
        for (int t = 0; t < tokens; ++t)
            for (int ch = 0; ch < d; ++ch)
                dst[static_cast<std::size_t>(t) * d + ch] = src[static_cast<std::size_t>(ch) * tokens + t];
    }
}

// Gradient path of the stem; writes parameter grads and discards the input
// gradient of stage 0. d_tokens is the gradient at z_0 in token layout.
template <typename T>
void stem_backward(const T* canvases, const ParameterSet<T>& params, const NetCache<T>& cache,
                   const T* d_tokens, T* grad) {
    using VecMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
    using CVecMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;
    const ModelConfig& cfg = params.config;
    const int B = cache.batch;
    const int tokens = cfg.tokens(), d = cfg.dim();

    // Token layout -> planar gradient for the last stage.
    std::vector<T> d_out(static_cast<std::size_t>(B) * d * tokens);
    for (int b = 0; b < B; ++b) {
        const T* src = d_tokens + static_cast<std::size_t>(b) * tokens * d;
        T* dst = d_out.data() + static_cast<std::size_t>(b) * d * tokens;
        for (int t = 0; t < tokens; ++t)
            for (int ch = 0; ch < d; ++ch)
                dst[static_cast<std::size_t>(ch) * tokens + t] = src[static_cast<std::size_t>(t) * d + ch];
    }

    nn::Stride2Phases<T> phases, dphases;
    std::vector<T> d_in, da_buf;
    for (int i = cfg.depth_local() - 1; i >= 0; --i) {
        const auto& st = cache.stem[static_cast<std::size_t>(i)];
        const std::string p = "stem" + std::to_string(i) + ".";
        const int C = cfg.stem_channels[static_cast<std::size_t>(i)];
        const int H_in = cfg.input_h >> i;
        const int W_in = cfg.input_w >> i;
        const int C_in = i == 0 ? 1 : cfg.stem_channels[static_cast<std::size_t>(i - 1)];
        const auto geom = nn::conv_geom(C_in, H_in, W_in, C, 3, 2, 1);
        const std::size_t plane = static_cast<std::size_t>(geom.Ho) * geom.Wo;
        const std::size_t per_sample = static_cast<std::size_t>(C) * plane;
        const T n = T(B) * T(plane);

        // ReLU mask + batch-norm backward, channel by channel. The ReLU
        // mask comes from the cached stage output (out > 0 iff pre > 0).
        const T* gamma = params.ptr(p + "bn.gamma");
        T* d_gamma = grad + params.entry(p + "bn.gamma").offset;
        T* d_beta = grad + params.entry(p + "bn.beta").offset;
        std::vector<T> d_conv(st.conv_out.size());
        da_buf.resize(plane);
        for (int ch = 0; ch < C; ++ch) {
            const T mu = st.mean[static_cast<std::size_t>(ch)];
            const T is = st.invstd[static_cast<std::size_t>(ch)];
            T sum_da = 0, sum_da_y = 0;
            for (int b = 0; b < B; ++b) {
                CVecMap y(st.conv_out.data() + b * per_sample + ch * plane,
                          static_cast<Eigen::Index>(plane));
                CVecMap o(st.out.data() + b * per_sample + ch * plane,
                          static_cast<Eigen::Index>(plane));
                CVecMap go(d_out.data() + b * per_sample + ch * plane,
                           static_cast<Eigen::Index>(plane));
                VecMap da(da_buf.data(), static_cast<Eigen::Index>(plane));
                da = (o > T(0)).template cast<T>() * go;
                sum_da += da.sum();
                sum_da_y += (da * y).sum();
                // stash da for the second pass
                VecMap(d_conv.data() + b * per_sample + ch * plane,
                       static_cast<Eigen::Index>(plane)) = da;
            }
            const T sum_da_xh = (sum_da_y - mu * sum_da) * is;
            d_gamma[ch] += sum_da_xh;
            d_beta[ch] += sum_da;
            const T g = gamma[ch];
            const T mean_da = sum_da / n;
            const T mean_da_xh = sum_da_xh / n;
            for (int b = 0; b < B; ++b) {
                CVecMap y(st.conv_out.data() + b * per_sample + ch * plane,
                          static_cast<Eigen::Index>(plane));
                VecMap dc(d_conv.data() + b * per_sample + ch * plane,
                          static_cast<Eigen::Index>(plane));
                dc = is * g * (dc - mean_da - (y - mu) * is * mean_da_xh);
            }
        }

        const T* stage_in =
            i == 0 ? canvases : cache.stem[static_cast<std::size_t>(i - 1)].out.data();
        if (i > 0)
            d_in.resize(static_cast<std::size_t>(B) * geom.in_size());
        T* d_weight = grad + params.entry(p + "conv.w").offset;
        T* d_bias = grad + params.entry(p + "conv.b").offset;
        const T* weight = params.ptr(p + "conv.w");
        if (geom.Ho * geom.Wo >= 4096) {
            for (int b = 0; b < B; ++b) {
                phases.build(stage_in + b * geom.in_size(), C_in, H_in, W_in);
                nn::conv3x3s2_grad_weights_one(phases, d_conv.data() + b * geom.out_size(), C,
                                               d_weight, d_bias);
                if (i > 0)
                    nn::conv3x3s2_grad_input_one(d_conv.data() + b * geom.out_size(), C_in, H_in,
                                                 W_in, weight, C, d_in.data() + b * geom.in_size(),
                                                 dphases);
            }
        } else {
            std::vector<T> scratch, scratch2;
            nn::conv_backward(stage_in, d_conv.data(), B, geom, weight, d_weight, d_bias,
                              i > 0 ? d_in.data() : nullptr, scratch, scratch2);
        }
        d_out.swap(d_in);
    }
}

// ---------------------------------------------------------------------------
// Mixer blocks
// ---------------------------------------------------------------------------

namespace detail {

struct BlockParamNames {
    std::string prefix;
    explicit BlockParamNames(int l) : prefix("block" + std::to_string(l) + ".") {}
    std::string operator()(const char* n) const { return prefix + n; }
};

} // namespace detail

// z* = TokenMixer(Norm(z)) + z: pre-norm, residual 5x5 conv, three permute
// pathways, depthwise concatenation, 1x1 fuse, outer residual.
template <typename T>
void token_mixer_forward(const ParameterSet<T>& params, int l, const T* z, int B,
                         BlockCache<T>& bc) {
    const ModelConfig& cfg = params.config;
    const int r = cfg.grid_rows(), c = cfg.grid_cols(), d = cfg.dim(), S = cfg.segments;
    const int tokens = r * c;
    const std::size_t n = static_cast<std::size_t>(B) * tokens;
    const detail::BlockParamNames name(l);

    bc.input.assign(z, z + n * d);
    bc.ln1_mean.resize(n);
    bc.ln1_invstd.resize(n);
    bc.u.resize(n * d);
    nn::layernorm_forward(z, n, d, params.ptr(name("ln1.gamma")), params.ptr(name("ln1.beta")),
                          bc.u.data(), bc.ln1_mean.data(), bc.ln1_invstd.data());

    // v = u + Conv5x5(u), computed in the planar layout.
    std::vector<T> planar_in(n * d), planar_out(n * d), scratch;
    nn::tokens_to_planar(bc.u.data(), B, tokens, d, planar_in.data());
    const auto geom = nn::conv_geom(d, r, c, d, 5, 1, 2);
    nn::conv_forward(planar_in.data(), B, geom, params.ptr(name("local.w")),
                     params.ptr(name("local.b")), planar_out.data(), scratch);
    bc.v = bc.u;
    nn::planar_add_to_tokens(planar_out.data(), B, tokens, d, bc.v.data());

    // Three pathways into one (B*T, 3d) buffer.
    bc.concat.resize(n * 3 * d);
    const int e = d / S;
    {
        std::vector<T> xh(static_cast<std::size_t>(B) * c * e * r * S);
        std::vector<T> yh(xh.size());
        nn::gather_height(bc.v.data(), B, r, c, d, S, xh.data());
        nn::linear_forward(xh.data(), static_cast<std::size_t>(B) * c * e, r * S, r * S,
                           params.ptr(name("hpath.w")), params.ptr(name("hpath.b")), yh.data());
        std::vector<T> tok(n * d);
        nn::scatter_height(yh.data(), B, r, c, d, S, tok.data(), false);
        MapM<T> cm(bc.concat.data(), static_cast<Eigen::Index>(n), 3 * d);
        cm.middleCols(0, d) = CMapM<T>(tok.data(), static_cast<Eigen::Index>(n), d);
    }
    {
        std::vector<T> xw(static_cast<std::size_t>(B) * r * e * c * S);
        std::vector<T> yw(xw.size());
        nn::gather_width(bc.v.data(), B, r, c, d, S, xw.data());
        nn::linear_forward(xw.data(), static_cast<std::size_t>(B) * r * e, c * S, c * S,
                           params.ptr(name("wpath.w")), params.ptr(name("wpath.b")), yw.data());
        std::vector<T> tok(n * d);
        nn::scatter_width(yw.data(), B, r, c, d, S, tok.data(), false);
        MapM<T> cm(bc.concat.data(), static_cast<Eigen::Index>(n), 3 * d);
        cm.middleCols(d, d) = CMapM<T>(tok.data(), static_cast<Eigen::Index>(n), d);
    }
    {
        std::vector<T> tok(n * d);
        nn::linear_forward(bc.v.data(), n, d, d, params.ptr(name("cpath.w")),
                           params.ptr(name("cpath.b")), tok.data());
        MapM<T> cm(bc.concat.data(), static_cast<Eigen::Index>(n), 3 * d);
        cm.middleCols(2 * d, d) = CMapM<T>(tok.data(), static_cast<Eigen::Index>(n), d);
    }

    bc.zstar.resize(n * d);
    nn::linear_forward(bc.concat.data(), n, 3 * d, d, params.ptr(name("fuse.w")),
                       params.ptr(name("fuse.b")), bc.zstar.data());
    CMapM<T> zm(z, static_cast<Eigen::Index>(n), d);
    MapM<T>(bc.zstar.data(), static_cast<Eigen::Index>(n), d) += zm;
}

// z_l = GELU(Norm(z*) W1) W2 + z*.
template <typename T>
void channel_mixer_forward(const ParameterSet<T>& params, int l, int B, BlockCache<T>& bc,
                           T* z_out) {
    const ModelConfig& cfg = params.config;
    const int d = cfg.dim(), kd = cfg.expansion * cfg.dim();
    const std::size_t n = static_cast<std::size_t>(B) * cfg.tokens();
    const detail::BlockParamNames name(l);

    bc.ln2_mean.resize(n);
    bc.ln2_invstd.resize(n);
    bc.p.resize(n * d);
    nn::layernorm_forward(bc.zstar.data(), n, d, params.ptr(name("ln2.gamma")),
                          params.ptr(name("ln2.beta")), bc.p.data(), bc.ln2_mean.data(),
                          bc.ln2_invstd.data());
    bc.a1.resize(n * kd);
    nn::linear_forward(bc.p.data(), n, d, kd, params.ptr(name("mlp.w1")), params.ptr(name("mlp.b1")),
                       bc.a1.data());
    bc.g.resize(n * kd);
    for (std::size_t i = 0; i < bc.g.size(); ++i)
        bc.g[i] = nn::gelu(bc.a1[i]);
    nn::linear_forward(bc.g.data(), n, kd, d, params.ptr(name("mlp.w2")), params.ptr(name("mlp.b2")),
                       z_out);
    MapM<T>(z_out, static_cast<Eigen::Index>(n), d) +=
        CMapM<T>(bc.zstar.data(), static_cast<Eigen::Index>(n), d);
}

// Backward through one block; d_z_out is consumed, returns gradient w.r.t.
// the block input in d_z_in (overwritten).
template <typename T>
void block_backward(const ParameterSet<T>& params, int l, int B, const BlockCache<T>& bc,
                    const T* d_z_out, T* d_z_in, T* grad) {
    const ModelConfig& cfg = params.config;
    const int r = cfg.grid_rows(), c = cfg.grid_cols(), d = cfg.dim(), S = cfg.segments;
    const int kd = cfg.expansion * d;
    const int tokens = r * c;
    const std::size_t n = static_cast<std::size_t>(B) * tokens;
    const detail::BlockParamNames name(l);
    auto gptr = [&](const char* nm) { return grad + params.entry(name(nm)).offset; };

    // Channel mixer.
    std::vector<T> d_zstar(d_z_out, d_z_out + n * d); // residual branch
    {
        std::vector<T> d_g(n * static_cast<std::size_t>(kd));
        nn::linear_backward(bc.g.data(), d_z_out, n, kd, d, params.ptr(name("mlp.w2")),
                            gptr("mlp.w2"), gptr("mlp.b2"), d_g.data());
        for (std::size_t i = 0; i < d_g.size(); ++i)
            d_g[i] *= nn::gelu_grad(bc.a1[i]);
        std::vector<T> d_p(n * static_cast<std::size_t>(d));
        nn::linear_backward(bc.p.data(), d_g.data(), n, d, kd, params.ptr(name("mlp.w1")),
                            gptr("mlp.w1"), gptr("mlp.b1"), d_p.data());
        std::vector<T> d_tmp(n * static_cast<std::size_t>(d));
        nn::layernorm_backward(bc.zstar.data(), d_p.data(), n, d, params.ptr(name("ln2.gamma")),
                               bc.ln2_mean.data(), bc.ln2_invstd.data(), d_tmp.data(),
                               gptr("ln2.gamma"), gptr("ln2.beta"));
        MapM<T>(d_zstar.data(), static_cast<Eigen::Index>(n), d) +=
            CMapM<T>(d_tmp.data(), static_cast<Eigen::Index>(n), d);
    }

    // Token mixer: outer residual plus the fused pathway branch.
    std::copy(d_zstar.begin(), d_zstar.end(), d_z_in);
    std::vector<T> d_concat(n * 3 * static_cast<std::size_t>(d));
    nn::linear_backward(bc.concat.data(), d_zstar.data(), n, 3 * d, d, params.ptr(name("fuse.w")),
                        gptr("fuse.w"), gptr("fuse.b"), d_concat.data());

    std::vector<T> d_v(n * static_cast<std::size_t>(d), T(0));
    const int e = d / S;
    {
        // Height pathway.
        std::vector<T> d_tok(n * static_cast<std::size_t>(d));
        MapM<T>(d_tok.data(), static_cast<Eigen::Index>(n), d) =
            CMapM<T>(d_concat.data(), static_cast<Eigen::Index>(n), 3 * d).middleCols(0, d);
        std::vector<T> d_y(static_cast<std::size_t>(B) * c * e * r * S);
        nn::gather_height(d_tok.data(), B, r, c, d, S, d_y.data());
        std::vector<T> x(d_y.size());
        nn::gather_height(bc.v.data(), B, r, c, d, S, x.data());
        std::vector<T> d_x(d_y.size());
        nn::linear_backward(x.data(), d_y.data(), static_cast<std::size_t>(B) * c * e, r * S, r * S,
                            params.ptr(name("hpath.w")), gptr("hpath.w"), gptr("hpath.b"),
                            d_x.data());
        nn::scatter_height(d_x.data(), B, r, c, d, S, d_v.data(), true);
    }
    {
        // Width pathway.
        std::vector<T> d_tok(n * static_cast<std::size_t>(d));
        MapM<T>(d_tok.data(), static_cast<Eigen::Index>(n), d) =
            CMapM<T>(d_concat.data(), static_cast<Eigen::Index>(n), 3 * d).middleCols(d, d);
        std::vector<T> d_y(static_cast<std::size_t>(B) * r * e * c * S);
        nn::gather_width(d_tok.data(), B, r, c, d, S, d_y.data());
        std::vector<T> x(d_y.size());
        nn::gather_width(bc.v.data(), B, r, c, d, S, x.data());
        std::vector<T> d_x(d_y.size());
        nn::linear_backward(x.data(), d_y.data(), static_cast<std::size_t>(B) * r * e, c * S, c * S,
                            params.ptr(name("wpath.w")), gptr("wpath.w"), gptr("wpath.b"),
                            d_x.data());
        nn::scatter_width(d_x.data(), B, r, c, d, S, d_v.data(), true);
    }
    {
        // Channel pathway.
        std::vector<T> d_tok(n * static_cast<std::size_t>(d));
        MapM<T>(d_tok.data(), static_cast<Eigen::Index>(n), d) =
            CMapM<T>(d_concat.data(), static_cast<Eigen::Index>(n), 3 * d).middleCols(2 * d, d);
        std::vector<T> d_tmp(n * static_cast<std::size_t>(d));
        nn::linear_backward(bc.v.data(), d_tok.data(), n, d, d, params.ptr(name("cpath.w")),
                            gptr("cpath.w"), gptr("cpath.b"), d_tmp.data());
        MapM<T>(d_v.data(), static_cast<Eigen::Index>(n), d) +=
            CMapM<T>(d_tmp.data(), static_cast<Eigen::Index>(n), d);
    }

    // v = u + Conv5x5(u).
    std::vector<T> d_u = d_v;
    {
        std::vector<T> planar_u(n * static_cast<std::size_t>(d));
        nn::tokens_to_planar(bc.u.data(), B, tokens, d, planar_u.data());
        std::vector<T> planar_dv(n * static_cast<std::size_t>(d));
        nn::tokens_to_planar(d_v.data(), B, tokens, d, planar_dv.data());
        std::vector<T> planar_du(n * static_cast<std::size_t>(d));
        std::vector<T> scratch, scratch2;
        const auto geom = nn::conv_geom(d, r, c, d, 5, 1, 2);
        nn::conv_backward(planar_u.data(), planar_dv.data(), B, geom, params.ptr(name("local.w")),
                          gptr("local.w"), gptr("local.b"), planar_du.data(), scratch, scratch2);
        nn::planar_add_to_tokens(planar_du.data(), B, tokens, d, d_u.data());
    }

    {
        std::vector<T> d_tmp(n * static_cast<std::size_t>(d));
        nn::layernorm_backward(bc.input.data(), d_u.data(), n, d, params.ptr(name("ln1.gamma")),
                               bc.ln1_mean.data(), bc.ln1_invstd.data(), d_tmp.data(),
                               gptr("ln1.gamma"), gptr("ln1.beta"));
        MapM<T>(d_z_in, static_cast<Eigen::Index>(n), d) +=
            CMapM<T>(d_tmp.data(), static_cast<Eigen::Index>(n), d);
    }
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

// Final norm, mean over the token grid, linear answer head. Softmax is left
// to loss/prediction consumers.
template <typename T>
void head_forward(const ParameterSet<T>& params, const T* z, int B, NetCache<T>& cache) {
    const ModelConfig& cfg = params.config;
    const int d = cfg.dim(), tokens = cfg.tokens();
    const std::size_t n = static_cast<std::size_t>(B) * tokens;

    cache.lnf_mean.resize(n);
    cache.lnf_invstd.resize(n);
    cache.lnf_out.resize(n * d);
    nn::layernorm_forward(z, n, d, params.ptr("final.gamma"), params.ptr("final.beta"),
                          cache.lnf_out.data(), cache.lnf_mean.data(), cache.lnf_invstd.data());

    cache.pooled.assign(static_cast<std::size_t>(B) * d, T(0));
    for (int b = 0; b < B; ++b) {
        T* dst = cache.pooled.data() + static_cast<std::size_t>(b) * d;
        const T* src = cache.lnf_out.data() + static_cast<std::size_t>(b) * tokens * d;
        for (int t = 0; t < tokens; ++t)
            for (int j = 0; j < d; ++j)
                dst[j] += src[static_cast<std::size_t>(t) * d + j];
        for (int j = 0; j < d; ++j)
            dst[j] /= T(tokens);
    }

    cache.answer_logits.resize(static_cast<std::size_t>(B) * cfg.n_a);
    nn::linear_forward(cache.pooled.data(), static_cast<std::size_t>(B), d, cfg.n_a,
                       params.ptr("head.w"), params.ptr("head.b"), cache.answer_logits.data());
}

// Rule classifier: linear(d -> 128), GELU, linear(128 -> rule_dim), fed by
// the same pooled embedding as the answer head.
template <typename T>
void aux_head_forward(const ParameterSet<T>& params, int B, NetCache<T>& cache) {
    const ModelConfig& cfg = params.config;
    const int d = cfg.dim(), hid = ModelConfig::aux_hidden;
    cache.aux_pre.resize(static_cast<std::size_t>(B) * hid);
    nn::linear_forward(cache.pooled.data(), static_cast<std::size_t>(B), d, hid,
                       params.ptr("aux1.w"), params.ptr("aux1.b"), cache.aux_pre.data());
    std::vector<T> act(cache.aux_pre.size());
    for (std::size_t i = 0; i < act.size(); ++i)
        act[i] = nn::gelu(cache.aux_pre[i]);
    cache.rule_logits.resize(static_cast<std::size_t>(B) * cfg.rule_dim);
    nn::linear_forward(act.data(), static_cast<std::size_t>(B), hid, cfg.rule_dim,
                       params.ptr("aux2.w"), params.ptr("aux2.b"), cache.rule_logits.data());
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

// canvases: (B, input_h * input_w), row-major. Fills the cache with every
// intermediate needed by model_backward.
template <typename T>
void model_forward(const T* canvases, int B, const ParameterSet<T>& params, BufferSet<T>& buffers,
                   Mode mode, NetCache<T>& cache) {
    const ModelConfig& cfg = params.config;
    stem_forward(canvases, B, params, buffers, mode, cache);

    cache.blocks.resize(static_cast<std::size_t>(cfg.blocks));
    const std::size_t nd = static_cast<std::size_t>(B) * cfg.tokens() * cfg.dim();
    std::vector<T> z = cache.tokens0;
    std::vector<T> z_next(nd);
    for (int l = 0; l < cfg.blocks; ++l) {
        auto& bc = cache.blocks[static_cast<std::size_t>(l)];
        token_mixer_forward(params, l, z.data(), B, bc);
        channel_mixer_forward(params, l, B, bc, z_next.data());
        z.swap(z_next);
    }
    cache.final_in = std::move(z);
    head_forward(params, cache.final_in.data(), B, cache);
    aux_head_forward(params, B, cache);
}

// Accumulates parameter gradients into `grad` (zeroed here) given loss
// gradients w.r.t. both logit vectors.
template <typename T>
void model_backward(const T* canvases, const ParameterSet<T>& params, const NetCache<T>& cache,
                    const T* d_answer_logits, const T* d_rule_logits, std::vector<T>& grad) {
    const ModelConfig& cfg = params.config;
    const int B = cache.batch;
    const int d = cfg.dim(), tokens = cfg.tokens(), hid = ModelConfig::aux_hidden;
    grad.assign(count_params(cfg), T(0));

    // Heads back to the pooled embedding.
    std::vector<T> d_pooled(static_cast<std::size_t>(B) * d, T(0));
    nn::linear_backward(cache.pooled.data(), d_answer_logits, static_cast<std::size_t>(B), d,
                        cfg.n_a, params.ptr("head.w"), grad.data() + params.entry("head.w").offset,
                        grad.data() + params.entry("head.b").offset, d_pooled.data());
    {
        std::vector<T> act(cache.aux_pre.size());
        for (std::size_t i = 0; i < act.size(); ++i)
            act[i] = nn::gelu(cache.aux_pre[i]);
        std::vector<T> d_act(act.size());
        nn::linear_backward(act.data(), d_rule_logits, static_cast<std::size_t>(B), hid,
                            cfg.rule_dim, params.ptr("aux2.w"),
                            grad.data() + params.entry("aux2.w").offset,
                            grad.data() + params.entry("aux2.b").offset, d_act.data());
        for (std::size_t i = 0; i < d_act.size(); ++i)
            d_act[i] *= nn::gelu_grad(cache.aux_pre[i]);
        std::vector<T> d_pooled_aux(d_pooled.size());
        nn::linear_backward(cache.pooled.data(), d_act.data(), static_cast<std::size_t>(B), d, hid,
                            params.ptr("aux1.w"), grad.data() + params.entry("aux1.w").offset,
                            grad.data() + params.entry("aux1.b").offset, d_pooled_aux.data());
        for (std::size_t i = 0; i < d_pooled.size(); ++i)
            d_pooled[i] += d_pooled_aux[i];
    }

    // Mean pool -> final norm.
    const std::size_t n = static_cast<std::size_t>(B) * tokens;
    std::vector<T> d_lnf(n * static_cast<std::size_t>(d));
    for (int b = 0; b < B; ++b) {
        const T* src = d_pooled.data() + static_cast<std::size_t>(b) * d;
        T* dst = d_lnf.data() + static_cast<std::size_t>(b) * tokens * d;
        for (int t = 0; t < tokens; ++t)
            for (int j = 0; j < d; ++j)
                dst[static_cast<std::size_t>(t) * d + j] = src[j] / T(tokens);
    }
    std::vector<T> d_z(n * static_cast<std::size_t>(d));
    nn::layernorm_backward(cache.final_in.data(), d_lnf.data(), n, d, params.ptr("final.gamma"),
                           cache.lnf_mean.data(), cache.lnf_invstd.data(), d_z.data(),
                           grad.data() + params.entry("final.gamma").offset,
                           grad.data() + params.entry("final.beta").offset);

    std::vector<T> d_z_prev(d_z.size());
    for (int l = cfg.blocks - 1; l >= 0; --l) {
        block_backward(params, l, B, cache.blocks[static_cast<std::size_t>(l)], d_z.data(),
                       d_z_prev.data(), grad.data());
        d_z.swap(d_z_prev);
    }
    stem_backward(canvases, params, cache, d_z.data(), grad.data());
}

} // namespace avru
