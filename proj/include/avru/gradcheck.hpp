#pragma once

#include <cstdint>
#include <vector>

#include "avru/loss.hpp"
#include "avru/network.hpp"
#include "avru/rng.hpp"

namespace avru {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Compares analytic parameter gradients of the total loss against central
// finite differences on `trials` randomly selected parameters. Runs in
// double precision on a synthetic batch; batch-norm train mode is part of
// the differentiated path.
inline GradCheckResult grad_check(const ModelConfig& cfg, double eps, int trials,
                                  std::uint64_t seed, int batch = 2, double beta = 1.0) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x47434b00ULL));

    auto params = init_parameters<double>(cfg, seed);
    // Perturb initialization so that no ReLU/GELU sits exactly at a kink.
    for (auto& v : params.values)
        v += 0.01 * rng.normal();

    const std::size_t canvas = static_cast<std::size_t>(cfg.input_h) * cfg.input_w;
    std::vector<double> x(static_cast<std::size_t>(batch) * canvas);
    for (auto& v : x)
        v = rng.uniform();
    std::vector<int> labels(static_cast<std::size_t>(batch));
    for (auto& l : labels)
        l = rng.uniform_int(0, cfg.n_a - 1);
    std::vector<double> targets(static_cast<std::size_t>(batch) * cfg.rule_dim);
    for (auto& t : targets)
        t = rng.bernoulli(0.3) ? 1.0 : 0.0;

    auto eval_loss = [&](const ParameterSet<double>& p) {
        BufferSet<double> buffers = BufferSet<double>::make(cfg);
        NetCache<double> cache;
        model_forward(x.data(), batch, p, buffers, Mode::train, cache);
        return loss_total(cache.answer_logits.data(), labels.data(), cache.rule_logits.data(),
                          targets.data(), batch, cfg.n_a, cfg.rule_dim, beta);
    };

    // Analytic gradient.
    std::vector<double> grad;
    {
        BufferSet<double> buffers = BufferSet<double>::make(cfg);
        NetCache<double> cache;
        model_forward(x.data(), batch, params, buffers, Mode::train, cache);
        std::vector<double> d_ans(static_cast<std::size_t>(batch) * cfg.n_a);
        std::vector<double> d_rule(static_cast<std::size_t>(batch) * cfg.rule_dim);
        loss_gradients(cache.answer_logits.data(), labels.data(), cache.rule_logits.data(),
                       targets.data(), batch, cfg.n_a, cfg.rule_dim, beta, d_ans.data(),
                       d_rule.data());
        model_backward(x.data(), params, cache, d_ans.data(), d_rule.data(), grad);
    }

    GradCheckResult result;
    const std::size_t total = params.values.size();
    for (int t = 0; t < trials; ++t) {
        const std::size_t idx = static_cast<std::size_t>(rng.uniform_index(total));
        const double saved = params.values[idx];
        params.values[idx] = saved + eps;
        const double up = eval_loss(params);
        params.values[idx] = saved - eps;
        const double down = eval_loss(params);
        params.values[idx] = saved;
        const double fd = (up - down) / (2.0 * eps);
        const double denom = std::max(std::abs(fd) + std::abs(grad[idx]), 1e-6);
        const double rel = std::abs(fd - grad[idx]) / denom;
        result.max_rel_error = std::max(result.max_rel_error, rel);
        ++result.checked;
    }
    return result;
}

} // namespace avru
