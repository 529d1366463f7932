#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "avru/errors.hpp"

namespace avru {

// Numerically stable softmax over one row of logits.
template <typename T>
std::vector<T> softmax(const T* logits, int n) {
    const T mx = *std::max_element(logits, logits + n);
    std::vector<T> p(static_cast<std::size_t>(n));
    T sum = 0;
    for (int i = 0; i < n; ++i) {
        p[static_cast<std::size_t>(i)] = std::exp(logits[i] - mx);
        sum += p[static_cast<std::size_t>(i)];
    }
    for (auto& v : p)
        v /= sum;
    return p;
}

template <typename T>
int argmax(const T* v, int n) {
    return static_cast<int>(std::max_element(v, v + n) - v);
}

// Per-sample loss: cross-entropy over the answer softmax plus beta times
// the summed binary cross-entropy of the sigmoid rule logits against the
// multi-hot rule target. Batch value is the mean over samples.
template <typename T>
T loss_total(const T* answer_logits, const int* labels, const T* rule_logits, const T* rule_targets,
             int B, int n_a, int rule_dim, T beta) {
    T total = 0;
    for (int b = 0; b < B; ++b) {
        const T* row = answer_logits + static_cast<std::size_t>(b) * n_a;
        const T mx = *std::max_element(row, row + n_a);
        T lse = 0;
        for (int i = 0; i < n_a; ++i)
            lse += std::exp(row[i] - mx);
        total += -(row[labels[b]] - mx - std::log(lse));

        if (beta != T(0)) {
            const T* z = rule_logits + static_cast<std::size_t>(b) * rule_dim;
            const T* y = rule_targets + static_cast<std::size_t>(b) * rule_dim;
            T aux = 0;
            for (int i = 0; i < rule_dim; ++i)
                aux += std::max(z[i], T(0)) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
            total += beta * aux;
        }
    }
    return total / T(B);
}

// Gradients of loss_total w.r.t. both logit blocks.
template <typename T>
void loss_gradients(const T* answer_logits, const int* labels, const T* rule_logits,
                    const T* rule_targets, int B, int n_a, int rule_dim, T beta, T* d_answer,
                    T* d_rule) {
    const T inv_b = T(1) / T(B);
    for (int b = 0; b < B; ++b) {
        const auto p = softmax(answer_logits + static_cast<std::size_t>(b) * n_a, n_a);
        T* da = d_answer + static_cast<std::size_t>(b) * n_a;
        for (int i = 0; i < n_a; ++i)
            da[i] = (p[static_cast<std::size_t>(i)] - (i == labels[b] ? T(1) : T(0))) * inv_b;
        T* dr = d_rule + static_cast<std::size_t>(b) * rule_dim;
        if (beta == T(0)) {
            std::fill(dr, dr + rule_dim, T(0));
            continue;
        }
        const T* z = rule_logits + static_cast<std::size_t>(b) * rule_dim;
        const T* y = rule_targets + static_cast<std::size_t>(b) * rule_dim;
        for (int i = 0; i < rule_dim; ++i) {
            const T sig = T(1) / (T(1) + std::exp(-z[i]));
            dr[i] = beta * (sig - y[i]) * inv_b;
        }
    }
}

template <typename T>
double batch_accuracy(const T* answer_logits, const int* labels, int B, int n_a) {
    int hits = 0;
    for (int b = 0; b < B; ++b)
        if (argmax(answer_logits + static_cast<std::size_t>(b) * n_a, n_a) == labels[b])
            ++hits;
    return static_cast<double>(hits) / B;
}

} // namespace avru
