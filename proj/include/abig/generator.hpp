#pragma once

#include <abig/rng.hpp>
#include <abig/tensor.hpp>

#include <cstddef>
#include <vector>

namespace abig {

struct GeneratorConfig {
    std::size_t in_dim = 69;                  // per-patch width d; pairs use 2d
    std::vector<std::size_t> hidden = {128, 64};
    double tau_init = 1.0, tau_min = 0.1, gamma = 0.98;
};

// MLP mapping a concatenated feature pair to one edge logit.
struct GeneratorParams {
    GeneratorConfig cfg;
    std::vector<Tensor> w, b;

    static GeneratorParams init(const GeneratorConfig& cfg, Rng& rng);

    std::vector<Tensor*> all();
    std::size_t count() const;
    void set_requires_grad(bool on);
    void zero_grad();
};

struct TemperatureSchedule {
    double tau_init = 1.0, tau_min = 0.1, gamma = 0.98;
    double tau = 1.0;

    // once per outer iteration
    void anneal() { tau = std::max(tau_min, tau * gamma); }
};

// Logit matrix over all ordered patch pairs, entry (s,t) = MLP([x_s || x_t]).
// Gradients flow to the generator parameters; the features are data.
Tape::Id pairwise_logits(Tape& tape, const Tensor& features, GeneratorParams& params);

// sigma((logit + g)/tau) with fresh i.i.d. Gumbel noise in train mode and
// g = 0 otherwise; noise is a constant for differentiation purposes.
Tape::Id gumbel_sigmoid(Tape& tape, Tape::Id logits, double tau, Rng& rng, bool train_mode);

// (A + A^T)/2 then diagonal forced to exactly 1.
Tape::Id symmetrize_self_loop(Tape& tape, Tape::Id a);

// lambda * sum |A_jk| over every entry, diagonal included.
Tape::Id sparsity_penalty(Tape& tape, Tape::Id a, double lambda);

// Full training-path sample: logits -> gumbel-sigmoid -> symmetrize + loops.
Tape::Id sample_adjacency(Tape& tape, const Tensor& features, GeneratorParams& params,
                          double tau, Rng& rng, bool train_mode);

enum class AdjacencyMode { Soft, Hard };

// Deterministic inference: noise-free sigmoid at tau_min, symmetrized with
// unit diagonal; Hard additionally maps off-diagonals to 1 when >= 0.5.
Tensor eval_adjacency(const Tensor& features, GeneratorParams& params, AdjacencyMode mode);

} // namespace abig
