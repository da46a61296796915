#pragma once

#include <abig/rng.hpp>
#include <abig/tensor.hpp>

#include <cstddef>
#include <vector>

namespace abig {

struct GnnConfig {
    std::size_t in_dim = 69;
    std::vector<std::size_t> gcn_dims = {128, 128, 128};
    std::vector<std::size_t> head_dims = {128}; // hidden head widths, C appended
    std::size_t n_classes = 3;
    double dropout = 0.2;
};

// GCN stack weights/biases plus the jumping-knowledge MLP head. Biases are
// zero-initialized; weights use Glorot-uniform fan-in/fan-out limits.
struct ClassifierParams {
    GnnConfig cfg;
    std::vector<Tensor> gcn_w, gcn_b;
    std::vector<Tensor> head_w, head_b;

    static ClassifierParams init(const GnnConfig& cfg, Rng& rng);

    std::vector<Tensor*> all();
    std::size_t count() const;
    std::size_t jk_width() const;
    void set_requires_grad(bool on);
    void zero_grad();
};

// Symmetric degree normalization D^{-1/2} A D^{-1/2}. The input must be
// symmetric with unit diagonal and entries in [0,1]; degrees are then >= 1.
Tape::Id normalize_adjacency(Tape& tape, Tape::Id a);

// Layer outputs H^(1..L), each Dropout(ReLU(A_hat H W + b)); dropout only
// fires in train mode.
std::vector<Tape::Id> gcn_forward(Tape& tape, Tape::Id x, Tape::Id a_hat,
                                  ClassifierParams& params, bool train_mode, Rng& rng);

// Mean-pool every layer output over nodes, concatenate, run the MLP head.
// Returns 1 x C logits.
Tape::Id jk_logits(Tape& tape, const std::vector<Tape::Id>& layer_outputs,
                   ClassifierParams& params, bool train_mode, Rng& rng);

// Class probability row vector (softmax over jk_logits).
Tape::Id jk_classify(Tape& tape, const std::vector<Tape::Id>& layer_outputs,
                     ClassifierParams& params, bool train_mode, Rng& rng);

// Eval-mode argmax with ties broken toward the lowest class index.
int predict(const Tensor& features, const Tensor& adjacency, ClassifierParams& params);

} // namespace abig
