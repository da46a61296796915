#pragma once

#include <abig/generator.hpp>
#include <abig/gnn.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace abig {

struct TrainConfig {
    GnnConfig gnn;       // architecture dims + dropout
    GeneratorConfig gen; // edge MLP dims + temperature schedule
    double eta_theta = 1e-4;
    double eta_psi = 1e-3;
    std::size_t iterations = 200;
    std::size_t batch = 20;
    double lambda_sparse = 1e-4;
    std::uint64_t seed = 0;
    bool normalize_features = true;
    AdjacencyMode eval_mode = AdjacencyMode::Soft;

    void validate() const;
};

// One image: a bag of per-patch feature rows plus a class label.
struct Sample {
    std::string image_id;
    int label = 0;
    Tensor features; // n_patches x in_dim, raw scale
};

struct Dataset {
    std::vector<std::string> class_names;
    std::vector<Sample> samples;
};

// Per-column z-scoring fitted on the training split only; constant columns
// keep scale 1 so they map to zero rather than dividing by zero.
struct Standardizer {
    std::vector<double> mean, scale;

    static Standardizer fit(const Dataset& data, const std::vector<std::size_t>& idx);
    static Standardizer identity(std::size_t dim);
    Tensor apply(const Tensor& x) const;
};

struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> m, v;

    Adam() = default;
    explicit Adam(double lr_) : lr(lr_) {}
    void attach(const std::vector<Tensor*>& params);
    void update(const std::vector<Tensor*>& params);
};

struct LossCurves {
    std::vector<double> lower, upper; // one entry per outer iteration
};

struct Metrics {
    double accuracy = 0, macro_f1 = 0;
    std::vector<std::vector<std::size_t>> confusion; // [true][predicted]
};

struct TrainResult {
    ClassifierParams theta;
    GeneratorParams psi;
    Standardizer stand;
    LossCurves curves;
    double final_tau = 0;
    // mean off-diagonal entry of the deterministic soft adjacency over the
    // development images under the final parameters
    double mean_offdiag_mass = 0;
    // optimizer state at the final iteration, for checkpointing
    Adam opt_theta, opt_psi;
};

// Generator update on one validation minibatch: per sample, stochastic
// adjacency -> frozen classifier -> cross-entropy + sparsity; Adam on psi
// only. Returns the batch mean loss. The classifier runs with dropout off
// and is bitwise untouched.
double upper_step(const Dataset& data, const std::vector<std::size_t>& batch,
                  const Standardizer& stand, ClassifierParams& theta, GeneratorParams& psi,
                  Adam& opt, double tau, double lambda, Rng& rng);

// Classifier update on one training minibatch: adjacency still sampled with
// noise but the generator is frozen; cross-entropy only, dropout on, Adam on
// theta. Returns the batch mean loss.
double lower_step(const Dataset& data, const std::vector<std::size_t>& batch,
                  const Standardizer& stand, ClassifierParams& theta, GeneratorParams& psi,
                  Adam& opt, double tau, Rng& rng);

// Alternating optimization: per outer iteration an upper pass over the
// validation split, a lower pass over the training split, then one
// temperature anneal.
TrainResult train(const Dataset& data, const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& val_idx, const TrainConfig& cfg);

Metrics evaluate(const Dataset& data, const std::vector<std::size_t>& test_idx,
                 ClassifierParams& theta, GeneratorParams& psi, const Standardizer& stand,
                 AdjacencyMode mode);

struct FoldSplit {
    std::vector<std::size_t> train, val, test;
};

// Stratified image-level folds; the development portion of each round is
// split 80/20 into train/val, apportioned per class by largest remainder.
std::vector<FoldSplit> make_folds(const Dataset& data, std::size_t k, std::uint64_t seed);

struct CvResult {
    std::vector<FoldSplit> folds;
    std::vector<Metrics> fold_metrics;
    std::vector<TrainResult> runs;
    double mean_accuracy = 0, sd_accuracy = 0;
    double mean_f1 = 0, sd_f1 = 0;
};

CvResult cross_validate(const Dataset& data, std::size_t k, const TrainConfig& cfg);

// Binary adjacency from thresholded cosine similarity of raw feature rows,
// unit diagonal; rows with zero norm count as similarity 0.
Tensor cosine_adjacency(const Tensor& raw_features, double threshold);

// Ablation comparator: same classifier and budget, adjacency fixed by
// cosine_adjacency, no generator and no upper level.
TrainResult fixed_graph_baseline(const Dataset& data, const std::vector<std::size_t>& train_idx,
                                 const std::vector<std::size_t>& val_idx, const TrainConfig& cfg,
                                 double threshold);

Metrics evaluate_fixed(const Dataset& data, const std::vector<std::size_t>& test_idx,
                       ClassifierParams& theta, const Standardizer& stand, double threshold);

} // namespace abig
