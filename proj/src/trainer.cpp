#include <abig/trainer.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace abig {

void TrainConfig::validate() const {
    if (eta_theta <= 0 || eta_psi <= 0) fail(Err::ConfigInvalid, "learning rates must be positive");
    if (batch == 0) fail(Err::ConfigInvalid, "batch size must be at least 1");
    if (lambda_sparse < 0) fail(Err::ConfigInvalid, "sparsity weight must be nonnegative");
    if (gnn.in_dim != gen.in_dim)
        fail(Err::ConfigInvalid, "classifier and generator disagree on the feature width");
}

Standardizer Standardizer::identity(std::size_t dim) {
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 1.0);
    return s;
}

Standardizer Standardizer::fit(const Dataset& data, const std::vector<std::size_t>& idx) {
    if (idx.empty()) fail(Err::EmptyInput, "cannot fit a standardizer on an empty split");
    const std::size_t dim = data.samples[idx[0]].features.cols;
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 0.0);
    std::size_t rows = 0;
    for (std::size_t i : idx) {
        const Tensor& x = data.samples[i].features;
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t j = 0; j < dim; ++j) s.mean[j] += x.at(r, j);
        rows += x.rows;
    }
    if (rows == 0) fail(Err::EmptyInput, "standardizer split holds no patch rows");
    for (double& m : s.mean) m /= double(rows);
    for (std::size_t i : idx) {
        const Tensor& x = data.samples[i].features;
        for (std::size_t r = 0; r < x.rows; ++r)
            for (std::size_t j = 0; j < dim; ++j) {
                double d = x.at(r, j) - s.mean[j];
                s.scale[j] += d * d;
            }
    }
    for (double& v : s.scale) {
        v = std::sqrt(v / double(rows));
        if (v == 0.0) v = 1.0;
    }
    return s;
}

Tensor Standardizer::apply(const Tensor& x) const {
    if (x.cols != mean.size()) fail(Err::ShapeMismatch, "feature width disagrees with the standardizer");
    Tensor out(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t j = 0; j < x.cols; ++j)
            out.at(r, j) = (x.at(r, j) - mean[j]) / scale[j];
    return out;
}

void Adam::attach(const std::vector<Tensor*>& params) {
    m.clear();
    v.clear();
    step = 0;
    for (Tensor* p : params) {
        m.emplace_back(p->size(), 0.0);
        v.emplace_back(p->size(), 0.0);
    }
}

void Adam::update(const std::vector<Tensor*>& params) {
    if (params.size() != m.size()) fail(Err::ShapeMismatch, "optimizer is attached to other parameters");
    for (std::size_t t = 0; t < params.size(); ++t)
        if (params[t]->size() != m[t].size() || params[t]->grad.size() != params[t]->size())
            fail(Err::ShapeMismatch, "optimizer is attached to other parameters");
    ++step;
    double c1 = 1.0 - std::pow(beta1, double(step));
    double c2 = 1.0 - std::pow(beta2, double(step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor* p = params[t];
        for (std::size_t i = 0; i < p->size(); ++i) {
            double g = p->grad[i];
            m[t][i] = beta1 * m[t][i] + (1.0 - beta1) * g;
            v[t][i] = beta2 * v[t][i] + (1.0 - beta2) * g * g;
            double mh = m[t][i] / c1;
            double vh = v[t][i] / c2;
            p->data[i] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

namespace {

// Shared per-sample loss graph; the phase decides which parameter set the
// gradient reaches and whether dropout fires.
Tape::Id sample_loss(Tape& t, const Tensor& x, int label, ClassifierParams& theta,
                     GeneratorParams& psi, double tau, double lambda, bool classifier_train,
                     Rng& rng, double* ce_out) {
    Tape::Id a = sample_adjacency(t, x, psi, tau, rng, true);
    Tape::Id a_hat = normalize_adjacency(t, a);
    auto layers = gcn_forward(t, t.constant(x), a_hat, theta, classifier_train, rng);
    Tape::Id ce = t.softmax_cross_entropy(jk_logits(t, layers, theta, classifier_train, rng),
                                          {label});
    if (ce_out) *ce_out = t.value(ce).data[0];
    if (lambda == 0.0) return ce;
    return t.add(ce, sparsity_penalty(t, a, lambda));
}

int checked_label(const Dataset& data, std::size_t i, std::size_t n_classes) {
    int y = data.samples[i].label;
    if (y < 0 || std::size_t(y) >= n_classes)
        fail(Err::ConfigInvalid, "label out of range for " + data.samples[i].image_id);
    return y;
}

} // namespace

double upper_step(const Dataset& data, const std::vector<std::size_t>& batch,
                  const Standardizer& stand, ClassifierParams& theta, GeneratorParams& psi,
                  Adam& opt, double tau, double lambda, Rng& rng) {
    if (batch.empty()) fail(Err::EmptyBatch, "upper step needs a nonempty batch");
    theta.set_requires_grad(false);
    psi.set_requires_grad(true);
    psi.zero_grad();
    double total = 0;
    const double inv = 1.0 / double(batch.size());
    for (std::size_t i : batch) {
        int y = checked_label(data, i, theta.cfg.n_classes);
        Tensor x = stand.apply(data.samples[i].features);
        Tape t;
        Tape::Id loss = sample_loss(t, x, y, theta, psi, tau, lambda, false, rng, nullptr);
        total += t.value(loss).data[0];
        t.backward(t.scalar_mul(loss, inv));
    }
    opt.update(psi.all());
    return total * inv;
}

double lower_step(const Dataset& data, const std::vector<std::size_t>& batch,
                  const Standardizer& stand, ClassifierParams& theta, GeneratorParams& psi,
                  Adam& opt, double tau, Rng& rng) {
    if (batch.empty()) fail(Err::EmptyBatch, "lower step needs a nonempty batch");
    theta.set_requires_grad(true);
    psi.set_requires_grad(false);
    theta.zero_grad();
    double total = 0;
    const double inv = 1.0 / double(batch.size());
    for (std::size_t i : batch) {
        int y = checked_label(data, i, theta.cfg.n_classes);
        Tensor x = stand.apply(data.samples[i].features);
        Tape t;
        Tape::Id loss = sample_loss(t, x, y, theta, psi, tau, 0.0, true, rng, nullptr);
        total += t.value(loss).data[0];
        t.backward(t.scalar_mul(loss, inv));
    }
    opt.update(theta.all());
    return total * inv;
}

namespace {

// one full pass in minibatches; returns the sample-weighted mean loss
template <typename Step>
double epoch_pass(std::vector<std::size_t>& order, std::size_t batch_size, Rng& rng, Step step) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::size_t stop = std::min(order.size(), start + batch_size);
        std::vector<std::size_t> batch(order.begin() + long(start), order.begin() + long(stop));
        total += step(batch) * double(batch.size());
    }
    return total / double(order.size());
}

double mean_offdiag(const Tensor& a) {
    if (a.rows < 2) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j)
            if (i != j) s += a.at(i, j);
    return s / double(a.rows * (a.rows - 1));
}

} // namespace

TrainResult train(const Dataset& data, const std::vector<std::size_t>& train_idx,
                  const std::vector<std::size_t>& val_idx, const TrainConfig& cfg) {
    cfg.validate();
    if (train_idx.empty() || val_idx.empty())
        fail(Err::ConfigInvalid, "training needs nonempty train and validation splits");
    Rng rng(cfg.seed);
    TrainResult out{ClassifierParams::init(cfg.gnn, rng), GeneratorParams::init(cfg.gen, rng),
                    Standardizer{}, LossCurves{}, 0.0, 0.0};
    out.stand = cfg.normalize_features ? Standardizer::fit(data, train_idx)
                                       : Standardizer::identity(cfg.gnn.in_dim);
    Adam opt_theta(cfg.eta_theta), opt_psi(cfg.eta_psi);
    opt_theta.attach(out.theta.all());
    opt_psi.attach(out.psi.all());
    TemperatureSchedule sched{cfg.gen.tau_init, cfg.gen.tau_min, cfg.gen.gamma, cfg.gen.tau_init};

    std::vector<std::size_t> val_order = val_idx, train_order = train_idx;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        out.curves.upper.push_back(epoch_pass(val_order, cfg.batch, rng, [&](const auto& b) {
            return upper_step(data, b, out.stand, out.theta, out.psi, opt_psi, sched.tau,
                              cfg.lambda_sparse, rng);
        }));
        out.curves.lower.push_back(epoch_pass(train_order, cfg.batch, rng, [&](const auto& b) {
            return lower_step(data, b, out.stand, out.theta, out.psi, opt_theta, sched.tau, rng);
        }));
        sched.anneal();
    }
    out.final_tau = sched.tau;

    out.theta.set_requires_grad(false);
    out.psi.set_requires_grad(false);
    double mass = 0;
    std::size_t count = 0;
    for (const auto* idx : {&train_idx, &val_idx})
        for (std::size_t i : *idx) {
            Tensor x = out.stand.apply(data.samples[i].features);
            mass += mean_offdiag(eval_adjacency(x, out.psi, AdjacencyMode::Soft));
            ++count;
        }
    out.mean_offdiag_mass = mass / double(count);
    out.opt_theta = std::move(opt_theta);
    out.opt_psi = std::move(opt_psi);
    return out;
}

namespace {

Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
    Metrics m;
    m.confusion = std::move(confusion);
    const std::size_t c = m.confusion.size();
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            total += m.confusion[i][j];
            if (i == j) correct += m.confusion[i][j];
        }
    m.accuracy = total ? double(correct) / double(total) : 0.0;
    double f1_sum = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t tp = m.confusion[k][k], fp = 0, fn = 0;
        for (std::size_t i = 0; i < c; ++i)
            if (i != k) {
                fp += m.confusion[i][k];
                fn += m.confusion[k][i];
            }
        double prec = (tp + fp) ? double(tp) / double(tp + fp) : 0.0;
        double rec = (tp + fn) ? double(tp) / double(tp + fn) : 0.0;
        f1_sum += (prec + rec > 0) ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    m.macro_f1 = c ? f1_sum / double(c) : 0.0;
    return m;
}

} // namespace

Metrics evaluate(const Dataset& data, const std::vector<std::size_t>& test_idx,
                 ClassifierParams& theta, GeneratorParams& psi, const Standardizer& stand,
                 AdjacencyMode mode) {
    if (test_idx.empty()) fail(Err::EmptyTestSet, "evaluation needs at least one image");
    const std::size_t c = theta.cfg.n_classes;
    std::vector<std::vector<std::size_t>> confusion(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i : test_idx) {
        int y = checked_label(data, i, c);
        Tensor x = stand.apply(data.samples[i].features);
        Tensor a = eval_adjacency(x, psi, mode);
        confusion[std::size_t(y)][std::size_t(predict(x, a, theta))]++;
    }
    return metrics_from_confusion(std::move(confusion));
}

std::vector<FoldSplit> make_folds(const Dataset& data, std::size_t k, std::uint64_t seed) {
    if (k < 2) fail(Err::FoldTooSmall, "cross-validation needs at least two folds");
    if (data.samples.empty()) fail(Err::FoldTooSmall, "cannot fold an empty dataset");
    std::size_t n_classes = data.class_names.size();
    std::vector<std::vector<std::size_t>> by_class(std::max<std::size_t>(n_classes, 1));
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        int y = data.samples[i].label;
        if (y < 0 || (n_classes && std::size_t(y) >= n_classes))
            fail(Err::ConfigInvalid, "label out of range for " + data.samples[i].image_id);
        if (std::size_t(y) >= by_class.size()) by_class.resize(std::size_t(y) + 1);
        by_class[std::size_t(y)].push_back(i);
    }
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> folds(k);
    // contiguous blocks of each shuffled class list go to folds; the extra
    // images rotate with the class index so total fold sizes stay balanced
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& list = by_class[c];
        rng.shuffle(list);
        std::size_t q = list.size() / k, r = list.size() % k, pos = 0;
        for (std::size_t f = 0; f < k; ++f) {
            std::size_t extra = ((f + k - c % k) % k) < r ? 1 : 0;
            for (std::size_t j = 0; j < q + extra; ++j) folds[f].push_back(list[pos++]);
        }
    }
    for (const auto& f : folds)
        if (f.empty()) fail(Err::FoldTooSmall, "a fold came out empty; use fewer folds");

    std::vector<FoldSplit> out(k);
    for (std::size_t f = 0; f < k; ++f) {
        FoldSplit& split = out[f];
        split.test = folds[f];
        // development images per class, preserving shuffled order
        std::vector<std::vector<std::size_t>> dev(by_class.size());
        std::size_t dev_total = 0;
        for (std::size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            for (std::size_t i : folds[g]) {
                dev[std::size_t(data.samples[i].label)].push_back(i);
                ++dev_total;
            }
        }
        // 20% validation, apportioned per class by largest remainder
        std::size_t want = std::size_t(std::llround(0.2 * double(dev_total)));
        want = std::min(std::max<std::size_t>(want, 1), dev_total - 1);
        std::vector<std::size_t> take(dev.size(), 0);
        std::vector<std::pair<double, std::size_t>> frac;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < dev.size(); ++c) {
            double quota = double(want) * double(dev[c].size()) / double(dev_total);
            take[c] = std::min(std::size_t(quota), dev[c].size());
            assigned += take[c];
            frac.push_back({quota - double(take[c]), c});
        }
        std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t j = 0; assigned < want && j < frac.size(); ++j) {
            std::size_t c = frac[j].second;
            if (take[c] < dev[c].size()) {
                ++take[c];
                ++assigned;
            }
        }
        for (std::size_t c = 0; c < dev.size(); ++c)
            for (std::size_t j = 0; j < dev[c].size(); ++j)
                (j < take[c] ? split.val : split.train).push_back(dev[c][j]);
        if (split.train.empty() || split.val.empty())
            fail(Err::FoldTooSmall, "development split too small for an 80/20 division");
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.val.begin(), split.val.end());
        std::sort(split.test.begin(), split.test.end());
    }
    return out;
}

CvResult cross_validate(const Dataset& data, std::size_t k, const TrainConfig& cfg) {
    cfg.validate();
    CvResult out;
    out.folds = make_folds(data, k, cfg.seed);
    for (std::size_t f = 0; f < k; ++f) {
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + f; // distinct initialization per round
        out.runs.push_back(train(data, out.folds[f].train, out.folds[f].val, fold_cfg));
        TrainResult& run = out.runs.back();
        out.fold_metrics.push_back(
            evaluate(data, out.folds[f].test, run.theta, run.psi, run.stand, cfg.eval_mode));
    }
    auto agg = [&](auto pick, double& mean, double& sd) {
        double s = 0;
        for (const Metrics& m : out.fold_metrics) s += pick(m);
        mean = s / double(k);
        double ss = 0;
        for (const Metrics& m : out.fold_metrics) ss += (pick(m) - mean) * (pick(m) - mean);
        sd = std::sqrt(ss / double(k - 1));
    };
    agg([](const Metrics& m) { return m.accuracy; }, out.mean_accuracy, out.sd_accuracy);
    agg([](const Metrics& m) { return m.macro_f1; }, out.mean_f1, out.sd_f1);
    return out;
}

Tensor cosine_adjacency(const Tensor& x, double threshold) {
    const std::size_t n = x.rows;
    std::vector<double> norm(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < x.cols; ++j) s += x.at(i, j) * x.at(i, j);
        norm[i] = std::sqrt(s);
    }
    Tensor a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        a.at(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double sim = 0;
            if (norm[i] > 0 && norm[j] > 0) {
                for (std::size_t d = 0; d < x.cols; ++d) sim += x.at(i, d) * x.at(j, d);
                sim /= norm[i] * norm[j];
            }
            a.at(i, j) = a.at(j, i) = sim > threshold ? 1.0 : 0.0;
        }
    }
    return a;
}

TrainResult fixed_graph_baseline(const Dataset& data, const std::vector<std::size_t>& train_idx,
                                 const std::vector<std::size_t>& val_idx, const TrainConfig& cfg,
                                 double threshold) {
    cfg.validate();
    if (train_idx.empty()) fail(Err::ConfigInvalid, "baseline training needs a nonempty split");
    Rng rng(cfg.seed);
    TrainResult out{ClassifierParams::init(cfg.gnn, rng), GeneratorParams{}, Standardizer{},
                    LossCurves{}, 0.0, 0.0};
    out.stand = cfg.normalize_features ? Standardizer::fit(data, train_idx)
                                       : Standardizer::identity(cfg.gnn.in_dim);
    Adam opt(cfg.eta_theta);
    opt.attach(out.theta.all());

    std::vector<std::size_t> order = train_idx;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        out.curves.lower.push_back(epoch_pass(order, cfg.batch, rng, [&](const auto& batch) {
            out.theta.set_requires_grad(true);
            out.theta.zero_grad();
            double total = 0;
            const double inv = 1.0 / double(batch.size());
            for (std::size_t i : batch) {
                int y = checked_label(data, i, out.theta.cfg.n_classes);
                Tensor x = out.stand.apply(data.samples[i].features);
                Tensor a = cosine_adjacency(data.samples[i].features, threshold);
                Tape t;
                Tape::Id a_hat = normalize_adjacency(t, t.constant(a));
                auto layers = gcn_forward(t, t.constant(x), a_hat, out.theta, true, rng);
                Tape::Id ce = t.softmax_cross_entropy(
                    jk_logits(t, layers, out.theta, true, rng), {y});
                total += t.value(ce).data[0];
                t.backward(t.scalar_mul(ce, inv));
            }
            opt.update(out.theta.all());
            return total * inv;
        }));
    }
    out.theta.set_requires_grad(false);

    double mass = 0;
    std::size_t count = 0;
    for (const auto* idx : {&train_idx, &val_idx})
        for (std::size_t i : *idx) {
            mass += mean_offdiag(cosine_adjacency(data.samples[i].features, threshold));
            ++count;
        }
    out.mean_offdiag_mass = count ? mass / double(count) : 0.0;
    out.opt_theta = std::move(opt);
    return out;
}

Metrics evaluate_fixed(const Dataset& data, const std::vector<std::size_t>& test_idx,
                       ClassifierParams& theta, const Standardizer& stand, double threshold) {
    if (test_idx.empty()) fail(Err::EmptyTestSet, "evaluation needs at least one image");
    const std::size_t c = theta.cfg.n_classes;
    std::vector<std::vector<std::size_t>> confusion(c, std::vector<std::size_t>(c, 0));
    for (std::size_t i : test_idx) {
        int y = checked_label(data, i, c);
        Tensor x = stand.apply(data.samples[i].features);
        Tensor a = cosine_adjacency(data.samples[i].features, threshold);
        confusion[std::size_t(y)][std::size_t(predict(x, a, theta))]++;
    }
    return metrics_from_confusion(std::move(confusion));
}

} // namespace abig
