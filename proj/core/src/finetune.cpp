#include "analogia/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "analogia/errors.hpp"
#include "analogia/ops.hpp"
#include "analogia/optim.hpp"
#include "analogia/rng.hpp"

namespace analogia {

void FinetuneConfig::validate() const {
    if (batch_size < 2) throw ConfigError("finetune.batch_size must be at least 2");
    if (!(learning_rate > 0.0)) throw ConfigError("finetune.lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("finetune.momentum must be in [0, 1)");
    if (!(zeta > 0.0)) throw ConfigError("finetune.zeta must be positive");
    if (grad_clip < 0.0) throw ConfigError("finetune.grad_clip must be non-negative");
}

Tensor local_softmax_ce(const Tensor& logits, std::span<const std::size_t> labels, std::size_t old_count) {
    const std::size_t c = logits.cols();
    if (labels.size() != logits.rows()) throw DimensionError("local_softmax_ce: one label per row required");
    if (old_count >= c) throw ContractError("local_softmax_ce: no new classes in the head");
    std::vector<std::size_t> local(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < old_count || labels[i] >= c) {
            throw ContractError("local_softmax_ce: label " + std::to_string(labels[i]) + " is not a current-task class");
        }
        local[i] = labels[i] - old_count;
    }
    Tensor lp = log_softmax(slice_cols(logits, old_count, c));
    return scale(mean(pick_per_row(lp, local)), -1.0);
}

Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double zeta) {
    if (!(zeta > 0.0)) throw ContractError("kd_loss: temperature must be positive");
    if (teacher_logits.cols() != student_logits.cols() || teacher_logits.rows() != student_logits.rows()) {
        throw ContractError("kd_loss: teacher and student cover different classes");
    }
    Tensor teacher = softmax(teacher_logits.detach(), zeta).detach();
    Tensor cross = mul(teacher, log_softmax(student_logits, zeta));
    return scale(sum(cross), -1.0 / static_cast<double>(student_logits.rows()));
}

Tensor shift_consistency_loss(const Tensor& old_features, const Tensor& new_features, double scale_factor,
                              std::span<const std::size_t> labels) {
    const std::size_t n = new_features.rows();
    const std::size_t d = new_features.cols();
    if (old_features.rows() != n || old_features.cols() != d) {
        throw DimensionError("shift_consistency_loss: feature batches differ in shape");
    }
    if (n < 2) throw ContractError("shift_consistency_loss: needs at least two samples");
    if (!labels.empty() && labels.size() != n) throw DimensionError("shift_consistency_loss: one label per row");

    const Tensor old_c = old_features.detach();
    auto od = old_c.data();
    std::vector<double> w(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || (!labels.empty() && labels[j] != labels[i])) continue;
            dist[j] = distance(od.subspan(j * d, d), od.subspan(i * d, d), scale_factor);
            dmin = std::min(dmin, dist[j]);
        }
        if (!std::isfinite(dmin)) continue;  // no neighbour: Gamma_i = 0, term guarded to 0
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (std::isfinite(dist[j])) total += (w[i * n + j] = std::exp(-(dist[j] - dmin)));
        }
        for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= total;
    }
    Tensor gamma = sub(new_features, old_c);
    Tensor big_gamma = matmul(Tensor::from({n, n}, std::move(w)), gamma);
    return mean(normalized_distance_rows(gamma, big_gamma, scale_factor, ZeroNorm::kZeroTerm));
}

namespace {

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t s = 0; s < n; s += batch_size) {
        batches.emplace_back(order.begin() + s, order.begin() + std::min(n, s + batch_size));
    }
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back().front());
        batches.pop_back();
    }
    return batches;
}

}  // namespace

FinetuneStats finetune_task(TinyViT& model, std::span<const Sample> data, const TinyViT* old_snapshot,
                            std::size_t old_count, const FinetuneConfig& cfg, double scale_factor,
                            std::uint64_t seed) {
    cfg.validate();
    if (data.empty()) throw ContractError("finetune_task: empty task");
    if (model.frozen()) throw ContractError("finetune_task: model is a frozen snapshot");
    for (const auto& s : data) {
        if (s.label < 0 || static_cast<std::size_t>(s.label) < old_count ||
            static_cast<std::size_t>(s.label) >= model.num_classes()) {
            throw ContractError("finetune_task: label " + std::to_string(s.label) + " is not a current-task class");
        }
    }
    auto params = model.trainable_parameters();
    if (params.empty()) throw ContractError("finetune_task: no trainable parameters in stage " +
                                            std::string(stage_name(model.stage())));

    OptimizerOptions opts;
    opts.kind = OptimizerKind::kSgdMomentum;
    opts.learning_rate = cfg.learning_rate;
    opts.momentum = cfg.momentum;
    opts.max_grad_norm = cfg.grad_clip;
    Optimizer optim(params, opts);
    Rng rng = Rng::substream(seed, "shuffle");

    FinetuneStats stats;
    std::vector<const Image*> images;
    std::vector<std::size_t> labels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        std::size_t epoch_batches = 0;
        for (const auto& batch : shuffled_batches(data.size(), cfg.batch_size, rng)) {
            images.clear();
            labels.clear();
            for (auto i : batch) {
                images.push_back(&data[i].image);
                labels.push_back(static_cast<std::size_t>(data[i].label));
            }
            optim.zero_grad();
            Tensor features = model.encode_batch(images);
            Tensor logits = model.head_logits(features);
            Tensor loss = local_softmax_ce(logits, labels, old_count);
            if (old_snapshot && (cfg.use_sc || (cfg.use_kd && old_count > 0))) {
                Tensor old_features;
                {
                    NoGradGuard no_grad;
                    old_features = old_snapshot->encode_batch(images);
                }
                if (cfg.use_sc && batch.size() >= 2) {
                    std::span<const std::size_t> sc_labels;
                    if (cfg.sc_same_label) sc_labels = labels;
                    loss = add(loss, shift_consistency_loss(old_features, features, scale_factor, sc_labels));
                }
                if (cfg.use_kd && old_count > 0) {
                    Tensor teacher;
                    {
                        NoGradGuard no_grad;
                        teacher = slice_cols(old_snapshot->head_logits(old_features), 0, old_count);
                    }
                    loss = add(loss, kd_loss(teacher, slice_cols(logits, 0, old_count), cfg.zeta));
                }
            }
            loss.backward();
            optim.step();
            ++stats.steps;
            epoch_loss += loss.item();
            ++epoch_batches;
        }
        const double mean_loss = epoch_loss / static_cast<double>(epoch_batches);
        if (epoch == 0) stats.initial_loss = mean_loss;
        stats.final_loss = mean_loss;
    }
    for (auto& p : params) p.clear_grad();
    stats.train_accuracy = local_accuracy(model, data, old_count);
    return stats;
}

double local_accuracy(const TinyViT& model, std::span<const Sample> data, std::size_t old_count) {
    if (data.empty()) return 0.0;
    NoGradGuard no_grad;
    const std::size_t c = model.num_classes();
    std::size_t hits = 0;
    constexpr std::size_t kChunk = 64;
    for (std::size_t s = 0; s < data.size(); s += kChunk) {
        const std::size_t e = std::min(data.size(), s + kChunk);
        auto images = image_pointers(data.subspan(s, e - s));
        Tensor logits = model.head_logits(model.encode_batch(images));
        for (std::size_t i = s; i < e; ++i) {
            auto row = logits.data().subspan((i - s) * c + old_count, c - old_count);
            const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
            if (best + old_count == static_cast<std::size_t>(data[i].label)) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace analogia
