#include "analogia/analogy.hpp"

#include <algorithm>
#include <numeric>

#include "analogia/errors.hpp"
#include "analogia/ops.hpp"
#include "analogia/optim.hpp"
#include "analogia/rng.hpp"

namespace analogia {

void PromptTrainConfig::validate() const {
    if (K == 0) throw ConfigError("prompt.K must be at least 1");
    if (J == 0) throw ConfigError("prompt.J must be at least 1");
    if (omega < 0.0) throw ConfigError("prompt.Omega must be non-negative");
    if (batch_size < 2) throw ConfigError("prompt.batch_size must be at least 2");
    if (!(learning_rate > 0.0)) throw ConfigError("prompt.lr must be positive");
}

std::vector<std::size_t> select_knn_subset(std::span<const Vec> features, std::span<const double> prototype,
                                           std::size_t K, double scale) {
    if (features.empty()) throw ContractError("select_knn_subset: no candidate samples");
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) ranked.emplace_back(distance(features[i], prototype, scale), i);
    std::sort(ranked.begin(), ranked.end());
    const std::size_t keep = std::min(K, ranked.size());
    std::vector<std::size_t> out(keep);
    for (std::size_t i = 0; i < keep; ++i) out[i] = ranked[i].second;
    return out;
}

std::vector<std::size_t> select_knn_subset(const TinyViT& old_model, std::span<const Sample> samples,
                                           std::span<const double> prototype, std::size_t K, double scale) {
    if (samples.empty()) throw ContractError("select_knn_subset: no candidate samples");
    auto images = image_pointers(samples);
    auto features = extract_features(old_model, images);
    return select_knn_subset(features, prototype, K, scale);
}

ClassSubset build_class_subset(std::span<const Vec> features, const std::vector<Vec>& prototypes, std::size_t K,
                               double scale) {
    constexpr std::size_t kNone = static_cast<std::size_t>(-1);
    std::vector<std::size_t> owner(features.size(), kNone);
    std::vector<double> owner_dist(features.size(), 0.0);
    for (std::size_t m = 0; m < prototypes.size(); ++m) {
        for (std::size_t i : select_knn_subset(features, prototypes[m], K, scale)) {
            const double d = distance(features[i], prototypes[m], scale);
            if (owner[i] == kNone || d < owner_dist[i]) {
                owner[i] = m;
                owner_dist[i] = d;
            }
        }
    }
    ClassSubset subset;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (owner[i] == kNone) continue;
        subset.samples.push_back(i);
        subset.target.push_back(owner[i]);
    }
    return subset;
}

Tensor loss_cc(const Tensor& probs, std::size_t target_column) {
    if (target_column >= probs.cols()) throw ContractError("loss_cc: target class is not in the head");
    Tensor p = slice_cols(probs, target_column, target_column + 1);
    return scale(mean(log(clamp_min(p, 1e-12))), -1.0);
}

Tensor loss_pp(const Tensor& features, const Tensor& targets, double scale_factor) {
    Tensor t = targets;
    if (targets.rows() == 1 && features.rows() > 1) {
        std::vector<std::size_t> rows(features.rows(), 0);
        t = gather_rows(targets, rows);
    }
    return mean(normalized_distance_rows(t, features, scale_factor));
}

Tensor loss_de(const Tensor& features, double omega, double scale_factor) {
    const std::size_t n = features.rows();
    if (n < 2) throw ContractError("loss_de: needs at least two features");
    std::vector<std::size_t> left, right;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            left.push_back(i);
            right.push_back(j);
        }
    }
    Tensor d = normalized_distance_rows(gather_rows(features, left), gather_rows(features, right), scale_factor);
    Tensor hinge = relu(add_scalar(scale(d, -1.0), omega));
    return scale(sum(hinge), 1.0 / static_cast<double>(n * (n - 1)));
}

Tensor prompt_objective(const TinyViT& old_model, std::span<const Image* const> images, const Tensor& targets,
                        const Tensor& prompt_tokens, std::size_t target_column, const PromptTrainConfig& cfg,
                        double scale_factor) {
    Tensor features = old_model.encode_batch(images, &prompt_tokens);
    Tensor total = Tensor::scalar(0.0);
    if (cfg.use_cc) total = add(total, loss_cc(old_model.head(features), target_column));
    if (cfg.use_pp) total = add(total, loss_pp(features, targets, scale_factor));
    if (cfg.use_de && features.rows() >= 2) total = add(total, loss_de(features, cfg.omega, scale_factor));
    return total;
}

namespace {

Tensor rows_of(const std::vector<Vec>& rows, std::span<const std::size_t> pick) {
    const std::size_t d = rows.front().size();
    std::vector<double> data;
    data.reserve(pick.size() * d);
    for (auto i : pick) data.insert(data.end(), rows[i].begin(), rows[i].end());
    return Tensor::from({pick.size(), d}, std::move(data));
}

// Shuffled minibatches; a trailing singleton joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
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

PromptTrainResult train_prompt(const TinyViT& old_model, std::span<const Image* const> images,
                               const std::vector<Vec>& targets, ClassId class_id, std::size_t target_column,
                               const PromptTrainConfig& cfg, double scale_factor, std::uint64_t seed) {
    cfg.validate();
    if (images.empty()) throw ContractError("train_prompt: empty subset");
    if (targets.size() != images.size()) throw DimensionError("train_prompt: one target per image required");
    if (!old_model.frozen()) throw ContractError("train_prompt: the old model must be a frozen snapshot");

    PromptTrainResult result;
    result.prompt = make_prompt(class_id, cfg.J, old_model.config().embed_dim, mix_seed(seed, "prompt-init"),
                                cfg.init_std);
    std::vector<std::size_t> all(images.size());
    std::iota(all.begin(), all.end(), 0);
    const Tensor all_targets = rows_of(targets, all);
    {
        NoGradGuard no_grad;
        result.initial_loss =
            prompt_objective(old_model, images, all_targets, result.prompt.tokens, target_column, cfg, scale_factor)
                .item();
    }

    OptimizerOptions opts;
    opts.kind = OptimizerKind::kAdam;
    opts.learning_rate = cfg.learning_rate;
    Optimizer optim({result.prompt.tokens}, opts);
    Rng rng = Rng::substream(seed, "shuffle");
    std::vector<const Image*> batch_images;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& batch : make_batches(images.size(), cfg.batch_size, rng)) {
            batch_images.clear();
            for (auto i : batch) batch_images.push_back(images[i]);
            optim.zero_grad();
            Tensor loss = prompt_objective(old_model, batch_images, rows_of(targets, batch), result.prompt.tokens,
                                           target_column, cfg, scale_factor);
            if (!loss.requires_grad()) continue;  // every term disabled
            loss.backward();
            optim.step();
            ++result.steps;
        }
    }
    {
        NoGradGuard no_grad;
        result.final_loss =
            prompt_objective(old_model, images, all_targets, result.prompt.tokens, target_column, cfg, scale_factor)
                .item();
    }
    result.prompt.tokens.clear_grad();
    return result;
}

double conversion_rate(const TinyViT& model, std::span<const Image* const> images, const APrompt& prompt,
                       std::size_t target_column) {
    if (images.empty()) return 0.0;
    NoGradGuard no_grad;
    Tensor probs = model.head(model.encode_batch(images, &prompt.tokens));
    const std::size_t c = probs.cols();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        auto row = probs.data().subspan(i * c, c);
        const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == target_column) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(images.size());
}

}  // namespace analogia
