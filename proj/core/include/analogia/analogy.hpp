#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "analogia/image.hpp"
#include "analogia/prototypes.hpp"
#include "analogia/tensor.hpp"
#include "analogia/vit.hpp"

namespace analogia {

struct PromptTrainConfig {
    std::size_t K = 50;  // subset size per prototype
    std::size_t J = 5;   // prompt token length
    double omega = 1.0;  // diversity margin
    std::size_t epochs = 5;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double init_std = 0.02;
    // Ablation switches. The objective is an unweighted sum of enabled terms.
    bool use_cc = true;
    bool use_pp = true;
    bool use_de = true;

    void validate() const;
};

// Indices of the K samples whose features are nearest to `prototype`,
// ordered by (distance, index). All indices when K >= |features|.
std::vector<std::size_t> select_knn_subset(std::span<const Vec> features, std::span<const double> prototype,
                                           std::size_t K, double scale);
std::vector<std::size_t> select_knn_subset(const TinyViT& old_model, std::span<const Sample> samples,
                                           std::span<const double> prototype, std::size_t K, double scale);

// Union of the per-prototype K-NN subsets of one class. Each sample is
// pulled towards the nearest of the prototypes that selected it.
struct ClassSubset {
    std::vector<std::size_t> samples;  // ascending sample index
    std::vector<std::size_t> target;   // prototype index per sample
};

ClassSubset build_class_subset(std::span<const Vec> features, const std::vector<Vec>& prototypes, std::size_t K,
                               double scale);

// -(1/N) sum_i log max(p_i[y], 1e-12); probs is N x C.
Tensor loss_cc(const Tensor& probs, std::size_t target_column);
// (1/N) sum_i d(target_i, f_i); targets is N x D (or 1 x D, broadcast).
Tensor loss_pp(const Tensor& features, const Tensor& targets, double scale);
// sum_{i<j} max(0, omega - d(f_i, f_j)) / (N (N-1)).
Tensor loss_de(const Tensor& features, double omega, double scale);

struct PromptTrainResult {
    APrompt prompt;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::size_t steps = 0;
};

// Unweighted L_PT over a whole set of images under the frozen model.
Tensor prompt_objective(const TinyViT& old_model, std::span<const Image* const> images, const Tensor& targets,
                        const Tensor& prompt_tokens, std::size_t target_column, const PromptTrainConfig& cfg,
                        double scale);

// Trains an A-prompt for one old class against a frozen snapshot with Adam.
// `targets` holds each image's prototype (N x D). The model is never written.
PromptTrainResult train_prompt(const TinyViT& old_model, std::span<const Image* const> images,
                               const std::vector<Vec>& targets, ClassId class_id, std::size_t target_column,
                               const PromptTrainConfig& cfg, double scale, std::uint64_t seed);

// Fraction of prompt-conditioned samples the model's head assigns to target_column.
double conversion_rate(const TinyViT& model, std::span<const Image* const> images, const APrompt& prompt,
                       std::size_t target_column);

}  // namespace analogia
