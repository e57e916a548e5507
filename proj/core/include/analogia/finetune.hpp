#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "analogia/image.hpp"
#include "analogia/prototypes.hpp"
#include "analogia/tensor.hpp"
#include "analogia/vit.hpp"

namespace analogia {

struct FinetuneConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double grad_clip = 1.0;  // global gradient-norm clip, 0 disables
    bool use_sc = true;   // shift-consistency term (needs an old snapshot)
    bool use_kd = false;  // distillation from the old head, off by default
    double zeta = 2.0;    // distillation temperature
    // Restrict L_SC neighbours to samples sharing the label.
    bool sc_same_label = false;

    void validate() const;
};

// Cross-entropy of a softmax over the new-class columns [old_count, C) only.
// `labels` are head columns; each must lie in that range.
Tensor local_softmax_ce(const Tensor& logits, std::span<const std::size_t> labels, std::size_t old_count);

// -(1/N) sum_i sum_j softmax(teacher/zeta)[j] log softmax(student/zeta)[j].
// The teacher is treated as a constant.
Tensor kd_loss(const Tensor& teacher_logits, const Tensor& student_logits, double zeta);

// (1/N) sum_i d(gamma_i, Gamma_i) with gamma = new - old and Gamma_i the
// exp(-d(old_j, old_i)) weighted mean of gamma_j over j != i. Old features
// are constants. A row with a (near) zero gamma_i or Gamma_i contributes 0.
// With `labels`, neighbours are limited to samples of the same label.
Tensor shift_consistency_loss(const Tensor& old_features, const Tensor& new_features, double scale,
                              std::span<const std::size_t> labels = {});

struct FinetuneStats {
    double initial_loss = 0.0;  // mean batch loss of the first epoch
    double final_loss = 0.0;    // mean batch loss of the last epoch
    std::size_t steps = 0;
    double train_accuracy = 0.0;  // local-softmax argmax over the task data
};

// SGD-momentum training of `model` on one task. Sample labels are head
// columns; the task's classes occupy [old_count, model.num_classes()).
// Without `old_snapshot` only L_C is optimized.
FinetuneStats finetune_task(TinyViT& model, std::span<const Sample> data, const TinyViT* old_snapshot,
                            std::size_t old_count, const FinetuneConfig& cfg, double scale, std::uint64_t seed);

// Fraction of `data` whose new-class argmax matches the label.
double local_accuracy(const TinyViT& model, std::span<const Sample> data, std::size_t old_count);

}  // namespace analogia
