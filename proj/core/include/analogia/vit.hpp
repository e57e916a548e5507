#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "analogia/image.hpp"
#include "analogia/tensor.hpp"

namespace analogia {

struct ViTConfig {
    std::size_t image_size = 8;
    std::size_t channels = 1;
    std::size_t patch_size = 2;
    std::size_t embed_dim = 16;
    std::size_t depth = 2;
    std::size_t heads = 2;
    std::size_t mlp_ratio = 2;
    std::size_t num_classes_capacity = 64;

    void validate() const;
    std::size_t num_patches() const;  // L
    std::size_t patch_dim() const;    // patch_size^2 * channels
    bool operator==(const ViTConfig&) const = default;
};

// Which parameter groups receive gradients.
enum class Stage {
    kAnalogy,   // nothing in the backbone or head; only external prompts train
    kFinetune,  // per-block MLP (fc1, fc2) and the classification head
    kFull,
};

const char* stage_name(Stage stage);

// Learnable J x D tokens bound to one old class.
struct APrompt {
    ClassId class_id = 0;
    Tensor tokens;

    std::size_t length() const { return tokens.rows(); }
};

APrompt make_prompt(ClassId class_id, std::size_t length, std::size_t embed_dim, std::uint64_t seed,
                    double init_std = 0.02);

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Small pre-norm vision transformer.
//
// Token layout per sample: [class] + L patch tokens (each with a learned
// positional embedding), then J prompt tokens without positional terms.
// The feature is the final-norm output at the class-token position.
class TinyViT {
public:
    TinyViT(ViTConfig config, std::uint64_t init_seed);

    TinyViT(const TinyViT&) = delete;
    TinyViT& operator=(const TinyViT&) = delete;
    TinyViT(TinyViT&&) noexcept = default;
    TinyViT& operator=(TinyViT&&) noexcept = default;

    const ViTConfig& config() const { return config_; }

    // Patch projections before class token and positions, L x D.
    Tensor patch_tokens(const Image& image) const;
    // (L+1) x D: row 0 is class token + pos[0], rows 1..L patches + pos.
    Tensor patch_embed(const Image& image) const;

    // 1 x D feature; the prompt, if any, is appended after the image tokens.
    Tensor encode(const Image& image, const APrompt* prompt = nullptr) const;
    // B x D features. `prompt_tokens` (J x D) is shared across the batch.
    Tensor encode_batch(std::span<const Image* const> images, const Tensor* prompt_tokens = nullptr) const;

    Tensor head_logits(const Tensor& features) const;
    // Softmax-normalized head output over every registered class.
    Tensor head(const Tensor& features) const;

    std::size_t num_classes() const { return num_classes_; }
    // Appends zero-initialized head rows.
    void register_classes(std::size_t count);

    Stage stage() const { return stage_; }
    void set_stage(Stage stage);
    bool frozen() const { return frozen_; }

    std::vector<Tensor> trainable_parameters() const;
    std::vector<NamedTensor> named_parameters() const;
    std::size_t parameter_count() const;
    // Overwrites parameter values by name (checkpoint restore). Head shape
    // may differ; it is resized to the stored class count.
    void load_parameters(const std::vector<NamedTensor>& values);

    // Frozen deep copy: never trains, shares no storage with the source.
    TinyViT snapshot() const;

    // Prompt-conditioned forward passes run on the calling thread (instrumentation).
    static std::uint64_t prompted_forward_count();

private:
    struct Block {
        Tensor ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b;
        Tensor ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
    };

    struct ShellTag {};
    TinyViT(ViTConfig config, ShellTag);  // uninitialized shell for snapshot()
    Tensor patch_matrix(std::span<const Image* const> images) const;
    Tensor mlp(const Block& blk, const Tensor& x) const;
    void apply_stage();

    ViTConfig config_;
    Tensor patch_w_, patch_b_, cls_, pos_;
    std::vector<Block> blocks_;
    Tensor norm_g_, norm_b_;
    Tensor head_w_, head_b_;
    std::size_t num_classes_ = 0;
    Stage stage_ = Stage::kFull;
    bool frozen_ = false;
};

std::vector<const Image*> image_pointers(std::span<const Sample> samples);

// Detached features, computed in chunks without recording a graph.
std::vector<std::vector<double>> extract_features(const TinyViT& model, std::span<const Image* const> images,
                                                  const Tensor* prompt_tokens = nullptr, std::size_t chunk = 64);

}  // namespace analogia
