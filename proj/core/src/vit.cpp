#include "analogia/vit.hpp"

#include <algorithm>
#include <optional>
#include <cmath>

#include "analogia/errors.hpp"
#include "analogia/ops.hpp"
#include "analogia/rng.hpp"

namespace analogia {

namespace {

thread_local std::uint64_t g_prompted_forwards = 0;

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return Tensor::from(std::move(shape), std::move(v));
}

Tensor linear_weight(std::size_t in, std::size_t out, Rng& rng) {
    return normal_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_row(matmul(x, w), b); }

// Lays out [cls+pos0, patches+pos, prompt] for each sample of the batch.
Tensor assemble_tokens(const Tensor& patches, const Tensor& cls, const Tensor& pos, const Tensor* prompt,
                       std::size_t batch, std::size_t num_patches) {
    const std::size_t d = cls.cols();
    const std::size_t j = prompt ? prompt->rows() : 0;
    const std::size_t seq = num_patches + 1 + j;
    std::vector<double> out(batch * seq * d);
    auto P = patches.data();
    auto C = cls.data();
    auto Q = pos.data();
    for (std::size_t b = 0; b < batch; ++b) {
        double* base = &out[b * seq * d];
        for (std::size_t c = 0; c < d; ++c) base[c] = C[c] + Q[c];
        for (std::size_t l = 0; l < num_patches; ++l)
            for (std::size_t c = 0; c < d; ++c)
                base[(1 + l) * d + c] = P[(b * num_patches + l) * d + c] + Q[(1 + l) * d + c];
        if (prompt) {
            auto T = prompt->data();
            std::copy(T.begin(), T.end(), base + (num_patches + 1) * d);
        }
    }
    std::vector<Tensor> parents{patches, cls, pos};
    if (prompt) parents.push_back(*prompt);
    return make_op_result({batch * seq, d}, std::move(out), std::move(parents),
                          [batch, num_patches, seq, d, j](detail::Node& self) {
                              const auto& G = self.grad;
                              auto grad_of = [&](std::size_t i) -> std::vector<double>* {
                                  if (i >= self.parents.size() || !self.parents[i]->requires_grad) return nullptr;
                                  return &self.parents[i]->ensure_grad();
                              };
                              auto* gp = grad_of(0);
                              auto* gc = grad_of(1);
                              auto* gq = grad_of(2);
                              auto* gt = grad_of(3);
                              for (std::size_t b = 0; b < batch; ++b) {
                                  const double* base = &G[b * seq * d];
                                  for (std::size_t c = 0; c < d; ++c) {
                                      if (gc) (*gc)[c] += base[c];
                                      if (gq) (*gq)[c] += base[c];
                                  }
                                  for (std::size_t l = 0; l < num_patches; ++l) {
                                      for (std::size_t c = 0; c < d; ++c) {
                                          const double g = base[(1 + l) * d + c];
                                          if (gp) (*gp)[(b * num_patches + l) * d + c] += g;
                                          if (gq) (*gq)[(1 + l) * d + c] += g;
                                      }
                                  }
                                  if (gt) {
                                      for (std::size_t k = 0; k < j * d; ++k)
                                          (*gt)[k] += base[(num_patches + 1) * d + k];
                                  }
                              }
                          });
}

}  // namespace

void ViTConfig::validate() const {
    if (image_size == 0 || patch_size == 0 || channels == 0 || embed_dim == 0 || depth == 0 || heads == 0 ||
        mlp_ratio == 0) {
        throw ConfigError("vit: all sizes must be positive");
    }
    if (image_size % patch_size != 0) throw ConfigError("vit: image_size must be divisible by patch_size");
    if (embed_dim % heads != 0) throw ConfigError("vit: embed_dim must be divisible by heads");
}

std::size_t ViTConfig::num_patches() const {
    const std::size_t side = image_size / patch_size;
    return side * side;
}

std::size_t ViTConfig::patch_dim() const { return patch_size * patch_size * channels; }

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::kAnalogy: return "analogy";
        case Stage::kFinetune: return "finetune";
        case Stage::kFull: return "full";
    }
    return "?";
}

APrompt make_prompt(ClassId class_id, std::size_t length, std::size_t embed_dim, std::uint64_t seed,
                    double init_std) {
    if (length == 0) throw ContractError("prompt length J must be at least 1");
    Rng rng(seed);
    APrompt p;
    p.class_id = class_id;
    p.tokens = normal_param({length, embed_dim}, init_std, rng);
    p.tokens.set_requires_grad(true);
    return p;
}

TinyViT::TinyViT(ViTConfig config, ShellTag) : config_(config) {}

TinyViT::TinyViT(ViTConfig config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    Rng rng(init_seed);
    const std::size_t d = config_.embed_dim;
    const std::size_t hidden = d * config_.mlp_ratio;
    patch_w_ = linear_weight(config_.patch_dim(), d, rng);
    patch_b_ = Tensor::zeros({1, d});
    cls_ = normal_param({1, d}, 0.1, rng);
    pos_ = normal_param({config_.num_patches() + 1, d}, 0.1, rng);
    for (std::size_t i = 0; i < config_.depth; ++i) {
        Block blk;
        blk.ln1_g = Tensor::full({1, d}, 1.0);
        blk.ln1_b = Tensor::zeros({1, d});
        blk.qkv_w = linear_weight(d, 3 * d, rng);
        blk.qkv_b = Tensor::zeros({1, 3 * d});
        blk.proj_w = linear_weight(d, d, rng);
        blk.proj_b = Tensor::zeros({1, d});
        blk.ln2_g = Tensor::full({1, d}, 1.0);
        blk.ln2_b = Tensor::zeros({1, d});
        blk.fc1_w = linear_weight(d, hidden, rng);
        blk.fc1_b = Tensor::zeros({1, hidden});
        blk.fc2_w = linear_weight(hidden, d, rng);
        blk.fc2_b = Tensor::zeros({1, d});
        blocks_.push_back(std::move(blk));
    }
    norm_g_ = Tensor::full({1, d}, 1.0);
    norm_b_ = Tensor::zeros({1, d});
    apply_stage();
}

Tensor TinyViT::patch_matrix(std::span<const Image* const> images) const {
    const std::size_t s = config_.image_size, p = config_.patch_size, ch = config_.channels;
    const std::size_t side = s / p;
    const std::size_t L = config_.num_patches(), pd = config_.patch_dim();
    std::vector<double> m(images.size() * L * pd);
    for (std::size_t b = 0; b < images.size(); ++b) {
        const Image& img = *images[b];
        if (img.height != s || img.width != s || img.channels != ch || img.pixels.size() != s * s * ch) {
            throw DimensionError("image is " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                                 std::to_string(img.channels) + ", model expects " + std::to_string(s) + "x" +
                                 std::to_string(s) + "x" + std::to_string(ch));
        }
        for (std::size_t py = 0; py < side; ++py) {
            for (std::size_t px = 0; px < side; ++px) {
                double* row = &m[(b * L + py * side + px) * pd];
                std::size_t k = 0;
                for (std::size_t y = 0; y < p; ++y)
                    for (std::size_t x = 0; x < p; ++x)
                        for (std::size_t c = 0; c < ch; ++c) row[k++] = img.at(py * p + y, px * p + x, c);
            }
        }
    }
    return Tensor::from({images.size() * L, pd}, std::move(m));
}

Tensor TinyViT::patch_tokens(const Image& image) const {
    const Image* ptr = &image;
    return linear(patch_matrix({&ptr, 1}), patch_w_, patch_b_);
}

Tensor TinyViT::patch_embed(const Image& image) const {
    return assemble_tokens(patch_tokens(image), cls_, pos_, nullptr, 1, config_.num_patches());
}

Tensor TinyViT::mlp(const Block& blk, const Tensor& x) const {
    Tensor h = layer_norm(x, blk.ln2_g, blk.ln2_b);
    h = gelu(linear(h, blk.fc1_w, blk.fc1_b));
    return add(x, linear(h, blk.fc2_w, blk.fc2_b));
}

Tensor TinyViT::encode_batch(std::span<const Image* const> images, const Tensor* prompt_tokens) const {
    if (images.empty()) throw ContractError("encode_batch: empty batch");
    const std::size_t batch = images.size();
    const std::size_t L = config_.num_patches();
    std::size_t j = 0;
    if (prompt_tokens) {
        if (prompt_tokens->cols() != config_.embed_dim) {
            throw DimensionError("prompt width " + std::to_string(prompt_tokens->cols()) +
                                 " does not match embed_dim " + std::to_string(config_.embed_dim));
        }
        j = prompt_tokens->rows();
        g_prompted_forwards += batch;
    }
    const std::size_t seq = L + 1 + j;

    Tensor patches = linear(patch_matrix(images), patch_w_, patch_b_);
    Tensor x = assemble_tokens(patches, cls_, pos_, prompt_tokens, batch, L);

    std::vector<std::size_t> cls_rows(batch);
    for (std::size_t b = 0; b < batch; ++b) cls_rows[b] = b * seq;

    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& blk = blocks_[i];
        Tensor h = layer_norm(x, blk.ln1_g, blk.ln1_b);
        h = multi_head_attention(linear(h, blk.qkv_w, blk.qkv_b), batch, seq, config_.heads);
        x = add(x, linear(h, blk.proj_w, blk.proj_b));
        // The MLP is row-wise, so the last block only needs the class rows.
        if (i + 1 == blocks_.size()) x = gather_rows(x, cls_rows);
        x = mlp(blk, x);
    }
    return layer_norm(x, norm_g_, norm_b_);
}

Tensor TinyViT::encode(const Image& image, const APrompt* prompt) const {
    const Image* ptr = &image;
    return encode_batch({&ptr, 1}, prompt ? &prompt->tokens : nullptr);
}

Tensor TinyViT::head_logits(const Tensor& features) const {
    if (num_classes_ == 0) throw ContractError("head: no classes registered");
    if (features.cols() != config_.embed_dim) throw DimensionError("head: feature width mismatch");
    return linear(features, head_w_, head_b_);
}

Tensor TinyViT::head(const Tensor& features) const { return softmax(head_logits(features)); }

void TinyViT::register_classes(std::size_t count) {
    if (frozen_) throw ContractError("cannot register classes on a frozen snapshot");
    if (count == 0) return;
    const std::size_t d = config_.embed_dim;
    const std::size_t next = num_classes_ + count;
    if (next > config_.num_classes_capacity) {
        throw ContractError("head capacity " + std::to_string(config_.num_classes_capacity) + " exceeded");
    }
    std::vector<double> w(d * next, 0.0), b(next, 0.0);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < num_classes_; ++c) w[r * next + c] = head_w_.at(r * num_classes_ + c);
    for (std::size_t c = 0; c < num_classes_; ++c) b[c] = head_b_.at(c);
    head_w_ = Tensor::from({d, next}, std::move(w));
    head_b_ = Tensor::from({1, next}, std::move(b));
    num_classes_ = next;
    apply_stage();
}

void TinyViT::set_stage(Stage stage) {
    if (frozen_) throw ContractError("a frozen snapshot has no trainable stage");
    stage_ = stage;
    apply_stage();
}

void TinyViT::apply_stage() {
    const bool all = !frozen_ && stage_ == Stage::kFull;
    const bool mlp_head = !frozen_ && (stage_ == Stage::kFull || stage_ == Stage::kFinetune);
    for (auto& [name, t] : named_parameters()) {
        const bool is_mlp = name.find(".fc1.") != std::string::npos || name.find(".fc2.") != std::string::npos;
        const bool is_head = name.rfind("head.", 0) == 0;
        t.set_requires_grad(all || ((is_mlp || is_head) && mlp_head));
    }
}

std::vector<NamedTensor> TinyViT::named_parameters() const {
    std::vector<NamedTensor> out{{"patch.w", patch_w_}, {"patch.b", patch_b_}, {"cls", cls_}, {"pos", pos_}};
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        const std::string p = "blocks." + std::to_string(i) + ".";
        out.push_back({p + "ln1.g", b.ln1_g});
        out.push_back({p + "ln1.b", b.ln1_b});
        out.push_back({p + "attn.qkv.w", b.qkv_w});
        out.push_back({p + "attn.qkv.b", b.qkv_b});
        out.push_back({p + "attn.proj.w", b.proj_w});
        out.push_back({p + "attn.proj.b", b.proj_b});
        out.push_back({p + "ln2.g", b.ln2_g});
        out.push_back({p + "ln2.b", b.ln2_b});
        out.push_back({p + "mlp.fc1.w", b.fc1_w});
        out.push_back({p + "mlp.fc1.b", b.fc1_b});
        out.push_back({p + "mlp.fc2.w", b.fc2_w});
        out.push_back({p + "mlp.fc2.b", b.fc2_b});
    }
    out.push_back({"norm.g", norm_g_});
    out.push_back({"norm.b", norm_b_});
    if (num_classes_ > 0) {
        out.push_back({"head.w", head_w_});
        out.push_back({"head.b", head_b_});
    }
    return out;
}

std::vector<Tensor> TinyViT::trainable_parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) {
        if (t.requires_grad()) out.push_back(t);
    }
    return out;
}

std::size_t TinyViT::parameter_count() const {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
}

void TinyViT::load_parameters(const std::vector<NamedTensor>& values) {
    if (frozen_) throw ContractError("cannot load parameters into a frozen snapshot");
    for (const auto& nv : values) {
        if (nv.name == "head.w") {
            if (nv.tensor.rows() != config_.embed_dim) throw DimensionError("head.w width mismatch");
            head_w_ = nv.tensor.clone();
            num_classes_ = nv.tensor.cols();
            continue;
        }
        if (nv.name == "head.b") {
            head_b_ = nv.tensor.clone();
            continue;
        }
        bool found = false;
        for (auto& [name, t] : named_parameters()) {
            if (name != nv.name) continue;
            if (t.shape() != nv.tensor.shape()) throw DimensionError("parameter " + name + " shape mismatch");
            auto dst = t.mutable_data();
            std::copy(nv.tensor.data().begin(), nv.tensor.data().end(), dst.begin());
            found = true;
        }
        if (!found) throw ContractError("unknown parameter '" + nv.name + "'");
    }
    if (num_classes_ > 0 && head_b_.numel() != num_classes_) throw DimensionError("head.b size mismatch");
    apply_stage();
}

TinyViT TinyViT::snapshot() const {
    TinyViT copy(config_, ShellTag{});
    copy.patch_w_ = patch_w_.clone();
    copy.patch_b_ = patch_b_.clone();
    copy.cls_ = cls_.clone();
    copy.pos_ = pos_.clone();
    for (const auto& b : blocks_) {
        copy.blocks_.push_back(Block{b.ln1_g.clone(), b.ln1_b.clone(), b.qkv_w.clone(), b.qkv_b.clone(),
                                     b.proj_w.clone(), b.proj_b.clone(), b.ln2_g.clone(), b.ln2_b.clone(),
                                     b.fc1_w.clone(), b.fc1_b.clone(), b.fc2_w.clone(), b.fc2_b.clone()});
    }
    copy.norm_g_ = norm_g_.clone();
    copy.norm_b_ = norm_b_.clone();
    if (num_classes_ > 0) {
        copy.head_w_ = head_w_.clone();
        copy.head_b_ = head_b_.clone();
    }
    copy.num_classes_ = num_classes_;
    copy.stage_ = stage_;
    copy.frozen_ = true;
    return copy;
}

std::uint64_t TinyViT::prompted_forward_count() { return g_prompted_forwards; }

std::vector<const Image*> image_pointers(std::span<const Sample> samples) {
    std::vector<const Image*> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(&s.image);
    return out;
}

std::vector<std::vector<double>> extract_features(const TinyViT& model, std::span<const Image* const> images,
                                                  const Tensor* prompt_tokens, std::size_t chunk) {
    NoGradGuard no_grad;
    std::optional<Tensor> frozen_prompt;
    if (prompt_tokens) frozen_prompt = prompt_tokens->detach();
    std::vector<std::vector<double>> out;
    out.reserve(images.size());
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t n = std::min(chunk, images.size() - start);
        Tensor f = model.encode_batch(images.subspan(start, n), frozen_prompt ? &*frozen_prompt : nullptr);
        const std::size_t d = f.cols();
        auto data = f.data();
        for (std::size_t i = 0; i < n; ++i) out.emplace_back(data.begin() + i * d, data.begin() + (i + 1) * d);
    }
    return out;
}

}  // namespace analogia
