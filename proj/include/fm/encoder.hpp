#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fm/error.hpp"
#include "fm/prompt_bank.hpp"
#include "fm/rng.hpp"
#include "fm/vecmath.hpp"

namespace fm {

/// Tolerated distance of a stored embedding's norm from 1.
inline constexpr double kStoredNormSlack = 1e-3;

/// Class names, templates, text embeddings and labeled image embeddings.
/// Embeddings are held as the 32-bit values that go to disk; accessors
/// return 64-bit renormalized copies.
struct EmbeddingStore {
  std::uint32_t dim = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> templates;
  std::vector<float> text;  // [T][K][D], template-major
  std::vector<std::uint32_t> labels;
  std::vector<float> images;  // [N][D]

  [[nodiscard]] std::size_t num_templates() const noexcept { return templates.size(); }
  [[nodiscard]] std::size_t num_classes() const noexcept { return class_names.size(); }
  [[nodiscard]] std::size_t num_images() const noexcept { return labels.size(); }

  [[nodiscard]] std::span<const float> raw_text(std::size_t p, std::size_t k) const {
    return {text.data() + (p * num_classes() + k) * dim, dim};
  }
  [[nodiscard]] std::span<const float> raw_image(std::size_t i) const {
    return {images.data() + i * dim, dim};
  }

  [[nodiscard]] Vec text_embedding(std::size_t p, std::size_t k) const {
    const auto raw = raw_text(p, k);
    return l2_normalize(Vec(raw.begin(), raw.end()));
  }
  [[nodiscard]] Vec image_embedding(std::size_t i) const {
    const auto raw = raw_image(i);
    return l2_normalize(Vec(raw.begin(), raw.end()));
  }

  /// Throws CorruptStore unless every invariant holds.
  void validate() const {
    const std::size_t t = num_templates();
    const std::size_t k = num_classes();
    const std::size_t n = num_images();
    if (dim == 0) throw Error(ErrorCode::CorruptStore, "dimension is zero");
    if (text.size() != t * k * dim) throw Error(ErrorCode::CorruptStore, "text block length mismatch");
    if (images.size() != n * dim) throw Error(ErrorCode::CorruptStore, "image block length mismatch");
    for (std::uint32_t l : labels) {
      if (l >= k) throw Error(ErrorCode::CorruptStore, "label " + std::to_string(l) + " out of range");
    }
    const auto check_block = [&](const std::vector<float>& block, const char* what) {
      for (std::size_t off = 0; off < block.size(); off += dim) {
        double sq = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double x = block[off + d];
          if (!std::isfinite(x)) throw Error(ErrorCode::CorruptStore, std::string("non-finite value in ") + what);
          sq += x * x;
        }
        if (std::abs(std::sqrt(sq) - 1.0) > kStoredNormSlack) {
          throw Error(ErrorCode::CorruptStore, std::string(what) + " embedding is not unit-normalized");
        }
      }
    };
    check_block(text, "text");
    check_block(images, "image");
  }

  bool operator==(const EmbeddingStore&) const = default;
};

/// Frozen encoder pair. Outputs are unit-normalized and deterministic.
class Encoder {
 public:
  using ImageId = std::size_t;

  virtual ~Encoder() = default;
  [[nodiscard]] virtual Vec encode_text(const std::string& prompt) const = 0;
  [[nodiscard]] virtual Vec encode_image(ImageId id) const = 0;
  [[nodiscard]] virtual std::size_t dim() const = 0;
};

enum class SplitTag { Train, Test };

/// Parameters of the synthetic stand-in for a pretrained encoder.
struct SyntheticWorld {
  std::uint64_t seed = 0;
  std::size_t num_classes = 10;
  std::size_t num_templates = 60;
  std::size_t dim = 64;
  std::size_t images_per_class = 16;
  double sigma_template = 0.1;
  double sigma_image = 0.1;

  void validate() const {
    if (dim < 2) throw Error(ErrorCode::InvalidConfig, "dim must be >= 2");
    if (num_classes < 1 || num_templates < 1 || images_per_class < 1) {
      throw Error(ErrorCode::InvalidConfig, "counts must be >= 1");
    }
    if (!(sigma_template >= 0.0) || !(sigma_image >= 0.0)) {
      throw Error(ErrorCode::InvalidConfig, "sigma values must be >= 0");
    }
  }

  [[nodiscard]] std::vector<std::string> class_names() const {
    std::vector<std::string> out;
    out.reserve(num_classes);
    for (std::size_t k = 0; k < num_classes; ++k) {
      std::string n = std::to_string(k);
      out.push_back("class_" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n);
    }
    return out;
  }

  [[nodiscard]] Vec prototype(std::size_t k) const {
    const Stream s(seed, Purpose::Prototype, {k});
    Vec v(dim);
    for (std::size_t d = 0; d < dim; ++d) v[d] = s.gaussian(d);
    return l2_normalize(v);
  }

  [[nodiscard]] Vec text_embedding(std::size_t p, std::size_t k) const {
    Vec v = prototype(k);
    const Stream s(seed, Purpose::TemplateNoise, {p, k});
    for (std::size_t d = 0; d < dim; ++d) v[d] += sigma_template * s.gaussian(d);
    return l2_normalize(v);
  }

  /// Images are laid out class-major: index i has label i / images_per_class.
  [[nodiscard]] std::size_t image_label(std::size_t i) const { return i / images_per_class; }
  [[nodiscard]] std::size_t num_images() const { return num_classes * images_per_class; }

  [[nodiscard]] Vec image_embedding(SplitTag split, std::size_t i) const {
    Vec v = prototype(image_label(i));
    const Stream s(seed, split == SplitTag::Train ? Purpose::TrainImage : Purpose::TestImage, {i});
    for (std::size_t d = 0; d < dim; ++d) v[d] += sigma_image * s.gaussian(d);
    return l2_normalize(v);
  }
};

namespace detail {

inline void append_as_float(std::vector<float>& out, VecView v) {
  for (double x : v) out.push_back(static_cast<float>(x));
}

/// Maps every rendered (template, class) prompt back to its grid position.
inline std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> prompt_index(
    const std::vector<std::string>& templates, const std::vector<std::string>& classes) {
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> index;
  for (std::size_t p = 0; p < templates.size(); ++p) {
    const PromptTemplate tmpl(templates[p]);
    for (std::size_t k = 0; k < classes.size(); ++k) index.emplace(tmpl.render(classes[k]), std::pair{p, k});
  }
  return index;
}

}  // namespace detail

/// Deterministic synthetic encoder over a SyntheticWorld and one image split.
class SyntheticEncoder final : public Encoder {
 public:
  SyntheticEncoder(SyntheticWorld world, SplitTag split)
      : world_(std::move(world)),
        split_(split),
        bank_(TemplateBank::defaults(world_.num_templates)),
        vocab_(world_.class_names()) {
    world_.validate();
    index_ = detail::prompt_index(bank_.patterns(), vocab_.names());
  }

  [[nodiscard]] Vec encode_text(const std::string& prompt) const override {
    const auto it = index_.find(prompt);
    if (it == index_.end()) throw Error(ErrorCode::UnknownPrompt, "'" + prompt + "'");
    return world_.text_embedding(it->second.first, it->second.second);
  }
  [[nodiscard]] Vec encode_image(ImageId id) const override {
    if (id >= world_.num_images()) throw Error(ErrorCode::InvalidConfig, "image id out of range");
    return world_.image_embedding(split_, id);
  }
  [[nodiscard]] std::size_t dim() const override { return world_.dim; }

  [[nodiscard]] const SyntheticWorld& world() const noexcept { return world_; }
  [[nodiscard]] const TemplateBank& bank() const noexcept { return bank_; }
  [[nodiscard]] const ClassVocabulary& vocab() const noexcept { return vocab_; }

 private:
  SyntheticWorld world_;
  SplitTag split_;
  TemplateBank bank_;
  ClassVocabulary vocab_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> index_;
};

/// Encoder answering from precomputed embeddings in a store.
class StoreEncoder final : public Encoder {
 public:
  explicit StoreEncoder(const EmbeddingStore& store) : store_(&store) {
    index_ = detail::prompt_index(store.templates, store.class_names);
  }

  [[nodiscard]] Vec encode_text(const std::string& prompt) const override {
    const auto it = index_.find(prompt);
    if (it == index_.end()) throw Error(ErrorCode::UnknownPrompt, "'" + prompt + "'");
    return store_->text_embedding(it->second.first, it->second.second);
  }
  [[nodiscard]] Vec encode_image(ImageId id) const override {
    if (id >= store_->num_images()) throw Error(ErrorCode::InvalidConfig, "image id out of range");
    return store_->image_embedding(id);
  }
  [[nodiscard]] std::size_t dim() const override { return store_->dim; }

 private:
  const EmbeddingStore* store_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> index_;
};

/// Materializes one split of a synthetic world as an EmbeddingStore.
inline EmbeddingStore synthetic_generate(const SyntheticWorld& world, SplitTag split = SplitTag::Train) {
  world.validate();
  EmbeddingStore store;
  store.dim = static_cast<std::uint32_t>(world.dim);
  store.class_names = world.class_names();
  store.templates = TemplateBank::defaults(world.num_templates).patterns();
  store.text.reserve(world.num_templates * world.num_classes * world.dim);
  for (std::size_t p = 0; p < world.num_templates; ++p) {
    for (std::size_t k = 0; k < world.num_classes; ++k) {
      detail::append_as_float(store.text, world.text_embedding(p, k));
    }
  }
  const std::size_t n = world.num_images();
  store.labels.reserve(n);
  store.images.reserve(n * world.dim);
  for (std::size_t i = 0; i < n; ++i) {
    store.labels.push_back(static_cast<std::uint32_t>(world.image_label(i)));
    detail::append_as_float(store.images, world.image_embedding(split, i));
  }
  return store;
}

}  // namespace fm
