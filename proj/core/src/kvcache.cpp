#include "gmha/kvcache.hpp"

#include <cmath>
#include <optional>
#include <string>

#include "gmha/attention.hpp"
#include "gmha/errors.hpp"
#include "gmha/ops.hpp"
#include "gmha/positional.hpp"

namespace gmha {

std::vector<SlotSpec> cache_slots(const ArchSpec& spec, const ModelDims& dims) {
  validate(spec, dims);
  const std::size_t h = dims.hidden, d = dims.head_dim, c = dims.latent;
  switch (spec.kind) {
    case ArchKind::kFPBA: return {{"k", h * h}, {"v", h * h}};
    case ArchKind::kMHA: return {{"k", dims.n_heads * d}, {"v", dims.n_heads * d}};
    case ArchKind::kMQA: return {{"k", d}, {"v", d}};
    case ArchKind::kGQA: return {{"k", dims.groups * d}, {"v", dims.groups * d}};
    case ArchKind::kMLA: {
      std::vector<SlotSpec> s{{"k_latent", c}, {"v_latent", c}};
      if (dims.rope_dim > 0) s.push_back({"k_rope", dims.rope_dim});
      return s;
    }
    case ArchKind::kMFA: return {{"k", c}, {"v", c}};
    case ArchKind::kMFAKR: return {{"k", c}};
  }
  return {};
}

std::size_t cache_bytes_per_token(const ArchSpec& spec, const ModelDims& dims, std::size_t elem_bytes) {
  if (elem_bytes < 1) throw ConfigError("elem_bytes must be at least 1");
  validate(spec, dims);
  const std::size_t h = dims.hidden, d = dims.head_dim, c = dims.latent;
  std::size_t per_layer = 0;
  switch (spec.kind) {
    case ArchKind::kFPBA: per_layer = 2 * h * h; break;
    case ArchKind::kMHA: per_layer = 2 * h; break;
    case ArchKind::kMQA: per_layer = 2 * d; break;
    case ArchKind::kGQA: per_layer = 2 * dims.groups * d; break;
    case ArchKind::kMLA: per_layer = 2 * c + dims.rope_dim; break;
    case ArchKind::kMFA: per_layer = 2 * c; break;
    case ArchKind::kMFAKR: per_layer = c; break;
  }
  return elem_bytes * dims.layers * per_layer;
}

LayerCache::LayerCache(std::vector<SlotSpec> slots) : specs_(std::move(slots)), data_(specs_.size()) {}

std::size_t LayerCache::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i)
    if (specs_[i].name == name) return i;
  throw IndexError("cache has no slot '" + std::string(name) + "'");
}

bool LayerCache::has_slot(std::string_view name) const {
  for (const auto& s : specs_)
    if (s.name == name) return true;
  return false;
}

std::size_t LayerCache::slot_dim(std::string_view name) const { return specs_[index_of(name)].dim; }

void LayerCache::append(std::span<const std::vector<double>> rows) {
  if (rows.size() != specs_.size()) {
    throw DimensionError("cache append: " + std::to_string(rows.size()) + " rows for " +
                         std::to_string(specs_.size()) + " slots");
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != specs_[i].dim) {
      throw DimensionError("cache append: slot " + specs_[i].name + " expects width " + std::to_string(specs_[i].dim) +
                           ", got " + std::to_string(rows[i].size()));
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) data_[i].insert(data_[i].end(), rows[i].begin(), rows[i].end());
  ++tokens_;
}

std::span<const double> LayerCache::row(std::string_view slot, std::size_t t) const {
  const std::size_t i = index_of(slot);
  if (t >= tokens_) throw IndexError("cache row " + std::to_string(t) + " beyond " + std::to_string(tokens_) + " tokens");
  return std::span<const double>(data_[i]).subspan(t * specs_[i].dim, specs_[i].dim);
}

Tensor LayerCache::matrix(std::string_view slot) const {
  const std::size_t i = index_of(slot);
  if (tokens_ == 0) throw IndexError("cache is empty");
  return Tensor({tokens_, specs_[i].dim}, data_[i]);
}

std::size_t LayerCache::element_count() const {
  std::size_t n = 0;
  for (const auto& d : data_) n += d.size();
  return n;
}

KvCacheState::KvCacheState(const ArchSpec& spec, const ModelDims& dims, std::size_t elem_bytes)
    : elem_bytes_(elem_bytes) {
  if (elem_bytes < 1) throw ConfigError("elem_bytes must be at least 1");
  const auto slots = cache_slots(spec, dims);
  layers_.reserve(dims.layers);
  for (std::size_t l = 0; l < dims.layers; ++l) layers_.emplace_back(slots);
}

std::size_t KvCacheState::tokens() const { return layers_.empty() ? 0 : layers_.front().tokens(); }

std::size_t KvCacheState::element_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.element_count();
  return n;
}

namespace {

const Tensor& at(const AttnWeights& w, const std::string& name) {
  auto it = w.find(name);
  if (it == w.end()) throw ConfigError("missing weight " + name);
  return it->second;
}

std::vector<double> to_vec(const Tensor& row) { return {row.data().begin(), row.data().end()}; }

Tensor columns(const Tensor& m, std::size_t begin, std::size_t width) {
  Tensor out({m.rows(), width});
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t j = 0; j < width; ++j) out(r, j) = m(r, begin + j);
  return out;
}

class StepAttention {
 public:
  StepAttention(const ArchSpec& spec, const ModelDims& dims, std::size_t position)
      : spec_(spec), position_(position), scale_(score_scale(spec, dims)) {
    if (spec.pos_embed.kind == PosEmbedKind::kAlibi) slopes_ = alibi_slopes(head_count(spec, dims));
  }

  Tensor rotate(Tensor row) const {
    if (spec_.pos_embed.kind == PosEmbedKind::kRope) rope_rotate_row(row.data(), position_, spec_.pos_embed.rope_base);
    return row;
  }

  // softmax(q·keysᵀ·scale + bias) · values for one head; q is 1×k.
  Tensor attend(std::size_t head, const Tensor& scores_unscaled, const Tensor& values) const {
    Tensor s = ops::scale(scores_unscaled, scale_);
    if (!slopes_.empty()) {
      for (std::size_t j = 0; j < s.cols(); ++j) {
        if (j < position_) s[j] += -slopes_[head] * static_cast<double>(position_ - j);
      }
    }
    return ops::matmul(ops::softmax_rows(s), values);
  }

 private:
  const ArchSpec& spec_;
  std::size_t position_;
  double scale_;
  std::vector<double> slopes_;
};

}  // namespace

Tensor decode_step(const ArchSpec& spec, const AttnWeights& w, const ModelDims& dims, LayerCache& cache,
                   const Tensor& x_t, std::size_t position) {
  require_valid_weights(spec, dims, w);
  if (x_t.rank() != 2 || x_t.dim(0) != 1 || x_t.dim(1) != dims.hidden) {
    throw DimensionError("decode_step: expected a 1x" + std::to_string(dims.hidden) + " token, got " +
                         shape_str(x_t.shape()));
  }
  if (position != cache.tokens()) {
    throw OrderingError("decode_step: position " + std::to_string(position) + " but cache holds " +
                        std::to_string(cache.tokens()) + " tokens");
  }
  const auto expected = cache_slots(spec, dims);
  if (cache.slots().size() != expected.size()) throw ConfigError("decode_step: cache layout does not match architecture");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (cache.slots()[i].name != expected[i].name || cache.slots()[i].dim != expected[i].dim) {
      throw ConfigError("decode_step: cache layout does not match architecture");
    }
  }

  const StepAttention step(spec, dims, position);
  const std::size_t h = dims.hidden;
  Tensor out({1, h});

  switch (spec.kind) {
    case ArchKind::kFPBA: {
      std::vector<double> krow, vrow;
      krow.reserve(h * h);
      vrow.reserve(h * h);
      for (std::size_t c = 0; c < h; ++c) {
        const Tensor k = step.rotate(ops::matmul_nt(x_t, at(w, indexed("W", c))));
        const Tensor v = ops::matmul(x_t, at(w, indexed("U", c)));
        krow.insert(krow.end(), k.data().begin(), k.data().end());
        vrow.insert(vrow.end(), v.data().begin(), v.data().end());
      }
      const std::vector<std::vector<double>> rows{std::move(krow), std::move(vrow)};
      cache.append(rows);
      const Tensor q = step.rotate(x_t);
      const Tensor keys = cache.matrix("k");
      const Tensor values = cache.matrix("v");
      for (std::size_t c = 0; c < h; ++c) {
        const Tensor kc = columns(keys, c * h, h);
        const Tensor vc = columns(values, c * h, h);
        ops::add_inplace(out, step.attend(c, ops::matmul_nt(q, kc), vc));
      }
      break;
    }
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA: {
      const std::size_t d = dims.head_dim;
      const std::size_t groups = kv_group_count(spec, dims);
      std::vector<double> krow, vrow;
      for (std::size_t grp = 0; grp < groups; ++grp) {
        const std::string kn = spec.kind == ArchKind::kMQA ? "K" : indexed("K", grp);
        const std::string vn = spec.kind == ArchKind::kMQA ? "V" : indexed("V", grp);
        const Tensor k = step.rotate(ops::matmul(x_t, at(w, kn)));
        const Tensor v = ops::matmul(x_t, at(w, vn));
        krow.insert(krow.end(), k.data().begin(), k.data().end());
        vrow.insert(vrow.end(), v.data().begin(), v.data().end());
      }
      const std::vector<std::vector<double>> rows{std::move(krow), std::move(vrow)};
      cache.append(rows);
      const Tensor keys = cache.matrix("k");
      const Tensor values = cache.matrix("v");
      for (std::size_t hd = 0; hd < dims.n_heads; ++hd) {
        const std::size_t grp = kv_group_of(spec, dims, hd);
        const Tensor q = step.rotate(ops::matmul(x_t, at(w, indexed("Q", hd))));
        const Tensor o = step.attend(hd, ops::matmul_nt(q, columns(keys, grp * d, d)), columns(values, grp * d, d));
        ops::add_inplace(out, ops::matmul_nt(o, at(w, indexed("O", hd))));
      }
      break;
    }
    case ArchKind::kMLA: {
      const bool decoupled = uses_decoupled_rope(spec, dims);
      std::vector<std::vector<double>> rows{to_vec(ops::matmul(x_t, at(w, "S_k"))),
                                            to_vec(ops::matmul(x_t, at(w, "S_v")))};
      if (decoupled) rows.push_back(to_vec(step.rotate(ops::matmul(x_t, at(w, "W_kr")))));
      cache.append(rows);
      const Tensor k_latent = cache.matrix("k_latent");
      const Tensor v_latent = cache.matrix("v_latent");
      const Tensor cq = ops::matmul(x_t, at(w, "S_q"));
      for (std::size_t hd = 0; hd < dims.n_heads; ++hd) {
        const Tensor q = ops::matmul(cq, at(w, indexed("Q", hd)));
        const Tensor keys = ops::matmul(k_latent, at(w, indexed("K", hd)));
        const Tensor values = ops::matmul(v_latent, at(w, indexed("V", hd)));
        Tensor scores = ops::matmul_nt(q, keys);
        if (decoupled) {
          const Tensor qr = step.rotate(ops::matmul(cq, at(w, indexed("Q_r", hd))));
          ops::add_inplace(scores, ops::matmul_nt(qr, cache.matrix("k_rope")));
        }
        const Tensor o = step.attend(hd, scores, values);
        ops::add_inplace(out, ops::matmul_nt(o, at(w, indexed("O", hd))));
      }
      break;
    }
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      Tensor keys, values;
      if (spec.kind == ArchKind::kMFA) {
        const std::vector<std::vector<double>> rows{to_vec(step.rotate(ops::matmul(x_t, at(w, "S_k")))),
                                                    to_vec(ops::matmul(x_t, at(w, "S_v")))};
        cache.append(rows);
        keys = cache.matrix("k");
        values = cache.matrix("v");
      } else {
        const std::vector<std::vector<double>> rows{to_vec(ops::matmul(x_t, at(w, "S_k")))};
        cache.append(rows);
        const Tensor raw = cache.matrix("k");
        const auto n_it = w.find("N");
        const auto a_it = w.find("alpha");
        values = kr_value_from_key(*spec.kr_variant, raw, n_it == w.end() ? nullptr : &n_it->second,
                                   a_it == w.end() ? nullptr : &a_it->second);
        keys = spec.pos_embed.kind == PosEmbedKind::kRope
                   ? rope_apply(raw, iota_positions(raw.rows()), spec.pos_embed.rope_base)
                   : raw;
      }
      std::optional<Tensor> cq;
      if (spec.factored_q) cq = ops::matmul(x_t, at(w, "S_q"));
      for (std::size_t hd = 0; hd < dims.n_heads; ++hd) {
        const Tensor q = step.rotate(spec.factored_q ? ops::matmul(*cq, at(w, indexed("Q", hd)))
                                                     : ops::matmul(x_t, at(w, indexed("W_q", hd))));
        const Tensor o = step.attend(hd, ops::matmul_nt(q, keys), values);
        ops::add_inplace(out, ops::matmul_nt(o, at(w, indexed("O", hd))));
      }
      break;
    }
  }
  if (!out.all_finite()) throw NumericError("decode_step: non-finite attention output");
  return out;
}

}  // namespace gmha
