#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gmha::ref {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("ref::matmul shape");
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

std::vector<double> softmax(std::span<const double> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : row) mx = std::max(mx, v);
  std::vector<double> p(row.size());
  double z = 0.0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    p[j] = std::isinf(row[j]) && row[j] < 0 ? 0.0 : std::exp(row[j] - mx);
    z += p[j];
  }
  for (double& v : p) v /= z;
  return p;
}

Tensor rmsnorm(const Tensor& x, const Tensor& gamma, double eps) {
  Tensor y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double ms = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) ms += x(r, c) * x(r, c);
    ms /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) / std::sqrt(ms + eps) * gamma[c];
  }
  return y;
}

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c));
    total += std::log(z) - logits(r, static_cast<std::size_t>(targets[r]));
  }
  return total / static_cast<double>(logits.rows());
}

std::vector<double> rope(std::vector<double> v, std::size_t pos, double base) {
  const double dim = static_cast<double>(v.size());
  for (std::size_t i = 0; 2 * i + 1 < v.size(); ++i) {
    const double theta = static_cast<double>(pos) * std::pow(base, -2.0 * static_cast<double>(i) / dim);
    const double a = v[2 * i], b = v[2 * i + 1];
    v[2 * i] = a * std::cos(theta) - b * std::sin(theta);
    v[2 * i + 1] = a * std::sin(theta) + b * std::cos(theta);
  }
  return v;
}

namespace {

using Vec = std::vector<double>;

// row · M
Vec vm(const Vec& x, const Tensor& m) {
  Vec out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += x[r] * m(r, c);
  return out;
}

// row · Mᵀ
Vec vmt(const Vec& x, const Tensor& m) {
  Vec out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r] += x[c] * m(r, c);
  return out;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::string nm(const char* base, std::size_t i) { return std::string(base) + "." + std::to_string(i); }

struct HeadIO {
  std::vector<Vec> q, k, v;
  std::vector<Vec> qr, kr;  // MLA decoupled part
  const Tensor* out = nullptr;  // null: head output added directly (FPBA)
};

}  // namespace

Tensor attention(const ArchSpec& spec, const ModelDims& dims, const AttnWeights& w, const Tensor& x) {
  const std::size_t t = x.rows();
  const bool rope_on = spec.pos_embed.kind == PosEmbedKind::kRope;
  const bool alibi = spec.pos_embed.kind == PosEmbedKind::kAlibi;
  const double base = spec.pos_embed.rope_base;
  auto rot = [&](Vec v, std::size_t pos) { return rope_on ? rope(std::move(v), pos, base) : v; };
  std::vector<Vec> xs(t);
  for (std::size_t i = 0; i < t; ++i) xs[i] = Vec(x.row(i).begin(), x.row(i).end());

  std::vector<HeadIO> heads;
  double dot_dim = 0.0;
  switch (spec.kind) {
    case ArchKind::kFPBA:
      dot_dim = static_cast<double>(dims.hidden);
      for (std::size_t c = 0; c < dims.hidden; ++c) {
        HeadIO h;
        for (std::size_t i = 0; i < t; ++i) {
          h.q.push_back(rot(xs[i], i));
          h.k.push_back(rot(vmt(xs[i], w.at(nm("W", c))), i));
          h.v.push_back(vm(xs[i], w.at(nm("U", c))));
        }
        heads.push_back(std::move(h));
      }
      break;
    case ArchKind::kMHA:
    case ArchKind::kMQA:
    case ArchKind::kGQA: {
      dot_dim = static_cast<double>(dims.head_dim);
      const std::size_t per_group = spec.kind == ArchKind::kGQA ? dims.n_heads / dims.groups : 0;
      for (std::size_t hd = 0; hd < dims.n_heads; ++hd) {
        std::string kn = "K", vn = "V";
        if (spec.kind == ArchKind::kMHA) kn = nm("K", hd), vn = nm("V", hd);
        if (spec.kind == ArchKind::kGQA) kn = nm("K", hd / per_group), vn = nm("V", hd / per_group);
        HeadIO h;
        for (std::size_t i = 0; i < t; ++i) {
          h.q.push_back(rot(vm(xs[i], w.at(nm("Q", hd))), i));
          h.k.push_back(rot(vm(xs[i], w.at(kn)), i));
          h.v.push_back(vm(xs[i], w.at(vn)));
        }
        h.out = &w.at(nm("O", hd));
        heads.push_back(std::move(h));
      }
      break;
    }
    case ArchKind::kMLA: {
      const bool decoupled = dims.rope_dim > 0;
      dot_dim = static_cast<double>(dims.head_dim + dims.rope_dim);
      for (std::size_t hd = 0; hd < dims.n_heads; ++hd) {
        HeadIO h;
        for (std::size_t i = 0; i < t; ++i) {
          const Vec cq = vm(xs[i], w.at("S_q"));
          h.q.push_back(vm(cq, w.at(nm("Q", hd))));
          h.k.push_back(vm(vm(xs[i], w.at("S_k")), w.at(nm("K", hd))));
          h.v.push_back(vm(vm(xs[i], w.at("S_v")), w.at(nm("V", hd))));
          if (decoupled) {
            h.qr.push_back(rot(vm(cq, w.at(nm("Q_r", hd))), i));
            h.kr.push_back(rot(vm(xs[i], w.at("W_kr")), i));
          }
        }
        h.out = &w.at(nm("O", hd));
        heads.push_back(std::move(h));
      }
      break;
    }
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      dot_dim = static_cast<double>(dims.latent);
      for (std::size_t hd = 0; hd < dims.n_heads; ++hd) {
        HeadIO h;
        for (std::size_t i = 0; i < t; ++i) {
          const Vec q = spec.factored_q ? vm(vm(xs[i], w.at("S_q")), w.at(nm("Q", hd))) : vm(xs[i], w.at(nm("W_q", hd)));
          h.q.push_back(rot(q, i));
          const Vec k = vm(xs[i], w.at("S_k"));
          h.k.push_back(rot(k, i));
          Vec v;
          if (spec.kind == ArchKind::kMFA) {
            v = vm(xs[i], w.at("S_v"));
          } else {
            switch (*spec.kr_variant) {
              case KrVariant::kVanilla: v = k; break;
              case KrVariant::kExtraProj: v = vm(k, w.at("N")); break;
              case KrVariant::kResidual: {
                const Vec kn = vm(k, w.at("N"));
                v = k;
                for (std::size_t c = 0; c < v.size(); ++c) v[c] += kn[c];
                break;
              }
              case KrVariant::kGated: {
                const Vec kn = vm(k, w.at("N"));
                const Tensor& a = w.at("alpha");
                v = k;
                for (std::size_t c = 0; c < v.size(); ++c) v[c] += a[c] * kn[c];
                break;
              }
            }
          }
          h.v.push_back(v);
        }
        h.out = &w.at(nm("O", hd));
        heads.push_back(std::move(h));
      }
      break;
    }
  }

  const double scale = spec.score_scale ? *spec.score_scale : 1.0 / std::sqrt(dot_dim);
  Tensor y({t, dims.hidden}, 0.0);
  for (std::size_t hd = 0; hd < heads.size(); ++hd) {
    const HeadIO& h = heads[hd];
    const double slope = std::pow(2.0, -8.0 * static_cast<double>(hd + 1) / static_cast<double>(heads.size()));
    for (std::size_t i = 0; i < t; ++i) {
      Vec s(i + 1);
      for (std::size_t j = 0; j <= i; ++j) {
        double raw = dot(h.q[i], h.k[j]);
        if (!h.qr.empty()) raw += dot(h.qr[i], h.kr[j]);
        s[j] = raw * scale;
        if (alibi) s[j] -= slope * static_cast<double>(i - j);
      }
      const Vec p = softmax(s);
      Vec o(h.v[0].size(), 0.0);
      for (std::size_t j = 0; j <= i; ++j)
        for (std::size_t c = 0; c < o.size(); ++c) o[c] += p[j] * h.v[j][c];
      const Vec contrib = h.out ? vmt(o, *h.out) : o;
      for (std::size_t c = 0; c < dims.hidden; ++c) y(i, c) += contrib[c];
    }
  }
  return y;
}

std::size_t attn_params(const ArchSpec& spec, const ModelDims& d) {
  const std::size_t H = d.hidden, n = d.n_heads, dh = d.head_dim, C = d.latent, dr = d.rope_dim, g = d.groups;
  switch (spec.kind) {
    case ArchKind::kFPBA: return 2 * H * H * H;
    case ArchKind::kMHA: return 4 * H * n * dh;
    case ArchKind::kMQA: return 2 * H * n * dh + 2 * H * dh;
    case ArchKind::kGQA: return 2 * H * n * dh + 2 * H * g * dh;
    case ArchKind::kMLA: return H * (3 * C + dr + n * dh) + n * C * (3 * dh + dr);
    case ArchKind::kMFA:
    case ArchKind::kMFAKR: {
      std::size_t p = H * (3 * C + n * C) + n * C * C;
      if (!spec.factored_q) p = p - H * C - n * C * C + n * H * C;
      if (spec.kind == ArchKind::kMFAKR) {
        p -= H * C;
        if (*spec.kr_variant != KrVariant::kVanilla) p += C * C;
        if (*spec.kr_variant == KrVariant::kGated) p += C;
      }
      return p;
    }
  }
  return 0;
}

std::size_t cache_bytes(const ArchSpec& spec, const ModelDims& d, std::size_t eb) {
  std::size_t per_layer = 0;
  switch (spec.kind) {
    case ArchKind::kFPBA: per_layer = 2 * d.hidden * d.hidden; break;
    case ArchKind::kMHA: per_layer = 2 * d.n_heads * d.head_dim; break;
    case ArchKind::kMQA: per_layer = 2 * d.head_dim; break;
    case ArchKind::kGQA: per_layer = 2 * d.groups * d.head_dim; break;
    case ArchKind::kMLA: per_layer = 2 * d.latent + d.rope_dim; break;
    case ArchKind::kMFA: per_layer = 2 * d.latent; break;
    case ArchKind::kMFAKR: per_layer = d.latent; break;
  }
  return per_layer * d.layers * eb;
}

double ScalarAdamW::step(double p, double g) {
  ++t;
  m = beta1 * m + (1 - beta1) * g;
  v = beta2 * v + (1 - beta2) * g * g;
  const double mh = m / (1 - std::pow(beta1, t));
  const double vh = v / (1 - std::pow(beta2, t));
  return p - lr * (mh / (std::sqrt(vh) + eps) + wd * p);
}

}  // namespace gmha::ref
