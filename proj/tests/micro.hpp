#pragma once

// A tiny double-precision model and a central-difference gradient check,
// shared by the objective tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vadet/corpus.hpp"
#include "vadet/model.hpp"

namespace micro {

inline vadet::model::ModelConfig config(vadet::model::LatentMode latent = vadet::model::LatentMode::disentangled) {
  vadet::model::ModelConfig c;
  c.vocab_size = 20;
  c.hidden = 8;
  c.heads = 2;
  c.layers_lower = 2;
  c.layers_upper = 2;
  c.ffn = 16;
  c.d_zs = 3;
  c.d_zw = 4;
  c.max_len = 8;
  c.dropout = 0.0;
  c.init_std = 0.5;
  c.latent = latent;
  return c;
}

/// Annotated sequences of 1..max_n tokens with random stance and span.
inline std::vector<vadet::corpus::TokenizedExample> examples(int count, int max_n, int vocab, vadet::Rng& rng) {
  std::vector<vadet::corpus::TokenizedExample> xs(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto& x = xs[static_cast<std::size_t>(i)];
    x.id = "m" + std::to_string(i);
    const int n = 1 + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(max_n)));
    x.ids = {vadet::corpus::Vocab::kCls};
    for (int j = 0; j < n; ++j) {
      x.ids.push_back(vadet::corpus::Vocab::kReserved + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(vocab - vadet::corpus::Vocab::kReserved))));
    }
    const int a = 1 + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(n)));
    const int b = a + static_cast<int>(rng.uniform_int(static_cast<std::size_t>(n - a + 1)));
    x.span_tok = vadet::corpus::TokenSpan{a, b};
    x.stance = static_cast<vadet::corpus::Stance>(rng.uniform_int(3));
  }
  return xs;
}

struct GradCheck {
  double worst = 0;
  std::string where;
  std::size_t checked = 0;
};

/// Compares p.grad (already filled by one backward pass of `loss`) with
/// central differences of `loss` for every entry of every parameter.
/// Relative error is |a - n| / max(1e-4, |a|, |n|).
inline GradCheck check(vadet::model::Model<double>& m, const std::function<double()>& loss, double h = 1e-5) {
  GradCheck out;
  for (auto& p : m.parameters()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double o = p.value.data()[i];
      p.value.data()[i] = o + h;
      const double up = loss();
      p.value.data()[i] = o - h;
      const double dn = loss();
      p.value.data()[i] = o;
      const double num = (up - dn) / (2 * h);
      const double an = p.grad.data()[i];
      const double rel = std::abs(num - an) / std::max({1e-4, std::abs(num), std::abs(an)});
      ++out.checked;
      if (rel > out.worst) {
        out.worst = rel;
        out.where = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return out;
}

}  // namespace micro
