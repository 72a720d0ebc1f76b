#pragma once

// AdamW with global-norm gradient clipping, and the warmup/decay schedule.

#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "vadet/autograd.hpp"

namespace vadet::optim {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

/// Linear 0 -> lr over warmup_frac * total steps, then linear lr -> 0.
inline double lr_at(long step, long total_steps, double lr, double warmup_frac) {
  if (total_steps <= 0) throw std::invalid_argument("lr_at: total_steps must be positive");
  if (step < 0 || step > total_steps) throw std::out_of_range("lr_at: step outside [0, total_steps]");
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) throw std::invalid_argument("lr_at: warmup_frac must be in [0, 1)");
  const double warm = warmup_frac * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warm) return lr * s / warm;
  const double rest = static_cast<double>(total_steps) - warm;
  return lr * (static_cast<double>(total_steps) - s) / rest;
}

/// Global L2 norm of all gradients.
template <class T>
double grad_norm(const std::deque<Parameter<T>>& params) {
  double sq = 0;
  for (const auto& p : params) {
    if (p.grad.size() == p.value.size()) sq += p.grad.template cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  /// One update at learning rate `lr`. Returns the pre-clipping gradient norm.
  /// Norms and biases (1-row parameters or names ending in gamma/beta/.b) are not decayed.
  double step(std::deque<Parameter<T>>& params, double lr) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix<T>::Zero(p.value.rows(), p.value.cols()));
      }
    }
    if (m_.size() != params.size()) throw std::logic_error("AdamW: parameter set changed");
    const double norm = grad_norm(params);
    const double scale = (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / (norm + 1e-12) : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (p.grad.size() != p.value.size()) continue;
      const auto g = (p.grad.array() * T(scale)).eval();
      m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
      if (decays(p)) p.value.array() *= T(1.0 - lr * cfg_.weight_decay);
      p.value.array() -= T(lr) * (m_[i].array() / T(bc1)) / ((v_[i].array() / T(bc2)).sqrt() + T(cfg_.eps));
    }
    return norm;
  }

  /// Moment buffers, for checkpointing.
  std::vector<Matrix<T>>& first_moments() { return m_; }
  std::vector<Matrix<T>>& second_moments() { return v_; }
  void set_steps(long t) { t_ = t; }

 private:
  static bool decays(const Parameter<T>& p) {
    auto ends = [&](const char* s) {
      const std::string suf(s);
      return p.name.size() >= suf.size() && p.name.compare(p.name.size() - suf.size(), suf.size(), suf) == 0;
    };
    return !(ends(".b") || ends("gamma") || ends("beta"));
  }

  AdamWConfig cfg_;
  std::vector<Matrix<T>> m_, v_;
  long t_ = 0;
};

}  // namespace vadet::optim
