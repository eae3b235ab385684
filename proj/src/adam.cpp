#include "neo/adam.hpp"

#include <cmath>

#include "neo/error.hpp"

namespace neo {

Adam::Adam(std::size_t size, AdamConfig config)
    : config_(config), m_(size, 0.0f), v_(size, 0.0f) {}

namespace {

template <typename G>
void dense_step(std::span<float> params, std::span<const G> grads,
                std::vector<float>& m, std::vector<float>& v,
                const AdamConfig& cfg, std::int64_t t) {
  if (params.size() != m.size() || grads.size() != m.size()) {
    fail(ErrorKind::InvalidArgument, "adam: parameter/gradient size mismatch");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const double step = cfg.learning_rate * std::sqrt(bc2) / bc1;
  const double eps = cfg.epsilon * std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    params[i] = static_cast<float>(params[i] - step * mi / (std::sqrt(vi) + eps));
  }
}

}  // namespace

void Adam::step(std::span<float> params, std::span<const double> grads) {
  dense_step(params, grads, m_, v_, config_, ++steps_);
}

void Adam::step(std::span<float> params, std::span<const float> grads) {
  dense_step(params, grads, m_, v_, config_, ++steps_);
}

void Adam::step_sparse(std::span<float> params, std::span<const double> grads,
                       std::span<const std::size_t> indices,
                       std::span<const double> lr_scale) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    fail(ErrorKind::InvalidArgument, "adam: parameter/gradient size mismatch");
  }
  if (count_.size() != m_.size()) count_.assign(m_.size(), 0);
  ++steps_;
  const auto& cfg = config_;
  for (const std::size_t i : indices) {
    const int t = ++count_[i];
    while (static_cast<int>(bias1_.size()) <= t) {
      const auto k = static_cast<double>(bias1_.size());
      bias1_.push_back(1.0 - std::pow(cfg.beta1, k));
      bias2_.push_back(1.0 - std::pow(cfg.beta2, k));
    }
    const double bc1 = bias1_[t];
    const double bc2 = bias2_[t];
    const double scale = lr_scale.empty() ? 1.0 : lr_scale[i % lr_scale.size()];
    const double g = grads[i];
    const double mi = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * g * g;
    m_[i] = static_cast<float>(mi);
    v_[i] = static_cast<float>(vi);
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    params[i] = static_cast<float>(params[i] - scale * cfg.learning_rate * mhat /
                                                   (std::sqrt(vhat) + cfg.epsilon));
  }
}

}  // namespace neo
