#include "isap/diff/adam.hpp"

#include <cmath>

#include "isap/errors.hpp"

namespace isap::diff {

void adam_update(const AdamConfig& cfg, std::uint64_t t, Tensor& param,
                 const Tensor& grad, Tensor& m, Tensor& v) {
  if (t == 0) throw ValidationError("adam: step must be incremented first");
  if (grad.shape() != param.shape() || m.shape() != param.shape() ||
      v.shape() != param.shape())
    throw ShapeError("adam: moment/gradient shape mismatch");
  if (!grad.all_finite()) throw NumericalError("adam: non-finite gradient");
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
  const double decay = cfg.lr * cfg.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= decay * param[i];
    param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)) {
  state_.config = config;
  for (const Parameter* p : params_) {
    state_.first_moment.push_back(Tensor::like(p->value));
    state_.second_moment.push_back(Tensor::like(p->value));
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->grad.fill(0.0);
}

void Adam::step() {
  ++state_.step;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    adam_update(state_.config, state_.step, p.value, p.grad,
                state_.first_moment[i], state_.second_moment[i]);
  }
}

}  // namespace isap::diff
