#include "isap/diff/nn.hpp"

#include <cmath>

namespace isap::diff {

namespace {
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0) {
  Tensor t(std::move(shape));
  const double sd = gain * std::sqrt(2.0 / double(fan_in));
  for (double& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}
}  // namespace

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, double gain)
    : weight_(name + ".weight", he_normal(Shape{in, out}, in, rng, gain)),
      bias_(name + ".bias", Tensor(Shape{out}, 0.0)) {}

Var Linear::operator()(Graph& g, Var x) {
  return affine(x, g.parameter(weight_), g.parameter(bias_));
}

Conv2d::Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch,
               std::size_t kernel, std::size_t stride, std::size_t pad, Rng& rng)
    : weight_(name + ".weight",
              he_normal(Shape{out_ch, in_ch, kernel, kernel},
                        in_ch * kernel * kernel, rng)),
      bias_(name + ".bias", Tensor(Shape{out_ch}, 0.0)),
      stride_(stride),
      pad_(pad) {}

Var Conv2d::operator()(Graph& g, Var x) {
  return conv2d(x, g.parameter(weight_), g.parameter(bias_), stride_, pad_);
}

ConvTranspose2d::ConvTranspose2d(std::string name, std::size_t in_ch,
                                 std::size_t out_ch, std::size_t kernel,
                                 std::size_t stride, std::size_t pad, Rng& rng)
    : weight_(name + ".weight",
              he_normal(Shape{in_ch, out_ch, kernel, kernel},
                        in_ch * kernel * kernel / (stride * stride), rng)),
      bias_(name + ".bias", Tensor(Shape{out_ch}, 0.0)),
      stride_(stride),
      pad_(pad) {}

Var ConvTranspose2d::operator()(Graph& g, Var x) {
  return conv_transpose2d(x, g.parameter(weight_), g.parameter(bias_), stride_,
                          pad_);
}

BatchNorm1d::BatchNorm1d(std::string name, std::size_t features)
    : gamma_(name + ".gamma", Tensor(Shape{features}, 1.0)),
      beta_(name + ".beta", Tensor(Shape{features}, 0.0)),
      stats_(features) {}

Var BatchNorm1d::operator()(Graph& g, Var x, bool train) {
  return batch_norm(x, g.parameter(gamma_), g.parameter(beta_), stats_, train);
}

std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

}  // namespace isap::diff
