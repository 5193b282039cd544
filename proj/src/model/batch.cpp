#include <algorithm>

#include "isap/errors.hpp"
#include "isap/model.hpp"

namespace isap::model {

Batch make_batch(const std::vector<scene::Scene>& scenes, std::span<const std::size_t> indices,
                 std::span<const std::size_t> labels, std::size_t raster_size) {
  if (indices.empty()) throw ValidationError("make_batch: empty batch");
  if (labels.size() != indices.size()) throw ValidationError("make_batch: label count mismatch");
  const std::size_t b = indices.size();
  const std::size_t hw = raster_size * raster_size;
  Batch out;
  out.raster = Tensor(diff::Shape{b, 3, raster_size, raster_size});
  out.state = Tensor(diff::Shape{b, 3});
  out.agent_target = Tensor(diff::Shape{b, kAgentTarget});
  out.map_target = Tensor(diff::Shape{b, 1, raster_size, raster_size});
  out.sc_target = Tensor(diff::Shape{b, 1, raster_size, raster_size});
  out.labels.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < b; ++i) {
    const scene::Scene& s = scenes.at(indices[i]);
    const scene::Raster r = scene::rasterize(s, raster_size);
    std::copy(r.pixels.begin(), r.pixels.end(), out.raster.ptr() + i * 3 * hw);
    std::copy(r.pixels.begin(), r.pixels.begin() + long(hw), out.map_target.ptr() + i * hw);
    std::copy(r.pixels.begin() + long(hw), r.pixels.begin() + long(2 * hw), out.sc_target.ptr() + i * hw);
    double* agent = out.agent_target.ptr() + i * kAgentTarget;
    for (std::size_t k = 0; k < scene::kPastLen; ++k) {
      agent[2 * k] = s.past[k][0] / kPastScale;
      agent[2 * k + 1] = s.past[k][1] / kPastScale;
    }
    for (std::size_t j = 0; j < 3; ++j) {
      const double v = s.state[j] / kStateScale[j];
      out.state.at(i, j) = v;
      agent[2 * scene::kPastLen + j] = v;
    }
  }
  return out;
}

}  // namespace isap::model
