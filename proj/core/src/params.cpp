#include "callipaint/params.hpp"

#include <algorithm>
#include <cmath>

#include "callipaint/error.hpp"

namespace callipaint {

const TensorInfo& ParamStore::info(const std::string& name) const {
  auto it = std::find_if(tensors.begin(), tensors.end(),
                         [&](const TensorInfo& t) { return t.name == name; });
  require(it != tensors.end(), ErrorKind::kInvalidArgument,
          "no tensor named '" + name + "'");
  return *it;
}

std::span<float> ParamStore::tensor(const std::string& name) {
  const auto& t = info(name);
  return {values.data() + t.offset, t.size};
}

std::span<const float> ParamStore::tensor(const std::string& name) const {
  const auto& t = info(name);
  return {values.data() + t.offset, t.size};
}

bool ParamStore::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

void Adam::step(std::span<float> params, std::span<const float> grad) {
  require(params.size() == m_.size() && grad.size() == m_.size(),
          ErrorKind::kShapeMismatch, "optimizer state size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
  }
}

}  // namespace callipaint
