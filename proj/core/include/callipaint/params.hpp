#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace callipaint {

struct TensorInfo {
  std::string name;
  std::vector<std::int64_t> shape;
  std::size_t offset = 0;  // into the flat value buffer
  std::size_t size = 0;

  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

// Named tensors over one contiguous f32 buffer.
struct ParamStore {
  std::vector<TensorInfo> tensors;
  std::vector<float> values;

  std::size_t count() const { return values.size(); }
  const TensorInfo& info(const std::string& name) const;
  std::span<float> tensor(const std::string& name);
  std::span<const float> tensor(const std::string& name) const;
  bool all_finite() const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;
};

// Adam with bias correction. State is per-parameter and lives outside the
// store it updates.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<float> params, std::span<const float> grad);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace callipaint
