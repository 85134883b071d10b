#include "parameters.hpp"

#include <algorithm>
#include <cmath>

#include "error.hpp"

namespace hyperrna {

Tensor ParameterStore::add(const std::string& name, Tensor t) {
  if (std::find(names_.begin(), names_.end(), name) != names_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
  }
  t.set_requires_grad(true);
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

Tensor ParameterStore::add_uniform(const std::string& name, Shape shape, std::size_t fan_in,
                                   Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return add(name, make_tensor(std::move(shape), std::move(values)));
}

Tensor ParameterStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.numel();
  return n;
}

Tensor ParameterStore::get(const std::string& name) const {
  const auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(ErrorCode::kInvalidArgument, "no parameter named " + name);
  return tensors_[static_cast<std::size_t>(it - names_.begin())];
}

void ParameterStore::zero_grad() {
  for (Tensor& t : tensors_) t.zero_grad();
}

}  // namespace hyperrna
