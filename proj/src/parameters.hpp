#pragma once

#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace hyperrna {

// Named learnable tensors in registration order. Handles returned by add()
// alias the stored tensors, so module parameter structs and the store see the
// same values.
class ParameterStore {
 public:
  // Uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Tensor add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng);
  Tensor add_zeros(const std::string& name, Shape shape);

  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t total_values() const;

  // Throws when the name is absent.
  Tensor get(const std::string& name) const;

  void zero_grad();

 private:
  Tensor add(const std::string& name, Tensor t);

  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

}  // namespace hyperrna
