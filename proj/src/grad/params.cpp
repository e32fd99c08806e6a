#include "snrilab/grad/params.hpp"

#include "snrilab/common/errors.hpp"

namespace snrilab::grad {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 1) throw ShapeMismatch("shape dimension must be >= 1");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  out += ")";
  return out;
}

const Param& require_param(const Params& p, const std::string& key,
                           const std::vector<int>& shape) {
  auto it = p.find(key);
  if (it == p.end()) {
    throw IncompatibleCheckpoint("missing parameter " + key);
  }
  if (it->second.shape != shape) {
    throw IncompatibleCheckpoint("parameter " + key + " has shape " +
                                 shape_to_string(it->second.shape) +
                                 ", expected " + shape_to_string(shape));
  }
  return it->second;
}

std::vector<std::string> keys_with_prefix(const Params& p, const std::string& prefix) {
  std::vector<std::string> out;
  const std::string full = prefix + "/";
  for (const auto& [k, v] : p) {
    (void)v;
    if (k.rfind(full, 0) == 0) out.push_back(k);
  }
  return out;
}

}  // namespace snrilab::grad
