#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace snrilab::grad {

// One named parameter array. Keys are slash-prefixed with the network they
// belong to ("snri_net/enc_w"), so one flat map can carry several networks.
struct Param {
  std::vector<int> shape;
  std::vector<double> value;

  std::size_t size() const { return value.size(); }
};

using Params = std::map<std::string, Param>;
using GradMap = std::map<std::string, std::vector<double>>;

std::size_t shape_product(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Fetches a key, checking existence and shape; throws IncompatibleCheckpoint
// on either failure. Used when wiring loaded checkpoints into models.
const Param& require_param(const Params& p, const std::string& key,
                           const std::vector<int>& shape);

// Keys beginning with `prefix + "/"`.
std::vector<std::string> keys_with_prefix(const Params& p, const std::string& prefix);

}  // namespace snrilab::grad
