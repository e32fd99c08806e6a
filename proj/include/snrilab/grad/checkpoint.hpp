#pragma once

#include <filesystem>

#include <json.hpp>

#include "snrilab/grad/params.hpp"

namespace snrilab::grad {

struct Checkpoint {
  Params params;
  nlohmann::json meta;
};

// JSON map name -> {shape, values}. Serialization is byte-stable: keys are
// sorted and doubles print in shortest round-trip form, so identical
// parameters give identical files.
void save_checkpoint(const std::filesystem::path& path, const Params& params,
                     const nlohmann::json& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace snrilab::grad
