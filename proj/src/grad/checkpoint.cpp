#include "snrilab/grad/checkpoint.hpp"

#include <cmath>
#include <fstream>

#include "snrilab/common/errors.hpp"

namespace snrilab::grad {

namespace {
using nlohmann::json;
constexpr int kSchemaVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Params& params,
                     const json& meta) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["meta"] = meta.is_null() ? json::object() : meta;
  json jp = json::object();
  for (const auto& [key, p] : params) {
    if (p.size() != shape_product(p.shape)) {
      throw ShapeMismatch("checkpoint: inconsistent parameter " + key);
    }
    for (double v : p.value) {
      if (!std::isfinite(v)) {
        throw NonFiniteValue("checkpoint: non-finite value in " + key);
      }
    }
    jp[key] = {{"shape", p.shape}, {"values", p.value}};
  }
  j["params"] = std::move(jp);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw IncompatibleCheckpoint(std::string("checkpoint is not valid JSON: ") +
                                 ex.what());
  }

  Checkpoint ck;
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) {
      throw IncompatibleCheckpoint("checkpoint schema version " +
                                   j.at("schema_version").dump() +
                                   " not supported");
    }
    ck.meta = j.value("meta", json::object());
    for (const auto& [key, jp] : j.at("params").items()) {
      Param p;
      p.shape = jp.at("shape").get<std::vector<int>>();
      p.value = jp.at("values").get<std::vector<double>>();
      if (p.size() != shape_product(p.shape)) {
        throw IncompatibleCheckpoint("checkpoint entry " + key +
                                     " has inconsistent shape");
      }
      ck.params.emplace(key, std::move(p));
    }
  } catch (const json::exception& ex) {
    throw IncompatibleCheckpoint(std::string("checkpoint malformed: ") + ex.what());
  }
  return ck;
}

}  // namespace snrilab::grad
