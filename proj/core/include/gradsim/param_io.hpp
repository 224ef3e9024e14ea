#pragma once

#include "gradsim/network.hpp"

#include <filesystem>
#include <string>

namespace gradsim {

/// Schema tag and version written into every parameter container.
inline constexpr const char* kParamSchema = "gradsim.params";
inline constexpr int kParamSchemaVersion = 1;

/// JSON container embedding the network spec, the layout and the values.
/// Values are written with shortest round-trip formatting, so a save/load
/// cycle reproduces every bit.
std::string params_to_json(const NetworkSpec& spec, const ParamVector& params);
void save_params(const std::filesystem::path& path, const NetworkSpec& spec,
                 const ParamVector& params);

struct LoadedParams {
  NetworkSpec spec;
  ParamVector params;
};

LoadedParams params_from_json(const std::string& text);
LoadedParams load_params(const std::filesystem::path& path);

/// Loads and checks that the stored spec equals `expected`; throws
/// ShapeError otherwise.
ParamVector load_params(const std::filesystem::path& path, const NetworkSpec& expected);

} // namespace gradsim
