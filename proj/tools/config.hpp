#pragma once

// JSON <-> configuration structs for the command-line tool.

#include "gradsim/dataset.hpp"
#include "gradsim/density.hpp"
#include "gradsim/experiments.hpp"
#include "gradsim/network.hpp"
#include "gradsim/train.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gradsim::cli {

using json = nlohmann::json;

json default_config(const std::string& command);

/// Config file contents; a manifest written by a previous run is accepted and
/// its "config" entry used.
json load_config_file(const std::filesystem::path& path, const std::string& command);

/// Recursive merge: objects merge key by key, everything else replaces.
void merge_into(json& base, const json& patch);

TrainConfig train_from_json(const json& j, std::uint64_t seed);
DensityConfig density_from_json(const json& j);

/// Hidden layers and activations; input/output sizes come from the data.
NetworkSpec network_from_json(const json& j, std::size_t input, std::size_t output);

/// "toy", "blobs" or "idx" data source.
Dataset data_from_json(const json& j, std::uint64_t seed);

SweepConfig sweep_from_json(const json& cfg);
DuplicateNoiseSpec dup_noise_from_json(const json& cfg, std::size_t n_dup);
EnforceDemoConfig enforce_from_json(const json& cfg);

struct Manifest {
  std::string command;
  json config;
  std::vector<std::string> outputs;
  std::map<std::string, std::string> provenance;
  std::chrono::system_clock::time_point started;
  double wall_clock_seconds = 0.0;
};

void write_manifest(const std::filesystem::path& dir, const Manifest& m);

} // namespace gradsim::cli
