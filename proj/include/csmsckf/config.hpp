#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "csmsckf/estimator.hpp"
#include "csmsckf/simulator.hpp"

namespace csmsckf {

inline constexpr int kConfigSchemaVersion = 1;

struct Config {
  int schema_version = kConfigSchemaVersion;
  SimConfig sim;
  EstimatorConfig filter;

  void validate() const;
};

// Missing keys keep their defaults; unknown keys and a wrong schema_version are errors.
Config parse_config(const std::string& yaml_text);
Config load_config(const std::filesystem::path& path);
std::string dump_config(const Config& cfg);

// FNV-1a of the canonical dump with the seed cleared, so a Monte-Carlo batch shares a hash.
std::uint64_t config_hash(const Config& cfg);
std::string hash_hex(std::uint64_t h);

}  // namespace csmsckf
