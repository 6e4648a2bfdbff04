#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace uom {

inline constexpr std::uint64_t kReproSeed = 20240611;

struct ReproResult {
  std::string experiment;
  nlohmann::json report;                     ///< "checks" list, numeric results, "meta" (not compared)
  std::map<std::string, std::string> tables;  ///< file name -> TSV contents
  std::vector<std::string> failed;            ///< names of failing checks

  [[nodiscard]] bool passed() const noexcept { return failed.empty(); }
};

const std::vector<std::string>& repro_experiments();

/// Runs one canned experiment. `work` holds intermediate artifacts (model bundles).
ReproResult run_repro(const std::string& experiment, std::uint64_t seed, const std::filesystem::path& work);

/// Writes report.json and the tables into `dir`.
void write_repro(const ReproResult& r, const std::filesystem::path& dir);

/// Report without "meta" plus every table, for byte comparison across runs.
std::string repro_payload(const ReproResult& r);

}  // namespace uom
