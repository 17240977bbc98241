#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace jobgen {

// Line-delimited JSON metrics. Records are kept in memory and, when a path is
// given, appended to the file as they arrive. No wall-clock fields are added,
// so reruns from one seed produce identical files.
class MetricsLog {
 public:
  MetricsLog() = default;
  // append=false truncates an existing file.
  explicit MetricsLog(const std::filesystem::path& path, bool append = false);

  void write(const nlohmann::json& record);
  // Fields merged into every later record, e.g. the config checksum.
  void stamp(const std::string& key, nlohmann::json value) { stamp_[key] = std::move(value); }
  const std::vector<nlohmann::json>& records() const noexcept { return records_; }

 private:
  std::ofstream file_;
  std::vector<nlohmann::json> records_;
  nlohmann::json stamp_ = nlohmann::json::object();
};

}  // namespace jobgen
