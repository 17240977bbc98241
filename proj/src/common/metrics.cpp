#include "jobgen/common/metrics.hpp"

#include <stdexcept>

namespace jobgen {

MetricsLog::MetricsLog(const std::filesystem::path& path, bool append) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_.open(path, append ? std::ios::app : std::ios::trunc);
  if (!file_) throw std::runtime_error("cannot open metrics log " + path.string());
}

void MetricsLog::write(const nlohmann::json& record) {
  nlohmann::json full = record;
  for (const auto& [k, v] : stamp_.items()) full[k] = v;
  records_.push_back(full);
  if (file_.is_open()) {
    file_ << full.dump() << '\n';
    file_.flush();
  }
}

}  // namespace jobgen
