#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "fgclep/errors.hpp"

namespace fgclep::pipeline {

// JSON-lines metrics sink: one object per optimizer step plus one block per
// augmentation pass.
class MetricsLog {
 public:
  MetricsLog() = default;

  explicit MetricsLog(const std::string& path) : out_(path, std::ios::trunc), enabled_(true) {
    if (!out_) fail(errc::io_error, "cannot write metrics log '" + path + "'");
  }

  void write(const nlohmann::json& entry) {
    if (!enabled_) return;
    out_ << entry.dump() << "\n";
    out_.flush();
  }

  bool enabled() const { return enabled_; }

 private:
  std::ofstream out_;
  bool enabled_ = false;
};

}  // namespace fgclep::pipeline
