#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgclep/corpus.hpp"
#include "fgclep/errors.hpp"

namespace fgclep::corpus {

static_assert(std::endian::native == std::endian::little,
              "signal blobs are little-endian; big-endian hosts are unsupported");

// On-disk layout: <name>.jsonl holds one JSON object per record; <name>.sig is
// a 16-byte header (magic "ECGSIG01", u32 record count, u32 samples per lead)
// followed by record-major, lead-major f64 samples. The lead count is implied
// by the payload size.
inline constexpr char kSigMagic[9] = "ECGSIG01";

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.write(buf, 4);
}

inline std::uint32_t read_u32(std::istream& in) {
  char buf[4];
  in.read(buf, 4);
  std::uint32_t v = 0;
  std::memcpy(&v, buf, 4);
  return v;
}

inline std::size_t word_count(const std::string& text) {
  std::istringstream iss(text);
  std::size_t n = 0;
  std::string w;
  while (iss >> w) ++n;
  return n;
}

// Reads the header and signal matrices. `declared_records` (when >= 0) is the
// record count the caller expects from a companion manifest.
inline std::vector<Eigen::MatrixXd> read_sig(const std::string& path, long declared_records) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kSigMagic, 8) != 0) {
    fail(errc::format_error, "'" + path + "' has bad magic bytes");
  }
  const std::uint32_t n_records = read_u32(in);
  const std::uint32_t samples = read_u32(in);
  if (!in) fail(errc::format_error, "'" + path + "' header truncated");
  if (n_records == 0 || samples == 0) {
    fail(errc::format_error, "'" + path + "' declares an empty blob");
  }
  if (declared_records >= 0 && declared_records != static_cast<long>(n_records)) {
    fail(errc::consistency, "'" + path + "' holds " + std::to_string(n_records) +
                                " records but the manifest declares " +
                                std::to_string(declared_records));
  }
  const std::uintmax_t file_size = std::filesystem::file_size(path);
  const std::uintmax_t payload = file_size - 16;
  const std::uintmax_t record_floats = static_cast<std::uintmax_t>(samples);
  const std::uintmax_t per_lead_bytes = record_floats * 8;
  const std::uintmax_t full_record_unit = per_lead_bytes * n_records;
  std::uintmax_t lead_count = payload / full_record_unit;
  if (lead_count * full_record_unit != payload || lead_count < 2 || lead_count > 12) {
    // Truncated payload: infer the intended lead count by rounding up, then
    // name the first incomplete record.
    const std::uintmax_t lead_guess = (payload + full_record_unit - 1) / full_record_unit;
    const std::uintmax_t record_bytes = per_lead_bytes * std::max<std::uintmax_t>(lead_guess, 2);
    const std::uintmax_t complete = payload / record_bytes;
    fail(errc::truncation, "'" + path + "' signal blob is shorter than declared; record " +
                               std::to_string(complete) + " is incomplete");
  }
  std::vector<Eigen::MatrixXd> signals;
  signals.reserve(n_records);
  std::vector<double> row(samples);
  for (std::uint32_t r = 0; r < n_records; ++r) {
    Eigen::MatrixXd sig(static_cast<int>(lead_count), static_cast<int>(samples));
    for (std::uintmax_t l = 0; l < lead_count; ++l) {
      in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(per_lead_bytes));
      if (!in) {
        fail(errc::truncation,
             "'" + path + "' signal blob is shorter than declared; record " + std::to_string(r) +
                 " is incomplete");
      }
      for (std::uint32_t s = 0; s < samples; ++s) sig(static_cast<int>(l), s) = row[s];
    }
    signals.push_back(std::move(sig));
  }
  return signals;
}

inline void write_sig(const std::string& path, const Corpus& corpus) {
  if (corpus.records.empty()) fail(errc::config_error, "refusing to write an empty corpus");
  const auto& first = corpus.records.front().ecg.signal;
  for (const auto& rec : corpus.records) {
    if (rec.ecg.signal.rows() != first.rows() || rec.ecg.signal.cols() != first.cols()) {
      fail(errc::consistency, "records have mismatched signal shapes");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot write '" + path + "'");
  out.write(kSigMagic, 8);
  write_u32(out, static_cast<std::uint32_t>(corpus.records.size()));
  write_u32(out, static_cast<std::uint32_t>(first.cols()));
  std::vector<double> row(static_cast<std::size_t>(first.cols()));
  for (const auto& rec : corpus.records) {
    for (int l = 0; l < rec.ecg.signal.rows(); ++l) {
      for (int s = 0; s < rec.ecg.signal.cols(); ++s) row[static_cast<std::size_t>(s)] = rec.ecg.signal(l, s);
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * 8));
    }
  }
  if (!out) fail(errc::io_error, "write to '" + path + "' failed");
}

}  // namespace detail

inline void save_corpus(const Corpus& corpus, const std::string& base_path) {
  const std::string jsonl_path = base_path + ".jsonl";
  std::ofstream out(jsonl_path, std::ios::trunc);
  if (!out) fail(errc::io_error, "cannot write '" + jsonl_path + "'");
  for (const auto& rec : corpus.records) {
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["split"] = split_name(rec.split);
    j["report"] = rec.report.text;
    j["diagnoses"] = rec.report.diagnoses;
    j["true_features"] = rec.ecg.true_features;
    j["mentioned_features"] = rec.report.mentioned_features;
    j["seed"] = rec.ecg.seed;
    out << j.dump() << "\n";
  }
  if (!out) fail(errc::io_error, "write to '" + jsonl_path + "' failed");
  out.close();
  detail::write_sig(base_path + ".sig", corpus);
}

inline Corpus load_corpus(const std::string& base_path, double sample_rate_hint = 100.0) {
  const std::string jsonl_path = base_path + ".jsonl";
  std::ifstream in(jsonl_path);
  if (!in) fail(errc::io_error, "cannot open '" + jsonl_path + "'");
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(errc::format_error, "'" + jsonl_path + "': " + e.what());
    }
    Record rec;
    try {
      rec.id = j.at("id").get<int>();
      rec.split = split_from_name(j.at("split").get<std::string>());
      rec.report.text = j.at("report").get<std::string>();
      rec.report.diagnoses = j.at("diagnoses").get<std::vector<std::string>>();
      rec.ecg.true_features = j.at("true_features").get<std::vector<int>>();
      rec.report.mentioned_features = j.at("mentioned_features").get<std::vector<int>>();
      rec.ecg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(errc::format_error, "'" + jsonl_path + "' record: " + e.what());
    }
    corpus.records.push_back(std::move(rec));
  }
  auto signals = detail::read_sig(base_path + ".sig", static_cast<long>(corpus.records.size()));
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    corpus.records[i].ecg.signal = std::move(signals[i]);
    corpus.records[i].ecg.lead_count = static_cast<int>(corpus.records[i].ecg.signal.rows());
    corpus.records[i].ecg.sample_rate = sample_rate_hint;
  }
  return corpus;
}

struct ImportNotice {
  int line;  // 0-based index into the reports file
  std::string message;
};

// Pairs a signal blob with a plain-text reports file (one report per line).
// Ground-truth features are unknown; splits are assigned 70/10/20 in record
// order after cleaning.
inline Corpus import_pairs(const std::string& sig_path, const std::string& reports_path,
                           std::vector<ImportNotice>* notices = nullptr,
                           double sample_rate_hint = 100.0) {
  auto signals = detail::read_sig(sig_path, -1);
  std::ifstream in(reports_path);
  if (!in) fail(errc::io_error, "cannot open '" + reports_path + "'");
  std::vector<std::string> reports;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    reports.push_back(line);
  }
  if (reports.size() != signals.size()) {
    fail(errc::consistency, "signal blob holds " + std::to_string(signals.size()) +
                                " records but '" + reports_path + "' has " +
                                std::to_string(reports.size()) + " report lines");
  }
  Corpus corpus;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (detail::word_count(reports[i]) < 3) {
      if (notices) {
        notices->push_back({static_cast<int>(i),
                            "record " + std::to_string(i) +
                                " rejected: report has fewer than three words"});
      }
      continue;
    }
    Record rec;
    rec.id = static_cast<int>(corpus.records.size());
    rec.ecg.signal = std::move(signals[i]);
    rec.ecg.lead_count = static_cast<int>(rec.ecg.signal.rows());
    rec.ecg.sample_rate = sample_rate_hint;
    rec.ecg.seed = 0;
    rec.report.text = reports[i];
    corpus.records.push_back(std::move(rec));
  }
  const int n = static_cast<int>(corpus.records.size());
  const int n_train = n * 7 / 10;
  const int n_valid = n / 10;
  for (int i = 0; i < n; ++i) {
    corpus.records[static_cast<std::size_t>(i)].split =
        i < n_train ? Split::train : (i < n_train + n_valid ? Split::valid : Split::test);
  }
  return corpus;
}

}  // namespace fgclep::corpus
