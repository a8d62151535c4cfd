#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgclep/errors.hpp"
#include "fgclep/model.hpp"
#include "fgclep/optimizer.hpp"
#include "fgclep/params.hpp"
#include "fgclep/vocab.hpp"

namespace fgclep::pipeline {

// Checkpoint file layout:
//   magic "FGCLEP01"
//   u32 little-endian manifest length
//   JSON manifest: version, stage, config, vocabulary, optimizer, ordered
//     tensor table of {name, shape, byte_offset}
//   concatenated f64 little-endian tensor payloads (column-major coefficients)
//   32-byte SHA-256 digest of everything preceding
inline constexpr char kCheckpointMagic[9] = "FGCLEP01";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  std::string stage;                 // "clep" | "fgclep"
  nlohmann::json config;             // snapshot; carries the model layout under "model"
  encoders::Vocabulary vocab;
  numerics::ParamStore params;
  bool has_optimizer = false;
  numerics::OptimizerState optimizer;
  std::array<unsigned char, 32> digest{};  // filled by save/load

  model::ModelConfig model_config() const {
    return model::ModelConfig::from_json(config.at("model"));
  }

  model::ModelView view() const { return model::ModelView{&params, model_config(), &vocab}; }
};

namespace detail {

inline std::array<unsigned char, 32> sha256_bytes(const unsigned char* data, std::size_t len) {
  std::array<unsigned char, 32> out{};
  unsigned int out_len = 0;
  if (EVP_Digest(data, len, out.data(), &out_len, EVP_sha256(), nullptr) != 1 || out_len != 32) {
    fail(errc::io_error, "digest computation failed");
  }
  return out;
}

inline void append_tensor(std::string& payload, const numerics::Mat& m) {
  const std::size_t bytes = static_cast<std::size_t>(m.size()) * 8;
  const std::size_t old = payload.size();
  payload.resize(old + bytes);
  std::memcpy(payload.data() + old, m.data(), bytes);
}

inline void read_tensor(const std::string& payload, std::size_t offset, numerics::Mat& m,
                        const std::string& name) {
  const std::size_t bytes = static_cast<std::size_t>(m.size()) * 8;
  if (offset + bytes > payload.size()) {
    fail(errc::truncation, "checkpoint payload too short for tensor '" + name + "'");
  }
  std::memcpy(m.data(), payload.data() + offset, bytes);
}

}  // namespace detail

inline std::string digest_hex(const std::array<unsigned char, 32>& digest) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (unsigned char b : digest) {
    out.push_back(hex[b >> 4]);
    out.push_back(hex[b & 0xf]);
  }
  return out;
}

// Serializes the full file image (digest included) and records the digest on
// the checkpoint.
inline std::string serialize_checkpoint(Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["version"] = ck.version;
  manifest["stage"] = ck.stage;
  manifest["config"] = ck.config;
  manifest["vocabulary"] = ck.vocab.to_json();
  if (ck.has_optimizer) {
    manifest["optimizer"] = {{"step", ck.optimizer.step},
                             {"beta1", ck.optimizer.hyper.beta1},
                             {"beta2", ck.optimizer.hyper.beta2},
                             {"eps", ck.optimizer.hyper.eps},
                             {"lr", ck.optimizer.hyper.lr},
                             {"weight_decay", ck.optimizer.hyper.weight_decay}};
  } else {
    manifest["optimizer"] = nullptr;
  }

  std::string payload;
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  auto add_entry = [&](const std::string& name, const numerics::Mat& m) {
    table.push_back({{"name", name},
                     {"shape", {m.rows(), m.cols()}},
                     {"byte_offset", offset}});
    detail::append_tensor(payload, m);
    offset += static_cast<std::size_t>(m.size()) * 8;
  };
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    add_entry(ck.params.tensor(i).name, ck.params.tensor(i).value);
  }
  if (ck.has_optimizer) {
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      add_entry("optim.m." + ck.params.tensor(i).name, ck.optimizer.m[i]);
    }
    for (std::size_t i = 0; i < ck.params.size(); ++i) {
      add_entry("optim.v." + ck.params.tensor(i).name, ck.optimizer.v[i]);
    }
  }
  manifest["tensors"] = table;

  const std::string manifest_str = manifest.dump();
  std::string blob;
  blob.reserve(12 + manifest_str.size() + payload.size() + 32);
  blob.append(kCheckpointMagic, 8);
  const std::uint32_t mlen = static_cast<std::uint32_t>(manifest_str.size());
  blob.append(reinterpret_cast<const char*>(&mlen), 4);
  blob += manifest_str;
  blob += payload;
  ck.digest = detail::sha256_bytes(reinterpret_cast<const unsigned char*>(blob.data()), blob.size());
  blob.append(reinterpret_cast<const char*>(ck.digest.data()), 32);
  return blob;
}

inline void save_checkpoint(Checkpoint& ck, const std::string& path) {
  const std::string blob = serialize_checkpoint(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(errc::io_error, "cannot write '" + tmp + "'");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(errc::io_error, "write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 44) fail(errc::format_error, "'" + path + "' is too short to be a checkpoint");
  if (std::memcmp(blob.data(), kCheckpointMagic, 8) != 0) {
    fail(errc::format_error, "'" + path + "' has bad magic bytes");
  }
  std::uint32_t mlen = 0;
  std::memcpy(&mlen, blob.data() + 8, 4);
  if (12 + static_cast<std::size_t>(mlen) + 32 > blob.size()) {
    fail(errc::truncation, "'" + path + "' manifest extends past the file");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(12, mlen));
  } catch (const nlohmann::json::exception& e) {
    fail(errc::format_error, "'" + path + "' manifest: " + e.what());
  }

  Checkpoint ck;
  ck.version = manifest.at("version").get<int>();
  if (ck.version != kCheckpointVersion) {
    fail(errc::version_mismatch, "'" + path + "' is format version " +
                                     std::to_string(ck.version) + ", this build reads version " +
                                     std::to_string(kCheckpointVersion));
  }

  const std::array<unsigned char, 32> expected = detail::sha256_bytes(
      reinterpret_cast<const unsigned char*>(blob.data()), blob.size() - 32);
  if (std::memcmp(expected.data(), blob.data() + blob.size() - 32, 32) != 0) {
    fail(errc::corruption, "'" + path + "' digest mismatch; the file is corrupt");
  }
  ck.digest = expected;

  ck.stage = manifest.at("stage").get<std::string>();
  ck.config = manifest.at("config");
  ck.vocab = encoders::Vocabulary::from_json(manifest.at("vocabulary"));

  const std::string payload = blob.substr(12 + mlen, blob.size() - 12 - mlen - 32);
  std::vector<std::pair<std::string, std::size_t>> opt_entries;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const std::size_t offset = entry.at("byte_offset").get<std::size_t>();
    if (shape.size() != 2) fail(errc::format_error, "tensor '" + name + "' has a bad shape");
    if (name.rfind("optim.", 0) == 0) {
      opt_entries.emplace_back(name, offset);
      continue;
    }
    numerics::Mat& m = ck.params.add(name, shape[0], shape[1]);
    detail::read_tensor(payload, offset, m, name);
  }
  if (!manifest.at("optimizer").is_null()) {
    ck.has_optimizer = true;
    const auto& opt = manifest.at("optimizer");
    numerics::OptimizerHyper hyper;
    hyper.lr = opt.at("lr").get<double>();
    hyper.beta1 = opt.at("beta1").get<double>();
    hyper.beta2 = opt.at("beta2").get<double>();
    hyper.eps = opt.at("eps").get<double>();
    hyper.weight_decay = opt.at("weight_decay").get<double>();
    ck.optimizer = numerics::OptimizerState(ck.params, hyper);
    ck.optimizer.step = opt.at("step").get<long>();
    for (const auto& [name, offset] : opt_entries) {
      const bool is_m = name.rfind("optim.m.", 0) == 0;
      const std::string base = name.substr(8);
      if (!ck.params.has(base)) {
        fail(errc::format_error, "optimizer tensor '" + name + "' has no matching parameter");
      }
      for (std::size_t i = 0; i < ck.params.size(); ++i) {
        if (ck.params.tensor(i).name == base) {
          detail::read_tensor(payload, offset, is_m ? ck.optimizer.m[i] : ck.optimizer.v[i], name);
          break;
        }
      }
    }
  }
  return ck;
}

}  // namespace fgclep::pipeline
