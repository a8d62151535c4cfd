#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fgclep/corpus.hpp"
#include "fgclep/errors.hpp"

namespace fgclep::encoders {

// Word vocabulary over lowercase alphanumeric runs. Id 0 is the unknown word.
struct Vocabulary {
  std::map<std::string, int> word_to_id;  // excludes the unknown id

  static constexpr int kUnknownId = 0;

  int size() const { return static_cast<int>(word_to_id.size()) + 1; }

  int id_of(const std::string& word) const {
    auto it = word_to_id.find(word);
    return it == word_to_id.end() ? kUnknownId : it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [w, id] : word_to_id) j[w] = id;
    return j;
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    Vocabulary v;
    for (auto it = j.begin(); it != j.end(); ++it) {
      const int id = it.value().get<int>();
      if (id <= 0) fail(errc::format_error, "vocabulary ids must be positive");
      v.word_to_id[it.key()] = id;
    }
    return v;
  }
};

inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

// Train-split words ordered by frequency (descending), ties broken
// lexicographically, capped at max_size entries including the unknown id.
inline Vocabulary build_vocabulary(const corpus::Corpus& corpus, int max_size = 5000) {
  std::map<std::string, long> counts;
  for (const auto& rec : corpus.records) {
    if (rec.split != corpus::Split::train) continue;
    for (auto& w : split_words(rec.report.text)) counts[w] += 1;
  }
  std::vector<std::pair<std::string, long>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  int next_id = 1;
  for (const auto& [word, count] : ordered) {
    if (next_id >= max_size) break;
    v.word_to_id[word] = next_id++;
  }
  return v;
}

inline std::vector<int> tokenize(const Vocabulary& vocab, std::string_view text) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id_of(w));
  return ids;
}

}  // namespace fgclep::encoders
