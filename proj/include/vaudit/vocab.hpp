// vocab.hpp -- fixed vocabulary: control ids, 256 byte-fallback ids, then
// whitespace word pieces. The text tokenizer never emits a control id, so
// rendered prompts can rely on delimiters being unforgeable.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "vaudit/io.hpp"

namespace vaudit {

struct Vocab {
  static constexpr int32_t PAD = 0;
  static constexpr int32_t BOS = 1;
  static constexpr int32_t EOS = 2;
  static constexpr int32_t SYS_OPEN = 3;
  static constexpr int32_t SYS_CLOSE = 4;
  static constexpr int32_t USER_OPEN = 5;
  static constexpr int32_t USER_CLOSE = 6;
  static constexpr int32_t ASSIST = 7;
  static constexpr int32_t BYTE_BASE = 8;    // ids 8..263 are raw bytes
  static constexpr int32_t WORD_BASE = 264;

  std::vector<std::string> words;
  std::map<std::string, int32_t> word_ids;

  explicit Vocab(std::vector<std::string> wordlist) : words(std::move(wordlist)) {
    for (size_t i = 0; i < words.size(); ++i) {
      if (words[i].empty() || words[i].find_first_of(" \t\r\n") != std::string::npos)
        fail("E_CONFIG", "vocabulary word contains whitespace: '" + words[i] + "'");
      if (!word_ids.emplace(words[i], WORD_BASE + static_cast<int32_t>(i)).second)
        fail("E_CONFIG", "duplicate vocabulary word: " + words[i]);
    }
  }

  int32_t size() const { return WORD_BASE + static_cast<int32_t>(words.size()); }

  // whitespace split; known words map to word ids, anything else to its bytes
  std::vector<int32_t> encode(const std::string& text) const {
    std::vector<int32_t> out;
    size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      if (j > i) {
        std::string w = text.substr(i, j - i);
        auto it = word_ids.find(w);
        if (it != word_ids.end()) {
          out.push_back(it->second);
        } else {
          for (unsigned char c : w) out.push_back(BYTE_BASE + static_cast<int32_t>(c));
        }
      }
      i = j;
    }
    return out;
  }

  // inverse of encode for single-space separated text; control ids flush the
  // pending byte run and emit nothing
  std::string decode(const std::vector<int32_t>& ids) const {
    std::string out, pending;
    auto flush = [&] {
      if (pending.empty()) return;
      if (!out.empty()) out += ' ';
      out += pending;
      pending.clear();
    };
    for (int32_t id : ids) {
      if (id >= WORD_BASE && id < size()) {
        flush();
        if (!out.empty()) out += ' ';
        out += words[static_cast<size_t>(id - WORD_BASE)];
      } else if (id >= BYTE_BASE && id < WORD_BASE) {
        pending += static_cast<char>(id - BYTE_BASE);
      } else {
        flush();
      }
    }
    flush();
    return out;
  }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  }
};

}  // namespace vaudit
