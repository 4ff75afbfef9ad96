#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "survclf/core/error.hpp"

namespace survclf::cohort {

// An ICD-10 style code pattern:
//   "E11"           prefix
//   "I10-I13"       inclusive range over the leading characters
//   "[E08-E13].22"  range over the category followed by a required suffix prefix
class CodePattern {
 public:
  static CodePattern parse(std::string_view text) {
    std::string s = normalize(text);
    if (s.empty()) throw ConfigError("empty code pattern");
    CodePattern p;
    p.text_ = s;
    std::string range = s;
    if (s.front() == '[') {
      const auto close = s.find(']');
      if (close == std::string::npos) throw ConfigError("unbalanced '[' in code pattern " + s);
      range = s.substr(1, close - 1);
      p.suffix_ = s.substr(close + 1);
      if (range.find('-') == std::string::npos) {
        throw ConfigError("bracketed code pattern needs a range: " + s);
      }
    }
    const auto dash = range.find('-');
    if (dash == std::string::npos) {
      p.low_ = p.high_ = range;
    } else {
      p.low_ = range.substr(0, dash);
      p.high_ = range.substr(dash + 1);
      if (p.low_.size() != p.high_.size() || p.low_.empty() || p.high_ < p.low_) {
        throw ConfigError("invalid code range " + s);
      }
    }
    return p;
  }

  bool matches(std::string_view raw_code) const {
    const std::string code = normalize(raw_code);
    const std::size_t n = low_.size();
    if (code.size() < n) return false;
    const std::string_view head(code.data(), n);
    if (head < low_ || head > high_) return false;
    return std::string_view(code).substr(n).starts_with(suffix_);
  }

  const std::string& text() const { return text_; }

  static std::string normalize(std::string_view s) {
    std::string out;
    for (char c : s) {
      if (!std::isspace(static_cast<unsigned char>(c))) {
        out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
    }
    return out;
  }

 private:
  std::string text_, low_, high_, suffix_;
};

class CodeSet {
 public:
  CodeSet() = default;
  explicit CodeSet(std::vector<CodePattern> patterns) : patterns_(std::move(patterns)) {}

  // Accepts entries that are themselves comma lists: "N18, I12, [E08-E13].22".
  static CodeSet parse(const std::vector<std::string>& entries) {
    std::vector<CodePattern> out;
    for (const auto& e : entries) {
      std::size_t start = 0;
      while (start <= e.size()) {
        const auto comma = e.find(',', start);
        const auto piece = e.substr(start, comma == std::string::npos ? comma : comma - start);
        if (!CodePattern::normalize(piece).empty()) out.push_back(CodePattern::parse(piece));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    return CodeSet{std::move(out)};
  }

  bool matches(std::string_view code) const {
    return std::any_of(patterns_.begin(), patterns_.end(),
                       [&](const CodePattern& p) { return p.matches(code); });
  }
  bool empty() const { return patterns_.empty(); }
  const std::vector<CodePattern>& patterns() const { return patterns_; }

 private:
  std::vector<CodePattern> patterns_;
};

}  // namespace survclf::cohort
