#include "lclab/tokens.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "lclab/errors.hpp"
#include "lclab/rng.hpp"

namespace lclab {

TokenSequence tokenize_bytes(std::string_view text, std::size_t vocab_size) {
  if (vocab_size < 256) throw ConfigError("byte tokenizer needs vocab_size >= 256");
  TokenSequence ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
  return ids;
}

std::vector<TokenSequence> parse_token_text(std::string_view text, std::size_t vocab_size) {
  std::vector<TokenSequence> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    TokenSequence seq;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
      if (pos == line.size()) break;
      std::int64_t id = 0;
      const auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + line.size(), id);
      const auto end = static_cast<std::size_t>(ptr - line.data());
      if (ec != std::errc{} || (end < line.size() && line[end] != ' ' && line[end] != '\t')) {
        throw IngestionError("token file line " + std::to_string(line_no) + ": malformed id");
      }
      if (id < 0 || static_cast<std::uint64_t>(id) >= vocab_size) {
        throw IngestionError("token file line " + std::to_string(line_no) + ": id " + std::to_string(id) +
                             " outside vocabulary of " + std::to_string(vocab_size));
      }
      seq.push_back(static_cast<std::int32_t>(id));
      pos = end;
    }
    if (!seq.empty()) out.push_back(std::move(seq));
  }
  return out;
}

std::vector<TokenSequence> load_token_file(const std::filesystem::path& path, std::size_t vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open token file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_token_text(ss.str(), vocab_size);
}

namespace {

constexpr std::array<std::string_view, 64> kWords = {
    "the",     "of",       "and",     "in",      "a",        "to",      "was",      "is",
    "for",     "on",       "as",      "by",      "with",     "from",    "his",      "at",
    "that",    "which",    "first",   "after",   "during",   "season",  "album",    "river",
    "city",    "army",     "church",  "series",  "station",  "game",    "team",     "record",
    "released", "built",   "played",  "between", "national", "century", "known",    "number",
    "world",   "state",    "new",     "two",     "three",    "final",   "early",    "later",
    "south",   "north",    "battle",  "song",    "school",   "film",    "episode",  "line",
    "ship",    "storm",    "village", "county",  "bridge",   "war",     "division", "group"};

std::string capitalized(std::string_view w) {
  std::string s(w);
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

std::string synthetic_text(std::uint64_t seed, std::size_t min_bytes) {
  Rng rng(seed);
  std::string text;
  auto word = [&]() { return kWords[rng.uniform_below(kWords.size())]; };
  while (text.size() < min_bytes) {
    text += " = ";
    const auto n_title = 1 + rng.uniform_below(3);
    for (std::uint64_t i = 0; i < n_title; ++i) {
      if (i) text += ' ';
      text += capitalized(word());
    }
    text += " = \n";
    const auto n_paragraphs = 1 + rng.uniform_below(3);
    for (std::uint64_t p = 0; p < n_paragraphs && text.size() < min_bytes; ++p) {
      const auto n_sentences = 2 + rng.uniform_below(5);
      for (std::uint64_t s = 0; s < n_sentences; ++s) {
        const auto n = 5 + rng.uniform_below(14);
        text += ' ';
        text += capitalized(word());
        for (std::uint64_t w = 1; w < n; ++w) {
          text += ' ';
          if (rng.uniform() < 0.06) {
            text += std::to_string(1800 + rng.uniform_below(220));
          } else {
            text += word();
          }
          if (w + 1 < n && rng.uniform() < 0.08) text += " ,";
        }
        text += " .";
      }
      text += " \n";
    }
  }
  return text;
}

}  // namespace lclab
