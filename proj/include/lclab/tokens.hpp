#pragma once

#include <filesystem>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lclab/model.hpp"

namespace lclab {

// Byte-level tokenizer: byte b becomes id b. Requires vocab_size >= 256.
TokenSequence tokenize_bytes(std::string_view text, std::size_t vocab_size = 256);

// Token file text: one sequence per line, space-separated decimal ids.
// Blank lines are skipped. Throws IngestionError on a malformed id or one
// outside [0, vocab_size).
std::vector<TokenSequence> parse_token_text(std::string_view text, std::size_t vocab_size);
std::vector<TokenSequence> load_token_file(const std::filesystem::path& path, std::size_t vocab_size);

// Deterministic encyclopedia-flavoured filler text (section headings, sentences
// built from a fixed word list) used when no corpus file is supplied.
std::string synthetic_text(std::uint64_t seed, std::size_t min_bytes);

}  // namespace lclab
