#pragma once

#include <string>
#include <vector>

namespace embedkit {

// Byte-level vocabulary: ids 0..255 are raw bytes, 256 pads, 257 marks
// sequence start. Content is left-aligned; pads only ever trail.
constexpr int kPadId = 256;
constexpr int kBosId = 257;
constexpr int kVocabSize = 258;

struct TokenSeq {
    std::vector<int> ids;

    int length() const { return static_cast<int>(ids.size()); }
    int valid_length() const;  // tokens before the first pad
};

TokenSeq tokenize(const std::string& text, int max_seq_len);
std::string detokenize(const TokenSeq& seq);

}  // namespace embedkit
