#include "embedkit/tokenizer.hpp"

#include <stdexcept>

namespace embedkit {

int TokenSeq::valid_length() const {
    int n = 0;
    while (n < length() && ids[static_cast<std::size_t>(n)] != kPadId) ++n;
    return n;
}

TokenSeq tokenize(const std::string& text, int max_seq_len) {
    if (max_seq_len < 1) throw std::invalid_argument("tokenize: max_seq_len must be >= 1");
    TokenSeq seq;
    seq.ids.reserve(static_cast<std::size_t>(max_seq_len));
    seq.ids.push_back(kBosId);
    for (unsigned char b : text) {
        if (seq.length() >= max_seq_len) break;
        seq.ids.push_back(static_cast<int>(b));
    }
    while (seq.length() < max_seq_len) seq.ids.push_back(kPadId);
    return seq;
}

std::string detokenize(const TokenSeq& seq) {
    std::string out;
    for (int id : seq.ids) {
        if (id == kPadId || id == kBosId) continue;
        if (id < 0 || id > 255) throw std::invalid_argument("detokenize: id out of byte range");
        out.push_back(static_cast<char>(static_cast<unsigned char>(id)));
    }
    return out;
}

}  // namespace embedkit
