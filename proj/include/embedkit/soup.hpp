#pragma once

#include <string>
#include <vector>

#include "embedkit/checkpoint.hpp"

namespace embedkit {

struct SoupSpec {
    std::vector<std::string> inputs;
    std::string output;
};

// Elementwise arithmetic mean of structurally identical checkpoints. Per
// element the addend values are sorted and summed pairwise, so the result is
// bit-identical for any input ordering.
Checkpoint soup_checkpoints(const std::vector<Checkpoint>& inputs);
Checkpoint soup_checkpoints(const SoupSpec& spec);  // loads, averages, writes spec.output

}  // namespace embedkit
