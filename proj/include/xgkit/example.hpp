#pragma once

#include "xgkit/tokenizer.hpp"

#include <string>

namespace xgkit {

// One (encoder input, decoder target) pair. Targets never include EOS;
// the model appends it during training.
struct TaskExample {
    TokenIds inputs;
    TokenIds targets;
    std::string task;
    std::string language;

    bool operator==(const TaskExample&) const = default;
};

} // namespace xgkit
