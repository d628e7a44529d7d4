#pragma once

#include <string_view>

namespace ccprobe {

/// Data files compiled into the library, keyed by their path under data/
/// ("grammars/train.cfg", "grammars/test.cfg", "lexicon.json", "exclusions.txt").
std::string_view bundled_text(std::string_view key);

}  // namespace ccprobe
