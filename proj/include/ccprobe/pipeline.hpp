#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ccprobe/io.hpp"

namespace ccprobe::pipeline {

using io::Json;

/// Every recognised key with its default value.
Json default_config();

/// Merge `overrides` onto the defaults. Unknown keys and type mismatches
/// are rejected; relative paths are resolved against `base_dir`.
Json merge_config(const Json& overrides, const std::filesystem::path& base_dir = {});
Json load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical (sorted-key) dump, without output_dir.
std::string config_hash(const Json& config);

/// Entry point of the `ccprobe` tool. Errors are written to `err` as
/// {"error":{"code","message"}} and give a nonzero status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ccprobe::pipeline
