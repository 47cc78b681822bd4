#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "vtsmp/problem.hpp"

namespace vtsmp {

using Json = nlohmann::ordered_json;

/// Pretty-printed JSON with every double written as %.17g, so equal inputs give
/// byte-equal files. Non-finite numbers become null.
std::string dump_json(const Json& value);

Json vector_json(const Vector& v);

/// Writes `content` to `path`, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace vtsmp
