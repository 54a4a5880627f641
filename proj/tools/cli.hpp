#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace agenda::cli {

/// Entry point of `agenda-infer`. Returns the process exit code:
/// 0 success, 1 runtime error, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace agenda::cli
