#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace weedid::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 when the operation fails and 2 on a usage error, in which case the
/// grammar is printed to `err` and no files are written.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace weedid::cli
