#pragma once

#include <string>
#include <string_view>

namespace xgkit {

// Whole-file helpers; failures raise IoError naming the path.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

// Shortest decimal text that parses back to the same double.
std::string format_real(double v);

} // namespace xgkit
