#pragma once

#include <string_view>

namespace sparsegate {

std::string_view engine_version();

}  // namespace sparsegate
