#include "sparsegate/version.hpp"

namespace sparsegate {

std::string_view engine_version() { return SPARSEGATE_VERSION; }

}  // namespace sparsegate
