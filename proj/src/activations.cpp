#include "sparsegate/activations.hpp"

#include <charconv>

#include <fmt/format.h>

namespace sparsegate {

ActivationKind ActivationKind::shifted_relu(double threshold) {
  if (!std::isfinite(threshold) || threshold < 0.0) {
    throw DomainError(fmt::format("shifted_relu threshold must be finite and >= 0, got {}", threshold));
  }
  return ActivationKind(ActivationTag::shifted_relu, threshold);
}

ActivationKind ActivationKind::parse(std::string_view text) {
  if (text == "swiglu") return swiglu();
  if (text == "reglu") return reglu();
  if (text == "drelu") return drelu();
  if (text == "shifted_relu") return shifted_relu(0.0);
  constexpr std::string_view prefix = "shifted_relu:";
  if (text.starts_with(prefix)) {
    const auto arg = text.substr(prefix.size());
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), value);
    if (ec != std::errc() || ptr != arg.data() + arg.size()) {
      throw DomainError(fmt::format("bad shifted_relu threshold '{}'", arg));
    }
    return shifted_relu(value);
  }
  throw DomainError(fmt::format("unknown activation '{}'", text));
}

std::string ActivationKind::name() const {
  switch (tag_) {
    case ActivationTag::swiglu:
      return "swiglu";
    case ActivationTag::reglu:
      return "reglu";
    case ActivationTag::shifted_relu:
      return "shifted_relu";
    case ActivationTag::drelu:
      return "drelu";
  }
  return "unknown";
}

std::string ActivationKind::to_string() const {
  if (tag_ == ActivationTag::shifted_relu) return fmt::format("shifted_relu:{}", threshold_);
  return name();
}

}  // namespace sparsegate
