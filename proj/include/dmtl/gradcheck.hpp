#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dmtl {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t instances = 100;
  double eps = 1e-5;
  double tolerance = 1e-5;
  // Corrupts the backward rule of this tape op in every check.
  std::optional<std::string> fault_op{};
};

struct GradcheckEntry {
  std::string op;
  std::size_t instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  bool passed() const;
};

/// Every registered differentiable operation: the tape primitives, the loss
/// and weight-module compositions, a two-layer network, and the closed-form
/// L4 and total-loss gradients against reverse mode (tolerance 1e-12).
std::vector<std::string> gradcheck_ops();

GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

/// "op,instances,max_rel_error,tolerance,status" lines.
std::string format_gradcheck(const GradcheckReport& report);

}  // namespace dmtl
