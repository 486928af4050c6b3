#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmtl/config.hpp"
#include "dmtl/metrics.hpp"
#include "dmtl/network.hpp"
#include "dmtl/synthdata.hpp"

namespace dmtl {

enum class Protocol {
  verification,   // cross-modal pairs: VAL@FAR=0.1%, VAL@FAR=1%, AUC
  c2p,            // modality-A probes against the modality-B gallery
  p2c,            // the reverse direction
  identification  // per-task classifier accuracy
};

std::string_view to_string(Protocol p);
Protocol parse_protocol(std::string_view name);

struct EvalOptions {
  std::size_t folds = 10;
  std::size_t pairs = 600;  // verification only; must be even
  std::uint64_t seed = 0;
  Similarity similarity = Similarity::cosine;
  // Branch whose bottleneck supplies embeddings; defaults to the first
  // verification task, else task 0.
  std::optional<std::size_t> embedding_task{};
};

struct MetricSummary {
  std::string name;
  std::vector<double> per_fold;
  FoldSummary summary;
};

struct EvalReport {
  Protocol protocol = Protocol::verification;
  std::vector<MetricSummary> metrics;
};

/// Throws CheckpointError when the model cannot consume `data` or does not
/// have one branch per task.
void check_compatible(const ModelParams& model, const Dataset& data, const std::vector<TaskSpec>& tasks);

EvalReport evaluate(const ModelParams& model, const Dataset& data, const std::vector<TaskSpec>& tasks,
                    Protocol protocol, const EvalOptions& options = {});

/// "metric,mean,std,formatted" with the formatted column as percentages
/// ("45.82±1.65").
std::string format_report(const EvalReport& report);

}  // namespace dmtl
