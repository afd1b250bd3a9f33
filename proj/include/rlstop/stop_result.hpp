#pragma once

#include <cstddef>
#include <optional>
#include <string>

namespace rlstop {

/// Where a stopping method stopped on one topic.
struct StopResult {
  std::string topic_id;
  std::string method;
  double target_recall = 1.0;
  std::size_t docs_examined = 0;  // stop rank
  std::size_t relevant_found = 0;
  std::optional<std::size_t> stop_batch;
};

}  // namespace rlstop
