#pragma once

#include <functional>

#include "greenlab/grid.hpp"

namespace greenlab {

/// Worker count for internal loops: GREENLAB_THREADS when set, else hardware concurrency.
int thread_count();

/// Runs body(worker, begin, end) over contiguous chunks of [0, count).
/// Each worker id is in [0, thread_count()) and owns its chunk exclusively.
void parallel_chunks(Index count, const std::function<void(int, Index, Index)>& body);

}  // namespace greenlab
