#include "greenlab/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace greenlab {

int thread_count() {
  if (const char* env = std::getenv("GREENLAB_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(Index count, const std::function<void(int, Index, Index)>& body) {
  const int workers = static_cast<int>(std::min<Index>(thread_count(), std::max<Index>(count, 1)));
  if (workers <= 1) {
    body(0, 0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Index chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Index b = std::min(count, w * chunk);
    const Index e = std::min(count, b + chunk);
    pool.emplace_back([&body, w, b, e] { body(w, b, e); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace greenlab
