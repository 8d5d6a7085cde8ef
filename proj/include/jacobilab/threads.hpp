#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace jlab::num {

// Worker count for the heavy loops: JLAB_THREADS overrides (clamped to
// [1,64]); otherwise min(8, hardware_concurrency).  Chunked scheduling keeps
// results bit-identical across any value.
inline int worker_threads() {
  if (const char* env = std::getenv("JLAB_THREADS")) {
    long t = std::strtol(env, nullptr, 10);
    if (t >= 1) return static_cast<int>(t > 64 ? 64 : t);
  }
  unsigned hc = std::thread::hardware_concurrency();
  if (hc == 0) hc = 1;
  return static_cast<int>(hc > 8 ? 8 : hc);
}

// Deterministic chunked parallel reduce: work items [0,n) are cut into
// fixed-size chunks, chunks are claimed atomically but their results are
// combined strictly in chunk order, so the result is independent of the
// thread count.  threads <= 1 runs inline.
template <class T, class ChunkFn>
T parallel_reduce(std::size_t n, std::size_t chunk, int threads, T init,
                  ChunkFn per_chunk /* (begin, end) -> T */,
                  std::function<T(T, T)> combine) {
  if (n == 0) return init;
  std::size_t nchunks = (n + chunk - 1) / chunk;
  std::vector<T> partial(nchunks, init);
  if (threads <= 1) {
    for (std::size_t ci = 0; ci < nchunks; ++ci)
      partial[ci] = per_chunk(ci * chunk, std::min(n, (ci + 1) * chunk));
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (;;) {
        std::size_t ci = next.fetch_add(1);
        if (ci >= nchunks) return;
        partial[ci] = per_chunk(ci * chunk, std::min(n, (ci + 1) * chunk));
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  T acc = init;
  for (std::size_t ci = 0; ci < nchunks; ++ci) acc = combine(acc, partial[ci]);
  return acc;
}

inline void parallel_for(std::size_t n, std::size_t chunk, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t nchunks = (n + chunk - 1) / chunk;
  if (threads <= 1) {
    for (std::size_t ci = 0; ci < nchunks; ++ci)
      body(ci * chunk, std::min(n, (ci + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t ci = next.fetch_add(1);
      if (ci >= nchunks) return;
      body(ci * chunk, std::min(n, (ci + 1) * chunk));
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

}  // namespace jlab::num
