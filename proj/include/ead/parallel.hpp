#pragma once

#include <cstddef>
#include <functional>

namespace ead {

/// Runs independent indexed jobs on a fixed number of threads. Jobs must
/// write only to their own output slot; callers reduce the slots in index
/// order, which keeps every result independent of the worker count.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers = 1);

  std::size_t size() const { return workers_; }

  /// Calls body(i) for i in [0, count). The first exception thrown by any job
  /// is rethrown after all threads have joined.
  void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) const;

 private:
  std::size_t workers_;
};

}  // namespace ead
