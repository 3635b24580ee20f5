#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kinfer {

// Invalid configuration, parameters or inputs. The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integration failure, non-finite evaluation, degenerate linear system. Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Deterministic 64-bit seed for the substream (seed, purpose, index).
std::uint64_t substream_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

// Worker count: explicit value if > 0, else KINFER_THREADS, else hardware concurrency.
unsigned resolve_threads(unsigned requested);

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// thrown by any task (lowest index) is rethrown after all workers join.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace kinfer
