#include "reflectsim/parallel.hpp"

#include <cstdlib>
#include <string>

namespace reflectsim {

std::size_t default_workers() {
  if (const char* env = std::getenv("REFLECTSIM_WORKERS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace reflectsim
