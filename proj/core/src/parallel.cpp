#include "fedcast/parallel.hpp"

#include <cstdlib>

#include "fedcast/format.hpp"

namespace fedcast {

unsigned default_thread_count() {
  if (const char *env = std::getenv("LEC_FEDCAST_THREADS")) {
    unsigned n = 0;
    if (parse_number(env, n) && n > 0) {
      return n;
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace fedcast
