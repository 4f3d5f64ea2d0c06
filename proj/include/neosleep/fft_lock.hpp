#pragma once

#include <mutex>

namespace neosleep {

/// fftw's planner is not re-entrant; every plan create/destroy goes
/// through this lock.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace neosleep
