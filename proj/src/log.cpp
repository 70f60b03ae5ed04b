#include "hashodf/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

namespace hashodf {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_color_mt("hashodf");
    l->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    return l;
  }();
  return *instance;
}

}  // namespace hashodf
