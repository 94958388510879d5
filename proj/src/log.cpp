#include "neurochain/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <string>

namespace neurochain {

void init_logging() {
    auto logger = spdlog::stderr_color_mt("neurochain");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
    const char* env = std::getenv("NEUROCHAIN_LOG");
    auto level = spdlog::level::from_str(env ? std::string(env) : "warn");
    // from_str maps unknown names to off; keep warnings in that case.
    if (env && level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::warn;
    spdlog::set_level(level);
}

}  // namespace neurochain
