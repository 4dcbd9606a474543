#include "ctrw/parallel.hpp"

#include <cstdlib>
#include <string>

namespace ctrw {

std::size_t default_workers() {
    if (const char* env = std::getenv("CTRW_WORKERS"); env && *env) {
        try {
            const long long n = std::stoll(env);
            if (n >= 1) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
        }
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

}  // namespace ctrw
