#include "epan/tensor.hpp"

namespace epan {

namespace {
thread_local bool g_autograd_enabled = true;
}

bool autograd_enabled() { return g_autograd_enabled; }

void set_autograd_enabled(bool enabled) { g_autograd_enabled = enabled; }

} // namespace epan
