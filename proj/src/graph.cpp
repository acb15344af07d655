#include "dpmn/graph.hpp"

namespace dpmn {

namespace {
thread_local bool g_grad_mode = true;
thread_local bool g_verify_finite = true;
}  // namespace

bool grad_mode() { return g_grad_mode; }
void set_grad_mode(bool on) { g_grad_mode = on; }

bool verify_finite() { return g_verify_finite; }
void set_verify_finite(bool on) { g_verify_finite = on; }

}  // namespace dpmn
