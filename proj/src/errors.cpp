#include "dkp/errors.hpp"

#include <iostream>

namespace dkp {

namespace {
void default_sink(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }
WarnSink g_sink = &default_sink;
}  // namespace

void warn(const std::string& msg) { g_sink(msg); }

WarnSink set_warn_sink(WarnSink sink) {
    WarnSink prev = g_sink;
    g_sink = sink ? sink : &default_sink;
    return prev;
}

}  // namespace dkp
