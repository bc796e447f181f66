#pragma once

#include <string>
#include <vector>

#include "dkp/errors.hpp"

namespace dkp_test {

/// Captures library warnings for the duration of a scope.
class WarnCapture {
public:
    WarnCapture() {
        messages().clear();
        prev_ = dkp::set_warn_sink(&WarnCapture::sink);
    }
    ~WarnCapture() { dkp::set_warn_sink(prev_); }

    static std::vector<std::string>& messages() {
        static std::vector<std::string> msgs;
        return msgs;
    }

private:
    static void sink(const std::string& msg) { messages().push_back(msg); }
    dkp::WarnSink prev_;
};

}  // namespace dkp_test
