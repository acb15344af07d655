#pragma once

#include <cstdlib>
#include <string>

#include "dpmn/rng.hpp"
#include "dpmn/tensor.hpp"

namespace testutil {

template <typename T = double>
dpmn::Tensor<T> rand_tensor(dpmn::Shape shape, dpmn::Rng& rng, double lo = -1.0, double hi = 1.0) {
    return dpmn::Tensor<T>::uniform(std::move(shape), rng, lo, hi);
}

inline std::string source_dir() {
    const char* d = std::getenv("DPMN_SOURCE_DIR");
    return d ? d : ".";
}

inline std::string tmp_dir(const std::string& name) {
    const std::string dir = "dpmn_test_" + name;
    std::system(("rm -rf " + dir + " && mkdir -p " + dir).c_str());
    return dir;
}

}  // namespace testutil
