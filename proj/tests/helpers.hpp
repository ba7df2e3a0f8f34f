#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "fundsel/error.hpp"

namespace testing_util {

/// Kind of the fundsel::Error thrown by `f`; records a failure if none is thrown.
template <typename F>
fundsel::ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const fundsel::Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected a fundsel::Error";
    return fundsel::ErrorKind::InvalidArgument;
}

/// Whole file as bytes; empty when the file cannot be opened.
inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace testing_util
